#!/usr/bin/env python3

import argparse
import json
import logging
import os
import sys
import time

from config.settings import ConfigError, get_setting, load_settings, save_settings, update_setting
from hypergraph.dataset import TASKS, load_dataset, save_dataset, split_dataset
from hypergraph.generator import DegenerateSpec, SyntheticSpec, generate_planted, planted_factor_oracle
from metrics.evaluation import (
    cluster_similarity, factor_recovery_score, pairwise_relevance_similarity, pearson_factor_correlation
)
from model.checkpoint import load_params, save_params
from model.network import VARIANTS, ModelConfig, ModelConfigError
from reporting.ledger import (
    RunLedger, read_alpha_csv, read_clusters, read_int_column, run_id, write_alpha_csv, write_matrix_csv,
    write_rows_csv
)
from training.experiments import (
    analyze_run, disentanglement_pilot, run_gradient_suite, save_pilot_record, scaling_benchmark, summarize_sweep,
    sweep
)
from training.trainer import DivergenceDetected, TrainConfig, TrainConfigError, evaluate, train

logger = logging.getLogger("NaturalHNNCLI")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VERIFICATION = 3
EXIT_RUNTIME = 4


class UsageError(Exception):
    """Bad command-line arguments."""


class VerificationFailed(Exception):
    """A verification command found a failing check."""


class CLIArgumentParser(argparse.ArgumentParser):
    """Argument parser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise UsageError(message)


def configure_logging(debug=False, log_file=None, level="INFO"):
    """Root logging: stdout stream plus an optional file."""
    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if debug else getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True
    )


def build_parser():
    """Parser with one sub-command per experiment step."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None, help='Path to a JSON configuration file')
    common.add_argument('--seed', type=int, default=None, help='Seed for generation, split and training')
    common.add_argument('--variant', choices=VARIANTS + ('ablation-no-naturality',), default=None,
                        help='Model variant')
    common.add_argument('--factors', type=int, default=None, help='Number of factors K')
    common.add_argument('--hidden', type=int, default=None, help='Hidden dimension d')
    common.add_argument('--layers', type=int, default=None, help='Number of layers L')
    common.add_argument('--lambda', dest='dis_weight', type=float, default=None,
                        help='Factor discrimination loss weight')
    common.add_argument('--beta', type=float, default=None, help='Interpolation ratio')
    common.add_argument('--train-ratio', type=float, default=None, help='Training split fraction')
    common.add_argument('--jobs', type=int, default=None, help='Worker threads for sweeps')
    common.add_argument('--debug', action='store_true', help='Enable debug logging')
    common.add_argument('--log-file', type=str, default=None, help='Also log to this file')

    parser = CLIArgumentParser(description='Natural-HNN hypergraph disentanglement experiments')
    sub = parser.add_subparsers(dest='command', parser_class=CLIArgumentParser)
    sub.required = True

    gen = sub.add_parser('gen', parents=[common], help='Generate a planted-factor dataset')
    gen.add_argument('--out', required=True, help='Output dataset file')
    gen.add_argument('--task', choices=TASKS, default=None)
    gen.add_argument('--nodes', type=int, default=None)
    gen.add_argument('--hyperedges', type=int, default=None)
    gen.add_argument('--planted-factors', type=int, default=None)
    gen.add_argument('--feature-dim', type=int, default=None)
    gen.add_argument('--classes', type=int, default=None)
    gen.add_argument('--samples', type=int, default=None)
    gen.add_argument('--mean-degree', type=float, default=None)
    gen.add_argument('--noise', type=float, default=None)
    gen.add_argument('--no-split', action='store_true', help='Leave the split masks empty')
    gen.add_argument('--oracle', action='store_true', help='Report the planted-factor oracle accuracy')

    train_cmd = sub.add_parser('train', parents=[common], help='Train a model')
    train_cmd.add_argument('--dataset', required=True)
    train_cmd.add_argument('--out', required=True, help='Output directory')
    train_cmd.add_argument('--ledger', default=None, help='Run ledger CSV (default <out>/ledger.csv)')

    eval_cmd = sub.add_parser('eval', parents=[common], help='Evaluate saved parameters')
    eval_cmd.add_argument('--params', required=True)
    eval_cmd.add_argument('--dataset', required=True)
    eval_cmd.add_argument('--split', choices=('train', 'val', 'test', 'all'), default='test')
    eval_cmd.add_argument('--out', default=None, help='Optional output directory')

    analyze = sub.add_parser('analyze', parents=[common], help='Analyse a relevance matrix')
    analyze.add_argument('--alpha', required=True, help='Relevance CSV written by train/eval')
    analyze.add_argument('--out', required=True, help='Output directory')
    analyze.add_argument('--planted', default=None, help='CSV with columns hyperedge,factor')
    analyze.add_argument('--dataset', default=None, help='Dataset carrying planted factor ids')
    analyze.add_argument('--clusters', default=None, help='CSV with columns hyperedge,cluster')

    gradcheck = sub.add_parser('gradcheck', parents=[common], help='Finite-difference gradient suite')
    gradcheck.add_argument('--nodes', type=int, default=None)
    gradcheck.add_argument('--hyperedges', type=int, default=None)
    gradcheck.add_argument('--seeds', type=int, default=None)
    gradcheck.add_argument('--out', default=None, help='Optional CSV of every check')

    bench = sub.add_parser('bench', parents=[common], help='Forward+backward scaling benchmark')
    bench.add_argument('--out', required=True, help='Timing CSV')
    bench.add_argument('--trials', type=int, default=None)
    bench.add_argument('--hidden-doubling', action='store_true',
                       help='Add a row with the first size at twice the hidden dimension')

    sweep_cmd = sub.add_parser('sweep', parents=[common], help='Grid x seed sweep')
    sweep_cmd.add_argument('--dataset', required=True)
    sweep_cmd.add_argument('--grid', default=None, help='JSON file with "grid" and optional "seeds"')
    sweep_cmd.add_argument('--out', required=True, help='Output directory')

    pilot = sub.add_parser('pilot', parents=[common],
                           help='Measure the disentanglement margins and write a calibration record')
    pilot.add_argument('--dataset', default=None, help='Dataset file (default: generate from the synthetic section)')
    pilot.add_argument('--seeds', type=int, default=None, help='Use seeds 0..n-1 instead of pilot.seeds')
    pilot.add_argument('--out', default=None, help='Record file (default pilot.record)')
    return parser


def resolve_config(args):
    """Load the configuration file and apply command-line overrides as dot paths."""
    config = load_settings(args.config)
    overrides = {
        'model.variant': args.variant,
        'model.num_factors': args.factors,
        'model.hidden': args.hidden,
        'model.num_layers': args.layers,
        'model.dis_weight': args.dis_weight,
        'model.beta': args.beta,
        'sweep.jobs': args.jobs,
    }
    if args.seed is not None:
        for path in ('training.seed', 'split.seed', 'synthetic.seed'):
            overrides[path] = args.seed
    for path, value in overrides.items():
        if value is not None:
            update_setting(config, path, value)
    if args.train_ratio is not None:
        if not 0.0 < args.train_ratio < 1.0:
            raise UsageError(f"--train-ratio must lie in (0, 1), got {args.train_ratio}")
        ratios = list(get_setting(config, 'split.ratios', [0.5, 0.25, 0.25]))
        ratios[0] = args.train_ratio
        update_setting(config, 'split.ratios', ratios)
    return config


def _require_file(path, flag):
    if not os.path.isfile(path):
        raise UsageError(f"{flag} file not found: {path}")


class NaturalHNNCLI:
    """Runs one sub-command against a resolved configuration."""

    def __init__(self, config):
        self.config = config
        logger.info("Natural-HNN CLI initialized")

    def model_config(self):
        return ModelConfig.from_dict(self.config['model'])

    def train_config(self):
        return TrainConfig.from_dict(self.config['training'])

    def cmd_gen(self, args):
        """Generate a planted dataset, split it unless asked not to, and save it."""
        section = dict(self.config['synthetic'])
        for key, value in (('task', args.task), ('num_nodes', args.nodes), ('num_hyperedges', args.hyperedges),
                           ('num_factors', args.planted_factors), ('feature_dim', args.feature_dim),
                           ('num_classes', args.classes), ('num_samples', args.samples),
                           ('mean_degree', args.mean_degree), ('noise_std', args.noise)):
            if value is not None:
                section[key] = value
        dataset = generate_planted(SyntheticSpec.from_dict(section))
        if not args.no_split:
            dataset = split_dataset(dataset, self.config['split']['ratios'], self.config['split']['seed'])
        save_dataset(dataset, args.out)
        if args.oracle:
            accuracy = planted_factor_oracle(dataset, seed=section.get('seed', 0))
            print(json.dumps({"oracle_accuracy": accuracy}))
        return EXIT_OK

    def cmd_train(self, args):
        """Train, then write parameters, loss curve, α matrix, metrics and a ledger row."""
        _require_file(args.dataset, '--dataset')
        dataset = load_dataset(args.dataset)
        model_cfg, train_cfg = self.model_config(), self.train_config()
        ratios = tuple(self.config['split']['ratios'])
        if not dataset.is_split or args.train_ratio is not None:
            dataset = split_dataset(dataset, ratios, self.config['split']['seed'])
        os.makedirs(args.out, exist_ok=True)
        resolved = dict(self.config, dataset=os.path.abspath(args.dataset))
        rid = run_id(resolved)
        save_settings(resolved, os.path.join(args.out, 'config.json'))

        started = time.perf_counter()
        try:
            result = train(dataset, model_cfg, train_cfg, split_ratios=ratios)
        except DivergenceDetected as e:
            write_rows_csv(os.path.join(args.out, 'loss_curve.csv'), e.result.loss_curve)
            raise

        save_params(result.params, model_cfg, os.path.join(args.out, 'params.nhnp'))
        write_rows_csv(os.path.join(args.out, 'loss_curve.csv'), result.loss_curve)
        empty = dataset.hypergraph.empty_hyperedges
        for layer, alpha in enumerate(result.final_alphas):
            write_alpha_csv(os.path.join(args.out, f'alpha_layer{layer}.csv'), alpha, empty)
        if result.final_alphas:
            write_alpha_csv(os.path.join(args.out, 'alpha.csv'), result.final_alphas[-1], empty)

        analysis = analyze_run(result, dataset, self.config.get('analysis'))
        metrics = {"run_id": rid, "best_epoch": result.best_epoch, "epochs_run": result.epochs_run,
                   "train": result.train_metrics, "val": result.val_metrics, "test": result.test_metrics,
                   "analysis": analysis, "timings": result.timings}
        with open(os.path.join(args.out, 'metrics.json'), 'w') as f:
            json.dump(metrics, f, indent=2, sort_keys=True)

        ledger = RunLedger(args.ledger or os.path.join(args.out, 'ledger.csv'))
        ledger.append({
            "run_id": rid, "dataset": args.dataset, "variant": model_cfg.variant,
            "num_factors": model_cfg.num_factors, "hidden": model_cfg.hidden, "num_layers": model_cfg.num_layers,
            "dis_weight": model_cfg.dis_weight, "beta": model_cfg.beta, "lr": train_cfg.lr, "seed": train_cfg.seed,
            "train_ratio": ratios[0],
            "test_accuracy": result.test_metrics.get("accuracy"),
            "test_macro_f1": result.test_metrics.get("macro_f1"),
            "test_micro_f1": result.test_metrics.get("micro_f1"),
            "factor_auc": analysis["factor_auc"], "factor_ari": analysis["factor_ari"],
            "wall_seconds": time.perf_counter() - started,
        })
        logger.info(f"Run {rid} written to {args.out}")
        return EXIT_OK

    def cmd_eval(self, args):
        """Metrics of saved parameters on one split of a dataset."""
        _require_file(args.params, '--params')
        _require_file(args.dataset, '--dataset')
        params, model_cfg = load_params(args.params)
        dataset = load_dataset(args.dataset)
        if args.split != 'all' and not dataset.mask(args.split).any():
            raise UsageError(f"dataset has no {args.split} split")
        result = evaluate(dataset, params, model_cfg, args.split)
        report = dict(result.metrics, split=args.split, loss=result.loss)
        print(json.dumps(report, sort_keys=True))
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            with open(os.path.join(args.out, 'eval_metrics.json'), 'w') as f:
                json.dump(report, f, indent=2, sort_keys=True)
            if result.alphas:
                write_alpha_csv(os.path.join(args.out, 'alpha.csv'), result.alphas[-1],
                                dataset.hypergraph.empty_hyperedges)
        return EXIT_OK

    def cmd_analyze(self, args):
        """Pearson, relevance-similarity, cluster-similarity and recovery exports for one α matrix."""
        _require_file(args.alpha, '--alpha')
        alpha, empty = read_alpha_csv(args.alpha)
        valid = ~empty
        os.makedirs(args.out, exist_ok=True)

        corr, flat = pearson_factor_correlation(alpha, valid)
        write_matrix_csv(os.path.join(args.out, 'pearson.csv'), corr, 'factor', 'factor')
        write_matrix_csv(os.path.join(args.out, 'relevance_similarity.csv'),
                         pairwise_relevance_similarity(alpha), 'hyperedge', 'hyperedge')
        summary = {"zero_variance_factors": [int(k) for k in flat.nonzero()[0]],
                   "empty_hyperedges": [int(i) for i in empty.nonzero()[0]]}

        if args.clusters:
            _require_file(args.clusters, '--clusters')
            clusters = read_clusters(args.clusters)
            write_matrix_csv(os.path.join(args.out, 'cluster_similarity.csv'),
                             cluster_similarity(clusters, alpha), 'cluster', 'cluster')

        planted = None
        if args.planted:
            _require_file(args.planted, '--planted')
            planted = read_int_column(args.planted, 'factor')
        elif args.dataset:
            _require_file(args.dataset, '--dataset')
            dataset = load_dataset(args.dataset)
            planted = dataset.planted_factors
        if planted is not None:
            if planted.shape[0] != alpha.shape[0]:
                raise UsageError(f"{planted.shape[0]} planted ids for {alpha.shape[0]} hyperedges")
            analysis = self.config.get('analysis', {})
            scores = factor_recovery_score(alpha, planted, seed=analysis.get('seed', 0),
                                           val_fraction=analysis.get('recovery_val_fraction', 0.5),
                                           restarts=analysis.get('kmeans_restarts', 10), valid=valid)
            summary.update(factor_auc=scores["auc"], factor_ari=scores["ari"], auc_columns=scores["columns"])

        with open(os.path.join(args.out, 'analysis.json'), 'w') as f:
            json.dump(summary, f, indent=2, sort_keys=True)
        print(json.dumps(summary, sort_keys=True))
        return EXIT_OK

    def cmd_gradcheck(self, args):
        """Run the gradient suite; a failing check is a verification failure."""
        settings = dict(self.config.get('gradcheck', {}))
        for key, value in (('num_nodes', args.nodes), ('num_hyperedges', args.hyperedges), ('seeds', args.seeds),
                           ('num_factors', args.factors), ('hidden', args.hidden),
                           ('dis_weight', args.dis_weight)):
            if value is not None:
                settings[key] = value
        results, passed = run_gradient_suite(settings)
        if args.out:
            write_rows_csv(args.out, [{"name": r.name, "seed": r.seed, "max_rel_error": r.max_rel_error,
                                       "tolerance": r.tolerance, "passed": int(r.passed)} for r in results])
        failed = [r for r in results if not r.passed]
        print(json.dumps({"checks": len(results), "failed": len(failed),
                          "max_rel_error": max(r.max_rel_error for r in results)}))
        if not passed:
            raise VerificationFailed(f"{len(failed)} of {len(results)} gradient checks exceed tolerance "
                                     f"(first: {failed[0].name} seed {failed[0].seed})")
        return EXIT_OK

    def cmd_bench(self, args):
        """Scaling benchmark; writes one CSV row per size."""
        section = self.config['benchmark']
        sizes = [dict(s) for s in section['sizes']]
        if args.hidden:
            for size in sizes:
                size['hidden'] = args.hidden
        if args.hidden_doubling and sizes:
            sizes.append(dict(sizes[0], hidden=2 * int(sizes[0].get('hidden', 32))))
        rows, slope = scaling_benchmark(sizes, trials=args.trials or int(section.get('trials', 5)),
                                        num_factors=args.factors or int(section.get('num_factors', 2)),
                                        feature_dim=int(section.get('feature_dim', 8)),
                                        seed=int(section.get('seed', 0)),
                                        num_layers=args.layers or 1)
        write_rows_csv(args.out, rows)
        print(json.dumps({"sizes": len(rows), "log_time_vs_log_E_slope": slope}))
        return EXIT_OK

    def cmd_sweep(self, args):
        """Grid × seed sweep with per-run rows, a summary and ledger rows."""
        _require_file(args.dataset, '--dataset')
        dataset = load_dataset(args.dataset)
        section = dict(self.config['sweep'])
        grid_file = {}
        if args.grid:
            _require_file(args.grid, '--grid')
            try:
                with open(args.grid) as f:
                    grid_file = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"unreadable grid file {args.grid}: {e}") from e
            if not isinstance(grid_file, dict) or 'grid' not in grid_file:
                raise ConfigError(f"grid file {args.grid} needs a 'grid' object")
            section.update(grid_file)
        if args.train_ratio is not None and 'train_ratio' not in section['grid']:
            section['grid'] = dict(section['grid'], train_ratio=[args.train_ratio])
        seeds = list(section['seeds'])
        if args.seed is not None and 'seeds' not in grid_file:
            seeds = [args.seed]
        os.makedirs(args.out, exist_ok=True)
        ledger = RunLedger(os.path.join(args.out, 'ledger.csv'))

        def record(row, result):
            resolved = dict(self.config, dataset=os.path.abspath(args.dataset), cell=row["cell"], seed=row["seed"],
                            model=result.model_cfg.to_dict())
            ledger.append(dict(row, run_id=run_id(resolved), dataset=args.dataset))

        rows = sweep(dataset, self.config, section['grid'], seeds,
                     val_ratio=float(section.get('val_ratio', 0.25)),
                     test_ratio=float(section.get('test_ratio', 0.25)),
                     jobs=int(section.get('jobs', 1)), on_result=record)
        write_rows_csv(os.path.join(args.out, 'sweep.csv'), rows)
        summary = summarize_sweep(rows)
        cells = {}
        for row in rows:
            cells.setdefault(row["cell"], row)
        write_rows_csv(os.path.join(args.out, 'sweep_summary.csv'), [
            dict({k: cells[c][k] for k in sorted(section['grid'])}, cell=c, mean_test_macro_f1=m,
                 std_test_macro_f1=s) for c, (m, s) in sorted(summary.items())])
        print(json.dumps({"runs": len(rows), "cells": len(summary)}))
        return EXIT_OK

    def cmd_pilot(self, args):
        """Full-vs-ablation and discrimination-loss pilot; writes the calibration record."""
        section = self.config.get('pilot', {})
        if args.dataset:
            _require_file(args.dataset, '--dataset')
            dataset = load_dataset(args.dataset)
        else:
            dataset = generate_planted(SyntheticSpec.from_dict(self.config['synthetic']))
        if args.seeds is not None and args.seeds < 1:
            raise UsageError(f"--seeds must be at least 1, got {args.seeds}")
        seeds = list(range(args.seeds)) if args.seeds is not None else None
        record = disentanglement_pilot(dataset, self.config, seeds=seeds, jobs=args.jobs)
        out = args.out or section.get('record', 'calibration/pilot.json')
        if os.path.dirname(out):
            os.makedirs(os.path.dirname(out), exist_ok=True)
        save_pilot_record(record, out)
        measured = record["measured"]
        print(json.dumps({"mean_margin": measured["mean_margin"], "positive_margins": measured["positive_margins"],
                          "mean_factor_auc": measured["mean_factor_auc"],
                          "lowered_correlation": measured["lowered_correlation"],
                          "thresholds": record["thresholds"]}))
        return EXIT_OK


USAGE_ERRORS = (UsageError, ConfigError, ModelConfigError, TrainConfigError, DegenerateSpec)


def exit_code_for(error):
    if isinstance(error, USAGE_ERRORS):
        return EXIT_USAGE
    if isinstance(error, VerificationFailed):
        return EXIT_VERIFICATION
    return EXIT_RUNTIME


def main(argv=None):
    """
    Parse arguments, run one command and map failures to exit codes.

    Returns:
        int: 0 success, 2 bad arguments/config, 3 verification failure, 4 runtime error
    """
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.debug, args.log_file)
        config = resolve_config(args)
        log_settings = config.get('logging') or {}
        if log_settings.get('file') or str(log_settings.get('level', 'INFO')).upper() != 'INFO':
            configure_logging(args.debug, args.log_file or log_settings.get('file'), log_settings.get('level', 'INFO'))
        cli = NaturalHNNCLI(config)
        return getattr(cli, f"cmd_{args.command}")(args)
    except Exception as e:
        code = exit_code_for(e)
        message = " ".join(str(e).split())
        # Without handlers the record would reach stderr through logging's last-resort handler
        if logging.getLogger().handlers:
            logger.error(f"Command failed ({type(e).__name__}): {message}")
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
