import copy
import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from autodiff import Tape, backward
from autodiff.gradcheck import GradCheckResult, check_function, check_primitives
from hypergraph.dataset import TASK_HYPEREDGE, TASK_HYPERGRAPH, TASK_NODE, Dataset, split_dataset
from hypergraph.generator import SyntheticSpec, generate_planted
from hypergraph.structure import build_hypergraph
from metrics.evaluation import factor_recovery_score, mean_abs_offdiagonal, pearson_factor_correlation
from metrics.losses import compute_loss, task_loss
from model.network import ModelConfig, init_params, model_forward
from .trainer import DivergenceDetected, TrainConfig, train

logger = logging.getLogger("Experiments")

GRID_KEYS = ("train_ratio", "num_factors", "variant", "dis_weight", "beta", "dropout", "hidden")

# Variants whose relevance scores are not learned
FIXED_ALPHA_VARIANTS = ("ablation", "hgnn")


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def expand_grid(grid):
    """
    All combinations of a parameter grid, in sorted-key order.

    Args:
        grid (dict): Key -> list of values (keys from GRID_KEYS)

    Returns:
        list: One dict per combination
    """
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise ValueError(f"unknown sweep keys {sorted(unknown)}; allowed {GRID_KEYS}")
    keys = sorted(grid)
    values = [grid[k] if isinstance(grid[k], (list, tuple)) else [grid[k]] for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def _cell_configs(config, cell, seed):
    model_section = copy.deepcopy(config.get("model", {}))
    for key in ("num_factors", "variant", "dis_weight", "beta", "dropout", "hidden"):
        if key in cell:
            model_section[key] = cell[key]
    train_section = dict(config.get("training", {}), seed=seed)
    return ModelConfig.from_dict(model_section), TrainConfig.from_dict(train_section)


def analyze_run(result, dataset, analysis=None):
    """
    Factor-recovery and factor-correlation statistics of a finished run.

    Args:
        result (RunResult): Finished run
        dataset (Dataset): Dataset the run was trained on
        analysis (dict): 'analysis' settings section

    Returns:
        dict: factor_auc, factor_ari, alpha_corr; all NaN for variants without
            learned relevance scores
    """
    analysis = analysis or {}
    out = {"factor_auc": float("nan"), "factor_ari": float("nan"), "alpha_corr": float("nan")}
    if result.model_cfg.variant in FIXED_ALPHA_VARIANTS or not result.final_alphas:
        return out
    alpha = result.final_alphas[-1]
    valid = ~dataset.hypergraph.empty_hyperedges
    corr, _ = pearson_factor_correlation(alpha, valid)
    out["alpha_corr"] = mean_abs_offdiagonal(corr)
    if dataset.has_planted:
        scores = factor_recovery_score(alpha, dataset.planted_factors,
                                       seed=analysis.get("seed", 0),
                                       val_fraction=analysis.get("recovery_val_fraction", 0.5),
                                       restarts=analysis.get("kmeans_restarts", 10),
                                       valid=valid)
        out["factor_auc"], out["factor_ari"] = scores["auc"], scores["ari"]
    return out


def _run_cell(dataset, config, cell, seed, val_ratio, test_ratio):
    model_cfg, train_cfg = _cell_configs(config, cell, seed)
    train_ratio = float(cell.get("train_ratio", config.get("split", {}).get("ratios", [0.5])[0]))
    split = split_dataset(dataset, (train_ratio, val_ratio, test_ratio), seed)
    row = dict(cell, seed=seed, train_ratio=train_ratio, variant=model_cfg.variant,
               num_factors=model_cfg.num_factors, hidden=model_cfg.hidden, num_layers=model_cfg.num_layers,
               dis_weight=model_cfg.dis_weight, beta=model_cfg.beta, dropout=model_cfg.dropout,
               lr=train_cfg.lr)
    started = time.perf_counter()
    try:
        result = train(split, model_cfg, train_cfg)
    except DivergenceDetected as e:
        logger.error(f"Sweep cell {cell} seed {seed} diverged: {e}")
        row.update(diverged=True, best_epoch=e.result.best_epoch, test_accuracy=float("nan"),
                   test_macro_f1=float("nan"), test_micro_f1=float("nan"),
                   factor_auc=float("nan"), factor_ari=float("nan"), alpha_corr=float("nan"),
                   wall_seconds=time.perf_counter() - started)
        return row, e.result
    row.update(diverged=False, best_epoch=result.best_epoch,
               test_accuracy=result.test_metrics.get("accuracy", float("nan")),
               test_macro_f1=result.test_metrics.get("macro_f1", float("nan")),
               test_micro_f1=result.test_metrics.get("micro_f1", float("nan")),
               wall_seconds=time.perf_counter() - started)
    row.update(analyze_run(result, split, config.get("analysis")))
    return row, result


def sweep(dataset, config, grid, seeds, val_ratio=0.25, test_ratio=0.25, jobs=1, on_result=None):
    """
    Train every grid cell for every seed.

    Each (cell, seed) draws its own split with that seed, so cells that
    differ only in model settings see identical splits.

    Args:
        dataset (Dataset): Template dataset (its own split is ignored)
        config (dict): Full settings; 'model' and 'training' are the base
        grid (dict): Sweep grid (see GRID_KEYS)
        seeds (list): Seeds for split, initialisation and dropout
        val_ratio (float): Validation fraction
        test_ratio (float): Test fraction
        jobs (int): Worker threads
        on_result (callable): Called as on_result(row, run_result) when a run ends

    Returns:
        list: One row dict per run, ordered by grid cell then seed
    """
    cells = expand_grid(grid)
    for cell in cells:
        _cell_configs(config, cell, 0)
    tasks = [(i, cell, seed) for i, cell in enumerate(cells) for seed in seeds]
    logger.info(f"Sweep over {len(cells)} grid cells × {len(seeds)} seeds with {jobs} worker(s)")

    def run(task):
        index, cell, seed = task
        row, result = _run_cell(dataset, config, cell, seed, val_ratio, test_ratio)
        row["cell"] = index
        if on_result is not None:
            on_result(row, result)
        return row

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run, tasks))
    else:
        rows = [run(task) for task in tasks]
    return sorted(rows, key=lambda r: (r["cell"], r["seed"]))


def summarize_sweep(rows, metric="test_macro_f1"):
    """Mean and standard deviation of a metric per grid cell."""
    summary = {}
    for row in rows:
        summary.setdefault(row["cell"], []).append(row[metric])
    return {cell: (float(np.nanmean(v)), float(np.nanstd(v))) for cell, v in summary.items()}


# ---------------------------------------------------------------------------
# Disentanglement pilot and threshold calibration
# ---------------------------------------------------------------------------

def pilot_config(config):
    """Settings with the 'pilot' section's model and training overrides applied."""
    pilot = config.get("pilot", {})
    merged = copy.deepcopy(config)
    merged["model"] = dict(config.get("model", {}), **pilot.get("model", {}))
    merged["training"] = dict(config.get("training", {}), **pilot.get("training", {}))
    return merged


def _by_seed(rows, **match):
    return {r["seed"]: r for r in rows if all(r[k] == v for k, v in match.items())}


def disentanglement_pilot(dataset, config, seeds=None, jobs=None):
    """
    Measure the full-versus-ablation margin, factor recovery and the effect
    of the discrimination loss on factor correlation.

    Two sweeps share the seeds: variant in {full, ablation}, then the full
    variant with dis_weight in {0, pilot.dis_weight}.

    Args:
        dataset (Dataset): Planted dataset
        config (dict): Full settings; the 'pilot' section overrides model and training
        seeds (list): Seeds (default pilot.seeds)
        jobs (int): Worker threads (default pilot.jobs)

    Returns:
        dict: Record with 'measured', 'thresholds' and 'settings' keys
    """
    pilot = config.get("pilot", {})
    seeds = [int(s) for s in (seeds if seeds is not None else pilot.get("seeds", range(10)))]
    jobs = int(jobs or pilot.get("jobs", 1))
    dis_weight = float(pilot.get("dis_weight", 0.01))
    base = pilot_config(config)
    ratios = base.get("split", {}).get("ratios", [0.5, 0.25, 0.25])
    val_ratio, test_ratio = float(ratios[1]), float(ratios[2])
    logger.info(f"Disentanglement pilot over {len(seeds)} seeds, dis_weight {dis_weight}")

    variant_rows = sweep(dataset, base, {"variant": ["full", "ablation"]}, seeds, val_ratio, test_ratio, jobs)
    full, ablation = _by_seed(variant_rows, variant="full"), _by_seed(variant_rows, variant="ablation")
    margins = [full[s]["test_macro_f1"] - ablation[s]["test_macro_f1"] for s in seeds]
    aucs = [full[s]["factor_auc"] for s in seeds]

    weight_rows = sweep(dataset, base, {"variant": ["full"], "dis_weight": [0.0, dis_weight]},
                        seeds, val_ratio, test_ratio, jobs)
    plain, weighted = _by_seed(weight_rows, dis_weight=0.0), _by_seed(weight_rows, dis_weight=dis_weight)
    corr_pairs = [[plain[s]["alpha_corr"], weighted[s]["alpha_corr"]] for s in seeds]

    measured = {
        "seeds": seeds,
        "margins": margins,
        "mean_margin": float(np.nanmean(margins)),
        "positive_margins": int(sum(m > 0 for m in margins)),
        "factor_auc": aucs,
        "mean_factor_auc": float(np.nanmean(aucs)),
        "alpha_corr_pairs": corr_pairs,
        "lowered_correlation": int(sum(b < a for a, b in corr_pairs)),
    }
    logger.info(f"Pilot: mean margin {measured['mean_margin']:.4f} ({measured['positive_margins']}/{len(seeds)} "
                f"positive), mean AUC {measured['mean_factor_auc']:.4f}, correlation lowered in "
                f"{measured['lowered_correlation']}/{len(seeds)}")
    record = {"measured": measured, "settings": {k: pilot[k] for k in sorted(pilot) if k != "record"}}
    record["thresholds"] = calibrated_thresholds(record, pilot)
    return record


def calibrated_thresholds(record, settings=None):
    """
    Acceptance thresholds for the margin and factor-recovery AUC.

    Without a measured record the targets are returned unchanged. With one,
    each threshold is the lower of its target and the measured mean minus
    its slack, floored at 0 (margin) and 0.5 (AUC).

    Args:
        record (dict): Pilot record or None
        settings (dict): 'pilot' settings section

    Returns:
        dict: margin, auc and calibrated (bool)
    """
    settings = settings or {}
    margin_target = float(settings.get("margin_target", 0.05))
    auc_target = float(settings.get("auc_target", 0.85))
    measured = (record or {}).get("measured")
    if not measured:
        return {"margin": margin_target, "auc": auc_target, "calibrated": False}

    def lowered(target, value, slack, floor):
        if not np.isfinite(value):
            return floor
        return max(floor, min(target, value - slack))

    return {
        "margin": lowered(margin_target, float(measured["mean_margin"]),
                          float(settings.get("margin_slack", 0.02)), 0.0),
        "auc": lowered(auc_target, float(measured["mean_factor_auc"]),
                       float(settings.get("auc_slack", 0.05)), 0.5),
        "calibrated": True,
    }


def load_pilot_record(path):
    """Pilot record from a JSON file, or None when the file does not exist."""
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except FileNotFoundError:
        logger.warning(f"No pilot record at {path}; using uncalibrated targets")
        return None


def save_pilot_record(record, path):
    with open(path, 'w') as f:
        json.dump(record, f, indent=2, allow_nan=True)
    logger.info(f"Pilot record written to {path}")


# ---------------------------------------------------------------------------
# Scaling benchmark
# ---------------------------------------------------------------------------

def _time_pass(dataset, params, cfg):
    labels = dataset.labels
    tick = time.perf_counter()
    with Tape() as tape:
        output = model_forward(dataset.features, dataset.hypergraph, params, cfg, training=False)
        loss = task_loss(output.logits, labels)
    backward(tape, loss)
    return time.perf_counter() - tick


def scaling_benchmark(sizes, trials=5, num_factors=2, feature_dim=8, seed=0, num_layers=1):
    """
    Median forward+backward wall time across generated hypergraphs.

    Hyperedges are drawn uniformly from all nodes (one cluster per factor)
    so every size reaches its requested mean degree.

    Args:
        sizes (list): Dicts with num_nodes, num_hyperedges, mean_degree, hidden
        trials (int): Timed repetitions per size (after one warm-up pass)
        num_factors (int): Model factor count K
        feature_dim (int): Input feature dimension
        seed (int): Generator and initialisation seed
        num_layers (int): Model depth

    Returns:
        tuple: (rows, slope) where slope is the fitted d log(time) / d log(E)
            over the largest group of sizes sharing N, M and hidden
    """
    rows = []
    for size in sizes:
        spec = SyntheticSpec(num_nodes=int(size["num_nodes"]), num_hyperedges=int(size["num_hyperedges"]),
                             num_factors=2, mean_degree=float(size["mean_degree"]), feature_dim=feature_dim,
                             num_clusters=1, num_classes=2, seed=seed)
        dataset = generate_planted(spec)
        hidden = int(size.get("hidden", 32))
        cfg = ModelConfig(num_layers=num_layers, num_factors=num_factors, hidden=hidden, dropout=0.0)
        params = init_params(cfg, feature_dim, dataset.num_classes, dataset.num_hyperedges, TASK_NODE,
                             np.random.default_rng(seed))
        _time_pass(dataset, params, cfg)
        times = [_time_pass(dataset, params, cfg) for _ in range(trials)]
        row = {"num_nodes": spec.num_nodes, "num_hyperedges": spec.num_hyperedges,
               "incidences": dataset.hypergraph.num_incidences, "hidden": hidden,
               "median_seconds": float(np.median(times)), "min_seconds": float(np.min(times)),
               "max_seconds": float(np.max(times))}
        rows.append(row)
        logger.info(f"Benchmark N={row['num_nodes']} M={row['num_hyperedges']} E={row['incidences']} "
                    f"d={hidden}: median {row['median_seconds'] * 1e3:.2f} ms")

    groups = {}
    for row in rows:
        groups.setdefault((row["num_nodes"], row["num_hyperedges"], row["hidden"]), []).append(row)
    group = max(groups.values(), key=len) if groups else []
    slope = float("nan")
    if len({r["incidences"] for r in group}) >= 2:
        log_e = np.log([r["incidences"] for r in group])
        log_t = np.log([r["median_seconds"] for r in group])
        slope = float(np.polyfit(log_e, log_t, 1)[0])
        logger.info(f"Fitted log-time / log-E slope: {slope:.3f}")
    return rows, slope


# ---------------------------------------------------------------------------
# End-to-end gradient checks
# ---------------------------------------------------------------------------

def _tiny_dataset(rng, num_nodes, num_hyperedges, feature_dim, num_classes, task, num_samples=2):
    pairs = []
    for edge in range(num_hyperedges):
        size = int(rng.integers(2, min(num_nodes, 3) + 1))
        pairs.extend((int(v), edge) for v in rng.choice(num_nodes, size=size, replace=False))
    hg = build_hypergraph(pairs, num_nodes, num_hyperedges)
    if task == TASK_HYPERGRAPH:
        features = rng.standard_normal((num_samples, num_nodes, feature_dim))
        labels = rng.integers(0, num_classes, num_samples)
    elif task == TASK_HYPEREDGE:
        features = rng.standard_normal((num_nodes, feature_dim))
        labels = rng.integers(0, num_classes, num_hyperedges)
    else:
        features = rng.standard_normal((num_nodes, feature_dim))
        labels = rng.integers(0, num_classes, num_nodes)
    return Dataset(task=task, hypergraph=hg, features=features, labels=labels, num_classes=num_classes)


def check_model_gradients(seeds=10, step=1e-5, tolerance=1e-4, num_nodes=6, num_hyperedges=3,
                          num_factors=2, hidden=8, dis_weight=0.01, variant="full", task=TASK_NODE,
                          feature_dim=4, num_classes=3):
    """
    Tape gradients of the full training loss against central differences.

    Args:
        seeds (int): Randomized instances
        step (float): Finite-difference step
        tolerance (float): Relative error threshold

    Returns:
        list: GradCheckResult per seed
    """
    cfg = ModelConfig(num_layers=2, num_factors=num_factors, hidden=hidden, dropout=0.0,
                      dis_weight=dis_weight, variant=variant)
    results = []
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        dataset = _tiny_dataset(rng, num_nodes, num_hyperedges, feature_dim, num_classes, task)
        params = init_params(cfg, feature_dim, num_classes, num_hyperedges, task, rng, dtype="f64")
        inputs = [t.data.astype(np.float64) for t in params.named_parameters().values()]

        def loss_fn(tensors, params=params, dataset=dataset):
            bound = params.bind(tensors)
            output = model_forward(dataset.features, dataset.hypergraph, bound, cfg, training=False)
            loss, _ = compute_loss(output, dataset.labels, None, bound, cfg)
            return loss

        err = check_function(loss_fn, inputs, step)
        results.append(GradCheckResult(f"model:{variant}:{task}", seed, err, tolerance))
        if err >= tolerance:
            logger.warning(f"Model gradient check failed ({variant}, {task}, seed {seed}): {err:.3e}")
    return results


def run_gradient_suite(settings=None):
    """
    Primitive suite plus end-to-end model checks.

    Args:
        settings (dict): 'gradcheck' settings section

    Returns:
        tuple: (list of GradCheckResult, bool all passed)
    """
    settings = settings or {}
    seeds = int(settings.get("seeds", 10))
    step = float(settings.get("step", 1e-5))
    tolerance = float(settings.get("tolerance", 1e-4))
    started = time.perf_counter()

    results = check_primitives(seeds, step, tolerance)
    model_kwargs = dict(seeds=seeds, step=step, tolerance=tolerance,
                        num_nodes=int(settings.get("num_nodes", 6)),
                        num_hyperedges=int(settings.get("num_hyperedges", 3)),
                        num_factors=int(settings.get("num_factors", 2)),
                        hidden=int(settings.get("hidden", 8)),
                        dis_weight=float(settings.get("dis_weight", 0.01)))
    results += check_model_gradients(**model_kwargs)
    results += check_model_gradients(**dict(model_kwargs, task=TASK_HYPERGRAPH))
    results += check_model_gradients(**dict(model_kwargs, task=TASK_HYPEREDGE))
    results += check_model_gradients(**dict(model_kwargs, variant="hgnn", dis_weight=0.0))

    passed = all(r.passed for r in results)
    worst = max(results, key=lambda r: r.max_rel_error)
    logger.info(f"Gradient suite: {sum(r.passed for r in results)}/{len(results)} passed in "
                f"{time.perf_counter() - started:.1f}s; worst {worst.name} seed {worst.seed} "
                f"({worst.max_rel_error:.2e})")
    return results, passed
