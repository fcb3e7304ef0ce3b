#!/usr/bin/env python3

import argparse
import logging
import os
import sys
import tempfile

import numpy as np

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    handlers=[
        logging.StreamHandler(sys.stdout)
    ]
)
logger = logging.getLogger("SystemTest")

UNIT_MODULES = ["test_hypergraph.py", "test_autodiff.py", "test_model.py", "test_metrics.py",
                "test_training.py", "test_cli.py"]


def test_config():
    """Test configuration loading."""
    logger.info("Testing configuration loading...")
    from config.settings import load_settings

    config = load_settings()
    custom_config_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config", "default_config.json")
    if os.path.exists(custom_config_path):
        config = load_settings(custom_config_path)
        logger.info(f"Loaded custom configuration from {custom_config_path}")

    for section in ("model", "training", "synthetic", "split", "analysis", "benchmark", "sweep", "gradcheck"):
        assert section in config, f"Missing '{section}' section in config"
    logger.info("Configuration test passed")


def test_hypergraph():
    """Generate a planted dataset, split it and check the oracle can read the planted structure."""
    logger.info("Testing planted dataset generation...")
    from hypergraph import SyntheticSpec, generate_planted, planted_factor_oracle, split_dataset

    dataset = split_dataset(generate_planted(SyntheticSpec(seed=0)), (0.5, 0.25, 0.25), 0)
    assert dataset.hypergraph.edge_degrees.min() >= 2, "Generated a hyperedge with fewer than two members"
    accuracy = planted_factor_oracle(dataset)
    logger.info(f"Oracle accuracy {accuracy:.3f} on {dataset.hypergraph}")
    assert accuracy >= 0.9, "Planted labels are not recoverable from the planted factors"


def test_model():
    """Forward pass of every variant on a generated dataset."""
    logger.info("Testing model variants...")
    from hypergraph import SyntheticSpec, generate_planted
    from model import VARIANTS, ModelConfig, init_params, model_forward

    dataset = generate_planted(SyntheticSpec(num_nodes=50, num_hyperedges=20, seed=1))
    for variant in VARIANTS:
        cfg = ModelConfig(variant=variant, num_factors=2, hidden=8, dropout=0.0)
        params = init_params(cfg, dataset.feature_dim, dataset.num_classes, dataset.num_hyperedges, dataset.task,
                             np.random.default_rng(0))
        output = model_forward(dataset.features, dataset.hypergraph, params, cfg)
        assert output.logits.shape == (50, dataset.num_classes), f"Wrong logits shape for {variant}"
        logger.info(f"Variant {variant}: {len(output.alphas)} relevance matrices")

    edges = generate_planted(SyntheticSpec(num_nodes=50, num_hyperedges=20, task="hyperedge", seed=1))
    cfg = ModelConfig(num_factors=2, hidden=8, dropout=0.0)
    params = init_params(cfg, edges.feature_dim, edges.num_classes, edges.num_hyperedges, edges.task,
                         np.random.default_rng(0))
    output = model_forward(edges.features, edges.hypergraph, params, cfg)
    assert output.logits.shape == (20, 2), "Hyperedge task must produce one logit row per hyperedge"


def test_training():
    """Short training run plus the gradient suite."""
    logger.info("Testing training loop and gradients...")
    from hypergraph import SyntheticSpec, generate_planted
    from model import ModelConfig
    from training import TrainConfig, run_gradient_suite, train

    dataset = generate_planted(SyntheticSpec(num_nodes=80, num_hyperedges=30, seed=2))
    result = train(dataset, ModelConfig(num_factors=2, hidden=16), TrainConfig(epochs=20, patience=10))
    logger.info(f"Best epoch {result.best_epoch}, test metrics {result.test_metrics}")
    assert result.best_epoch <= result.epochs_run
    _, passed = run_gradient_suite({"seeds": 2})
    assert passed, "Gradient suite reported failures"


def test_pipeline():
    """gen -> train -> eval -> analyze through the command line entry point."""
    logger.info("Testing command line pipeline...")
    from main import EXIT_OK, main

    with tempfile.TemporaryDirectory() as workdir:
        data = os.path.join(workdir, "data.nhnn")
        run = os.path.join(workdir, "run")
        assert main(["gen", "--out", data, "--nodes", "60", "--hyperedges", "24"]) == EXIT_OK
        assert main(["train", "--dataset", data, "--out", run, "--hidden", "16", "--factors", "2"]) == EXIT_OK
        assert main(["eval", "--params", os.path.join(run, "params.nhnp"), "--dataset", data]) == EXIT_OK
        assert main(["analyze", "--alpha", os.path.join(run, "alpha.csv"), "--dataset", data,
                     "--out", os.path.join(workdir, "analysis")]) == EXIT_OK
    logger.info("Pipeline test passed")


def run_unit_tests():
    """Run the unit test modules through pytest."""
    import pytest

    here = os.path.dirname(os.path.abspath(__file__))
    return pytest.main(["-q"] + [os.path.join(here, m) for m in UNIT_MODULES]) == 0


def _run(name, test_func):
    try:
        result = test_func()
    except Exception as e:
        logger.error(f"{name} test failed: {type(e).__name__}: {str(e)}")
        return False
    return result is not False


def run_tests(args):
    """Run the selected tests."""
    tests = {
        "config": test_config,
        "hypergraph": test_hypergraph,
        "model": test_model,
        "training": test_training,
        "pipeline": test_pipeline,
        "unit": run_unit_tests,
    }

    results = {}
    selected = list(tests) if args.all else args.tests
    for name in selected:
        if name in tests:
            logger.info(f"\n{'=' * 50}\nRunning {name} test\n{'=' * 50}")
            results[name] = _run(name, tests[name])
        else:
            logger.error(f"Unknown test: {name}")
            results[name] = False

    # Print summary
    logger.info(f"\n{'=' * 50}\nTest Results\n{'=' * 50}")
    for name, result in results.items():
        status = "PASS" if result else "FAIL"
        logger.info(f"{name}: {status}")

    return all(results.values())


def main():
    """Parse arguments and run tests."""
    parser = argparse.ArgumentParser(description='Test Natural-HNN components')
    parser.add_argument('--all', action='store_true', help='Run all tests')
    parser.add_argument('tests', nargs='*', default=['config'],
                        help='Tests to run (config, hypergraph, model, training, pipeline, unit)')
    args = parser.parse_args()

    success = run_tests(args)

    if success:
        logger.info("All tests passed!")
        sys.exit(0)
    else:
        logger.error("One or more tests failed")
        sys.exit(1)


if __name__ == "__main__":
    main()
