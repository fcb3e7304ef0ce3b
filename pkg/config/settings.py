import copy
import json
import os
import logging

logger = logging.getLogger("Settings")

# Default configuration
DEFAULT_CONFIG = {
    # Model settings
    "model": {
        "variant": "full",  # full, ablation, alt-branch or hgnn
        "num_layers": 2,
        "num_factors": 4,
        "hidden": 64,
        "beta": 0.5,
        "dropout": 0.5,
        "dis_weight": 0.0,
        "activation": "tanh",
        "norm_eps": 1e-12,
        "ln_eps": 1e-5,
        "agg_eps": 1e-12
    },

    # Training settings
    "training": {
        "epochs": 500,
        "lr": 0.01,
        "weight_decay": 0.0,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_eps": 1e-8,
        "batch_size": 50,
        "patience": 30,
        "seed": 0,
        "selection_metric": "accuracy",  # accuracy or macro_f1
        "log_every": 50,
        "snapshot_alpha": True
    },

    # Synthetic data generation settings
    "synthetic": {
        "num_nodes": 200,
        "num_hyperedges": 80,
        "num_factors": 2,
        "mean_degree": 6.0,
        "feature_dim": 16,
        "noise_std": 0.1,
        "context_strength": 1.0,
        "private_std": 1.0,
        "num_clusters": 6,
        "num_classes": 3,
        "task": "node",  # node, hypergraph or hyperedge
        "num_samples": 200,
        "seed": 0
    },

    # Split settings
    "split": {
        "ratios": [0.5, 0.25, 0.25],
        "seed": 0
    },

    # Analysis settings
    "analysis": {
        "recovery_val_fraction": 0.5,
        "kmeans_restarts": 10,
        "seed": 0
    },

    # Scaling benchmark settings
    "benchmark": {
        "sizes": [
            {"num_nodes": 2000, "num_hyperedges": 1000, "mean_degree": 64.0, "hidden": 8},
            {"num_nodes": 2000, "num_hyperedges": 1000, "mean_degree": 128.0, "hidden": 8},
            {"num_nodes": 2000, "num_hyperedges": 1000, "mean_degree": 256.0, "hidden": 8}
        ],
        "trials": 5,
        "num_factors": 2,
        "feature_dim": 8,
        "seed": 0
    },

    # Full vs ablation pilot on the planted dataset
    "pilot": {
        "record": "calibration/pilot.json",
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
        "dis_weight": 0.01,
        "margin_target": 0.05,
        "auc_target": 0.85,
        "margin_slack": 0.02,
        "auc_slack": 0.05,
        "jobs": 4,
        "model": {"num_layers": 2, "num_factors": 2, "hidden": 32, "dropout": 0.2},
        "training": {"epochs": 200, "patience": 30, "lr": 0.01}
    },

    # Sweep settings
    "sweep": {
        "grid": {
            "train_ratio": [0.5, 0.1]
        },
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
        "val_ratio": 0.25,
        "test_ratio": 0.25,
        "jobs": 1
    },

    # Gradient check settings
    "gradcheck": {
        "seeds": 10,
        "step": 1e-5,
        "tolerance": 1e-4,
        "num_nodes": 6,
        "num_hyperedges": 3,
        "num_factors": 2,
        "hidden": 8,
        "dis_weight": 0.01
    },

    # Logging settings
    "logging": {
        "level": "INFO",
        "file": None
    }
}

DTYPE_ENV = "NHNN_DTYPE"


class ConfigError(ValueError):
    """Raised when a configuration file or value cannot be used."""


def load_settings(config_path=None):
    """
    Load settings from a configuration file, falling back to defaults.

    Args:
        config_path (str): Path to configuration file

    Returns:
        dict: Configuration dictionary
    """
    config = copy.deepcopy(DEFAULT_CONFIG)

    if config_path and os.path.exists(config_path):
        try:
            with open(config_path, 'r') as f:
                user_config = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Failed to load configuration from {config_path}: {str(e)}")
            raise ConfigError(f"unreadable configuration {config_path}: {e}") from e

        if not isinstance(user_config, dict):
            raise ConfigError(f"configuration {config_path} must hold a JSON object")

        # Merge user config with defaults
        merge_configs(config, user_config)
        logger.info(f"Loaded configuration from {config_path}")
    else:
        if config_path:
            logger.warning(f"Configuration file not found: {config_path}")
        logger.info("Using default configuration")

    return config


def merge_configs(base_config, user_config):
    """
    Recursively merge user configuration into base configuration.

    Args:
        base_config (dict): Base configuration to update
        user_config (dict): User configuration to merge in
    """
    for key, value in user_config.items():
        if key in base_config and isinstance(base_config[key], dict) and isinstance(value, dict):
            # Recursively merge dictionaries
            merge_configs(base_config[key], value)
        else:
            # Replace or add value
            base_config[key] = value


def save_settings(config, config_path):
    """
    Save configuration to a file.

    Args:
        config (dict): Configuration dictionary
        config_path (str): Path to save configuration

    Returns:
        bool: True if saved successfully
    """
    try:
        directory = os.path.dirname(config_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        with open(config_path, 'w') as f:
            json.dump(config, f, indent=2, sort_keys=True)

        logger.info(f"Configuration saved to {config_path}")
        return True

    except OSError as e:
        logger.error(f"Failed to save configuration to {config_path}: {str(e)}")
        return False


def update_setting(config, path, value):
    """
    Update a specific setting in the configuration.

    Args:
        config (dict): Configuration dictionary
        path (str): Dot-separated path to the setting (e.g., 'model.num_factors')
        value: New value for the setting
    """
    parts = path.split('.')
    current = config

    # Navigate to the nested dictionary
    for part in parts[:-1]:
        if part not in current:
            current[part] = {}
        current = current[part]
        if not isinstance(current, dict):
            raise ConfigError(f"cannot set {path}: {part} is not a section")

    current[parts[-1]] = value


def get_setting(config, path, default=None):
    """
    Get a specific setting from the configuration.

    Args:
        config (dict): Configuration dictionary
        path (str): Dot-separated path to the setting (e.g., 'training.lr')
        default: Default value if setting not found

    Returns:
        Value of the setting or default if not found
    """
    current = config
    for part in path.split('.'):
        if not isinstance(current, dict) or part not in current:
            return default
        current = current[part]
    return current


def dtype_name():
    """Return the tensor precision selected through NHNN_DTYPE ('f32' or 'f64')."""
    name = os.environ.get(DTYPE_ENV, "f64").strip().lower()
    if name not in ("f32", "f64"):
        raise ConfigError(f"{DTYPE_ENV} must be f32 or f64, got {name!r}")
    return name
