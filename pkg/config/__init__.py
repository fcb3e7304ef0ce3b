# Configuration module for model, training and experiment settings
from .settings import (
    DEFAULT_CONFIG, ConfigError, load_settings, save_settings, merge_configs,
    update_setting, get_setting, dtype_name
)

__all__ = ['DEFAULT_CONFIG', 'ConfigError', 'load_settings', 'save_settings', 'merge_configs',
           'update_setting', 'get_setting', 'dtype_name']
