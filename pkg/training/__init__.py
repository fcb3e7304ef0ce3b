# Training module: Adam optimisation, early-stopped training runs and experiment protocols
from .optimizer import AdamState, adam_step
from .trainer import (
    TrainConfig, TrainConfigError, RunResult, Evaluation, DivergenceDetected, Trainer, train, evaluate, predict
)
from .experiments import (
    GRID_KEYS, FIXED_ALPHA_VARIANTS, expand_grid, sweep, summarize_sweep, analyze_run, pilot_config,
    disentanglement_pilot, calibrated_thresholds, load_pilot_record, save_pilot_record, scaling_benchmark,
    check_model_gradients, run_gradient_suite
)

__all__ = [
    'AdamState', 'adam_step',
    'TrainConfig', 'TrainConfigError', 'RunResult', 'Evaluation', 'DivergenceDetected', 'Trainer', 'train',
    'evaluate', 'predict',
    'GRID_KEYS', 'FIXED_ALPHA_VARIANTS', 'expand_grid', 'sweep', 'summarize_sweep', 'analyze_run', 'pilot_config',
    'disentanglement_pilot', 'calibrated_thresholds', 'load_pilot_record', 'save_pilot_record', 'scaling_benchmark',
    'check_model_gradients', 'run_gradient_suite'
]
