# Metrics module: training losses and analysis metrics
from .losses import LossReport, task_loss, factor_discrimination_loss, compute_loss
from .evaluation import (
    accuracy, macro_f1, micro_f1, classification_report, pearson_factor_correlation, mean_abs_offdiagonal,
    relevance_similarity, pairwise_relevance_similarity, cluster_similarity, factor_recovery_score
)

__all__ = [
    'LossReport', 'task_loss', 'factor_discrimination_loss', 'compute_loss',
    'accuracy', 'macro_f1', 'micro_f1', 'classification_report', 'pearson_factor_correlation',
    'mean_abs_offdiagonal', 'relevance_similarity', 'pairwise_relevance_similarity', 'cluster_similarity',
    'factor_recovery_score'
]
