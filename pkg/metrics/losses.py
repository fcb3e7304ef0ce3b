import logging
from dataclasses import dataclass

import numpy as np

from autodiff import tensor as T

logger = logging.getLogger("Metrics")


@dataclass(frozen=True)
class LossReport:
    task_loss: float
    dis_loss: float
    dis_weight: float
    total: float

    @property
    def finite(self):
        return bool(np.isfinite([self.task_loss, self.dis_loss, self.total]).all())

    def to_dict(self):
        return {"task_loss": self.task_loss, "dis_loss": self.dis_loss, "total": self.total}


def task_loss(logits, labels, mask=None):
    """
    Mean cross-entropy over the masked population.

    Args:
        logits (Tensor): P×C scores
        labels (array-like): P integer labels
        mask (array-like): Optional boolean selection of rows

    Returns:
        Tensor: Scalar loss
    """
    labels = np.asarray(labels, dtype=np.int64)
    if mask is not None:
        index = np.flatnonzero(np.asarray(mask, dtype=bool))
        if index.size == 0:
            raise T.ShapeMismatch("task loss over an empty mask")
        logits = T.take_rows(logits, index)
        labels = labels[index]
    return T.cross_entropy(logits, labels)


def factor_discrimination_loss(factor_reps, factor_classifiers, num_factors):
    """
    Pseudo-label loss: chunk k of every hyperedge representation should be
    classified as factor k.

    Cross-entropy is averaged over hyperedges, factors and layers, i.e. the
    summed loss divided by M·K·L.

    Args:
        factor_reps (list): One M×d hyperedge factor tensor per layer
        factor_classifiers (list): One (weight (d/K)×K, bias K) pair per layer
        num_factors (int): K

    Returns:
        Tensor: Scalar loss
    """
    if len(factor_reps) != len(factor_classifiers):
        raise T.ShapeMismatch(f"{len(factor_reps)} layers but {len(factor_classifiers)} factor classifiers")
    per_layer = []
    for reps, (weight, bias) in zip(factor_reps, factor_classifiers):
        rows = reps.shape[0]
        stacked = T.concat_rows(T.chunk_cols(reps, num_factors))
        pseudo = np.repeat(np.arange(num_factors), rows)
        logits = T.add(T.matmul(stacked, weight), bias)
        per_layer.append(T.cross_entropy(logits, pseudo))
    total = per_layer[0]
    for loss in per_layer[1:]:
        total = T.add(total, loss)
    return T.scale(total, 1.0 / len(per_layer))


def compute_loss(output, labels, mask, params, cfg):
    """
    Total objective task + λ·dis for one forward pass.

    Args:
        output (ModelOutput): Result of model_forward
        labels (array-like): Labels of the whole population
        mask (array-like): Rows that contribute to the task loss
        params (ModelParams): Holds the factor classifiers
        cfg (ModelConfig): Supplies λ and K

    Returns:
        tuple: (scalar loss Tensor, LossReport)
    """
    loss = task_loss(output.logits, labels, mask)
    task_value = loss.item()
    dis_value = 0.0
    weight = cfg.dis_weight if params.factor_classifiers else 0.0
    if weight > 0:
        dis = factor_discrimination_loss(output.factor_reps, params.factor_classifiers, cfg.num_factors)
        dis_value = dis.item()
        loss = T.add(loss, T.scale(dis, weight))
    report = LossReport(task_value, dis_value, weight, loss.item())
    return loss, report
