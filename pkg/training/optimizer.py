import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger("Optimizer")


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params, grads, state, cfg):
    """
    One bias-corrected Adam update, in place.

    Weight decay enters as an L2 term added to the gradient.

    Args:
        params (dict): Name -> Tensor
        grads (dict): Name -> gradient array (missing names count as zero)
        state (AdamState): Moments, updated in place
        cfg: Object with lr, weight_decay, adam_beta1, adam_beta2, adam_eps

    Returns:
        AdamState: The updated state
    """
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.step += 1
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step

    for name, tensor in params.items():
        g = grads.get(name)
        g = np.zeros_like(tensor.data) if g is None else np.asarray(g, dtype=tensor.dtype)
        if cfg.weight_decay:
            g = g + cfg.weight_decay * tensor.data
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(tensor.data)
            v = np.zeros_like(tensor.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = cfg.lr * (m / correction1) / (np.sqrt(v / correction2) + cfg.adam_eps)
        tensor.data = (tensor.data - update).astype(tensor.dtype, copy=False)
    return state
