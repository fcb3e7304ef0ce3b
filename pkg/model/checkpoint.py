import logging

import numpy as np

from hypergraph.container import MalformedFile, read_container, write_container
from .network import ModelConfig, ModelConfigError, init_params

logger = logging.getLogger("Checkpoint")

PARAMS_MAGIC = b"NHNP"


def save_params(params, cfg, path):
    """
    Write learned parameters to the NHNP container (f64 payload).

    Args:
        params (ModelParams): Parameters to save
        cfg (ModelConfig): Architecture the parameters belong to
        path (str): Output file
    """
    named = params.named_parameters()
    header = {
        "model": cfg.to_dict(),
        "task": params.task,
        "input_dim": int(params.input_dim),
        "num_classes": int(params.num_classes),
        "num_hyperedges": int(params.num_hyperedges),
        "tensors": [[name, list(t.shape)] for name, t in named.items()],
    }
    sections = [t.data.astype("<f8") for t in named.values()]
    write_container(path, PARAMS_MAGIC, header, sections)
    logger.info(f"Saved {len(named)} parameter tensors to {path}")


def load_params(path, dtype=None):
    """
    Read parameters written by save_params.

    Args:
        path (str): Checkpoint file
        dtype: Tensor precision for the restored parameters

    Returns:
        tuple: (ModelParams, ModelConfig)
    """
    header, reader = read_container(path, PARAMS_MAGIC)
    try:
        cfg = ModelConfig(**header["model"])
        task = header["task"]
        input_dim, num_classes = int(header["input_dim"]), int(header["num_classes"])
        num_hyperedges = int(header["num_hyperedges"])
        tensors = [(name, tuple(shape)) for name, shape in header["tensors"]]
    except (KeyError, TypeError, ValueError, ModelConfigError) as e:
        raise MalformedFile(f"{path}: incomplete checkpoint header: {e}") from e

    # Fresh parameters give the layout; values come from the file
    params = init_params(cfg, input_dim, num_classes, num_hyperedges, task, np.random.default_rng(0), dtype)
    named = params.named_parameters()
    if [n for n, _ in tensors] != list(named):
        raise MalformedFile(f"{path}: tensor names do not match a {cfg.variant} model")
    for name, shape in tensors:
        target = named[name]
        if shape != target.shape:
            raise MalformedFile(f"{path}: tensor {name} has shape {shape}, expected {target.shape}")
        target.data = reader.read("<f8", int(np.prod(shape, dtype=np.int64))).reshape(shape).astype(target.dtype)
    reader.finish()
    logger.info(f"Loaded {len(tensors)} parameter tensors from {path}")
    return params, cfg
