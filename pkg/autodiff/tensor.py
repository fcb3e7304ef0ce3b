import logging
import threading

import numpy as np
from scipy.special import expit, log_softmax as _log_softmax

from config.settings import dtype_name

logger = logging.getLogger("Autodiff")

DTYPES = {"f32": np.float32, "f64": np.float64}

_state = threading.local()


class ShapeMismatch(ValueError):
    """Raised when operand shapes do not fit a primitive."""


class NonFiniteValue(ValueError):
    """Raised by checked constructors when data holds NaN or Inf."""


def resolve_dtype(dtype=None):
    """
    Map a dtype spec to a numpy float type.

    Args:
        dtype: None (use NHNN_DTYPE), 'f32', 'f64' or a numpy dtype

    Returns:
        numpy dtype
    """
    if dtype is None:
        return DTYPES[dtype_name()]
    if isinstance(dtype, str):
        return DTYPES[dtype]
    return np.dtype(dtype).type


class Tensor:
    """
    Dense real array that records how it was computed so gradients can flow
    back to the leaf tensors marked with requires_grad.
    """

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        arr = np.array(data, dtype=resolve_dtype(dtype))
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue(f"tensor {name or ''} holds NaN or Inf")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @classmethod
    def _wrap(cls, data, requires_grad):
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul_elementwise(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data, dtype=None):
    """Wrap data as a tensor that never receives gradients."""
    if isinstance(data, Tensor):
        return data
    return Tensor(data, requires_grad=False, dtype=dtype)


class Record:
    """One primitive application on the tape."""

    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """
    Ordered record of primitive applications for one forward pass.

    Used as a context manager; primitives record onto the innermost active
    tape of the current thread. A tape is rebuilt for every forward pass.
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        stack = getattr(_state, "tapes", None)
        if stack is None:
            stack = _state.tapes = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tapes.pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, op, inputs, output, backward_fn):
        self.records.append(Record(op, inputs, output, backward_fn))

    def backward(self, loss):
        return backward(self, loss)


def current_tape():
    stack = getattr(_state, "tapes", None)
    return stack[-1] if stack else None


def _result(op, data, inputs, backward_fn):
    requires = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires)
    tape = current_tape()
    if requires and tape is not None:
        tape.record(op, inputs, out, backward_fn)
    return out


def backward(tape, loss):
    """
    Run reverse-mode accumulation over the tape.

    Args:
        tape (Tape): Tape holding the forward pass of loss
        loss (Tensor): Scalar output to differentiate

    Returns:
        dict: Leaf tensor -> gradient array (also stored on tensor.grad)
    """
    if loss.data.size != 1:
        raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.shape}")

    grads = {id(loss): np.ones_like(loss.data)}
    produced = set()
    leaves = {}

    for rec in reversed(tape.records):
        produced.add(id(rec.output))
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for tensor, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            grads[key] = grads[key] + gi if key in grads else gi

    for rec in tape.records:
        for tensor in rec.inputs:
            if tensor.requires_grad and id(tensor) not in produced:
                leaves[id(tensor)] = tensor

    result = {}
    for key, tensor in leaves.items():
        g = grads.get(key)
        tensor.grad = np.zeros_like(tensor.data) if g is None else g.astype(tensor.dtype, copy=False)
        result[tensor] = tensor.grad
    return result


def _check_2d(op, *tensors):
    for t in tensors:
        if t.ndim != 2:
            raise ShapeMismatch(f"{op} expects matrices, got shape {t.shape}")


def _broadcast_ok(a, b):
    if a.shape == b.shape:
        return True
    return a.ndim == 2 and b.ndim == 1 and b.shape[0] == a.shape[1]


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    return g.sum(axis=0)


# ---------------------------------------------------------------------------
# Elementwise and linear primitives
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Matrix product of an n×k and a k×m tensor."""
    _check_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    x, y = a.data, b.data

    def grad(g):
        return g @ y.T, x.T @ g

    return _result("matmul", x @ y, (a, b), grad)


def add(a, b):
    """Sum of equal shapes, or a row vector added to every row of a matrix."""
    if not _broadcast_ok(a, b):
        raise ShapeMismatch(f"add {a.shape} + {b.shape}")

    def grad(g):
        return g, _unbroadcast(g, b.shape)

    return _result("add", a.data + b.data, (a, b), grad)


def sub(a, b):
    if not _broadcast_ok(a, b):
        raise ShapeMismatch(f"sub {a.shape} - {b.shape}")

    def grad(g):
        return g, -_unbroadcast(g, b.shape)

    return _result("sub", a.data - b.data, (a, b), grad)


def mul_elementwise(a, b):
    if not _broadcast_ok(a, b):
        raise ShapeMismatch(f"mul {a.shape} * {b.shape}")
    x, y = a.data, b.data

    def grad(g):
        return g * y, _unbroadcast(g * x, b.shape)

    return _result("mul", x * y, (a, b), grad)


def scale(a, c):
    """Multiply by a python scalar."""
    c = float(c)

    def grad(g):
        return (g * c,)

    return _result("scale", a.data * a.data.dtype.type(c), (a,), grad)


def sigmoid(a):
    y = expit(a.data)

    def grad(g):
        return (g * y * (1.0 - y),)

    return _result("sigmoid", y, (a,), grad)


def tanh(a):
    y = np.tanh(a.data)

    def grad(g):
        return (g * (1.0 - y * y),)

    return _result("tanh", y, (a,), grad)


def reciprocal(a):
    y = 1.0 / a.data

    def grad(g):
        return (-g * y * y,)

    return _result("reciprocal", y, (a,), grad)


def clamp_min(a, floor):
    """max(a, floor) elementwise; no gradient where the floor is active."""
    x = a.data
    keep = x >= floor

    def grad(g):
        return (g * keep,)

    return _result("clamp_min", np.where(keep, x, x.dtype.type(floor)), (a,), grad)


def row_scale(a, v):
    """Multiply row i of a matrix by v[i]."""
    _check_2d("row_scale", a)
    if v.ndim != 1 or v.shape[0] != a.shape[0]:
        raise ShapeMismatch(f"row_scale {a.shape} by {v.shape}")
    x, w = a.data, v.data

    def grad(g):
        return g * w[:, None], np.einsum("ij,ij->i", g, x)

    return _result("row_scale", x * w[:, None], (a, v), grad)


def row_sum(a):
    _check_2d("row_sum", a)
    cols = a.shape[1]

    def grad(g):
        return (np.repeat(g[:, None], cols, axis=1),)

    return _result("row_sum", a.data.sum(axis=1), (a,), grad)


def sum_all(a):
    shape = a.shape

    def grad(g):
        return (np.full(shape, g, dtype=a.dtype),)

    return _result("sum_all", np.asarray(a.data.sum()), (a,), grad)


# ---------------------------------------------------------------------------
# Normalisation
# ---------------------------------------------------------------------------

def l2_normalize_rows(a, eps=1e-12):
    """Divide every row by max(‖row‖₂, eps)."""
    _check_2d("l2_normalize_rows", a)
    x = a.data
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    guarded = norms <= eps
    denom = np.where(guarded, x.dtype.type(eps), norms)
    y = x / denom[:, None]

    def grad(g):
        proj = np.einsum("ij,ij->i", y, g)
        gx = (g - np.where(guarded, 0.0, 1.0)[:, None] * y * proj[:, None]) / denom[:, None]
        return (gx.astype(x.dtype, copy=False),)

    return _result("l2_normalize_rows", y, (a,), grad)


def layer_norm(a, gamma, beta, eps=1e-5):
    """Per-row standardisation followed by an elementwise affine map."""
    _check_2d("layer_norm", a)
    d = a.shape[1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch(f"layer_norm affine terms must have shape ({d},)")
    x = a.data
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    gam, bet = gamma.data, beta.data

    def grad(g):
        gy = g * gam
        gx = inv_std * (gy - gy.mean(axis=1, keepdims=True)
                        - xhat * (gy * xhat).mean(axis=1, keepdims=True))
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _result("layer_norm", xhat * gam + bet, (a, gamma, beta), grad)


# ---------------------------------------------------------------------------
# Structural primitives
# ---------------------------------------------------------------------------

def concat_cols(parts):
    parts = list(parts)
    _check_2d("concat_cols", *parts)
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeMismatch(f"concat_cols row counts differ: {sorted(rows)}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def grad(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result("concat_cols", np.concatenate([p.data for p in parts], axis=1), tuple(parts), grad)


def concat_rows(parts):
    parts = list(parts)
    _check_2d("concat_rows", *parts)
    cols = {p.shape[1] for p in parts}
    if len(cols) != 1:
        raise ShapeMismatch(f"concat_rows column counts differ: {sorted(cols)}")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def grad(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result("concat_rows", np.concatenate([p.data for p in parts], axis=0), tuple(parts), grad)


def slice_cols(a, start, stop):
    _check_2d("slice_cols", a)
    shape = a.shape

    def grad(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, start:stop] = g
        return (full,)

    return _result("slice_cols", a.data[:, start:stop], (a,), grad)


def chunk_cols(a, k):
    """Split the columns into k equal consecutive blocks."""
    _check_2d("chunk_cols", a)
    d = a.shape[1]
    if k < 1 or d % k:
        raise ShapeMismatch(f"cannot chunk {d} columns into {k} factors")
    width = d // k
    return [slice_cols(a, i * width, (i + 1) * width) for i in range(k)]


def column(a, k):
    """Column k of a matrix as a vector."""
    _check_2d("column", a)
    shape = a.shape

    def grad(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, k] = g
        return (full,)

    return _result("column", a.data[:, k].copy(), (a,), grad)


def stack_cols(vectors):
    """Stack n-vectors as the columns of an n×K matrix."""
    vectors = list(vectors)
    for v in vectors:
        if v.ndim != 1 or v.shape != vectors[0].shape:
            raise ShapeMismatch("stack_cols expects equal-length vectors")

    def grad(g):
        return tuple(g[:, i] for i in range(len(vectors)))

    return _result("stack_cols", np.stack([v.data for v in vectors], axis=1), tuple(vectors), grad)


def take_rows(a, index):
    """Gather rows by index (repeats allowed)."""
    index = np.asarray(index, dtype=np.int64)
    shape = a.shape

    def grad(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, index, g)
        return (full,)

    return _result("take_rows", a.data[index], (a,), grad)


def reshape(a, shape):
    old = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeMismatch(f"cannot reshape {old} to {shape}") from e

    def grad(g):
        return (g.reshape(old),)

    return _result("reshape", data, (a,), grad)


# ---------------------------------------------------------------------------
# Classification primitives
# ---------------------------------------------------------------------------

def log_softmax(a):
    _check_2d("log_softmax", a)
    y = _log_softmax(a.data, axis=1)

    def grad(g):
        return (g - np.exp(y) * g.sum(axis=1, keepdims=True),)

    return _result("log_softmax", y, (a,), grad)


def pick(a, labels):
    """Entry labels[i] of every row i."""
    _check_2d("pick", a)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (a.shape[0],):
        raise ShapeMismatch(f"pick needs {a.shape[0]} labels, got {labels.shape}")
    rows = np.arange(a.shape[0])
    shape = a.shape

    def grad(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[rows, labels] = g
        return (full,)

    return _result("pick", a.data[rows, labels], (a,), grad)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under row softmax."""
    n = logits.shape[0]
    if n == 0:
        raise ShapeMismatch("cross_entropy over an empty batch")
    return scale(sum_all(pick(log_softmax(logits), labels)), -1.0 / n)


def dropout(a, p, rng, training):
    """
    Inverted dropout.

    Args:
        a (Tensor): Input
        p (float): Drop probability
        rng (numpy.random.Generator): Mask source
        training (bool): Identity when False
    """
    if not training or p <= 0.0:
        return a
    if p >= 1.0:
        raise ValueError("dropout probability must be below 1")
    keep = 1.0 - p
    mask = (rng.random(a.shape) < keep).astype(a.dtype) / a.dtype.type(keep)

    def grad(g):
        return (g * mask,)

    return _result("dropout", a.data * mask, (a,), grad)
