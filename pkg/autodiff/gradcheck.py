import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .segments import SegmentMap, segment_mean, segment_sum, segment_weighted_sum

logger = logging.getLogger("GradCheck")


@dataclass
class GradCheckResult:
    name: str
    seed: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.max_rel_error < self.tolerance)


def finite_difference_gradient(f, x, h=1e-5):
    """
    Central-difference gradient of a scalar function, in float64.

    Args:
        f (callable): Maps a Tensor to a scalar (Tensor or float)
        x (Tensor or array): Point of evaluation
        h (float): Step size

    Returns:
        numpy.ndarray: Gradient with the shape of x
    """
    base = np.array(x.data if isinstance(x, T.Tensor) else x, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        plus = _scalar(f(T.Tensor(base, dtype="f64")))
        flat[i] = keep - h
        minus = _scalar(f(T.Tensor(base, dtype="f64")))
        flat[i] = keep
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def _scalar(value):
    if isinstance(value, T.Tensor):
        return float(value.data)
    return float(value)


def relative_error(a, b):
    """‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, 1e-12)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def check_function(fn, inputs, h=1e-5):
    """
    Compare tape gradients of a scalar function against finite differences.

    Args:
        fn (callable): Maps a list of Tensors to a scalar Tensor
        inputs (list): numpy arrays, one per differentiable input
        h (float): Finite-difference step

    Returns:
        float: Largest relative error over the inputs
    """
    leaves = [T.Tensor(x, requires_grad=True, dtype="f64") for x in inputs]
    with T.Tape() as tape:
        loss = fn(leaves)
    tape_grads = T.backward(tape, loss)

    worst = 0.0
    for i, leaf in enumerate(leaves):
        def substituted(t, i=i):
            args = [T.Tensor(x, dtype="f64") for x in inputs]
            args[i] = t
            return fn(args)

        numeric = finite_difference_gradient(substituted, inputs[i], h)
        analytic = tape_grads.get(leaf, np.zeros_like(numeric))
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def _random_map(rng, num_segments, num_rows):
    groups = []
    for s in range(num_segments):
        size = int(rng.integers(0, 4)) if s else int(rng.integers(1, 4))
        groups.append(rng.choice(num_rows, size=size, replace=False).tolist())
    return SegmentMap.from_lists(groups, num_rows)


def _primitive_cases():
    """(name, builder) pairs; builder(rng) -> (input arrays, scalar function)."""

    def unary(op):
        def build(rng):
            x = rng.standard_normal((4, 3))
            weights = rng.standard_normal(op(T.Tensor(x, dtype="f64")).shape)
            return [x], lambda a: T.sum_all(T.mul_elementwise(op(a[0]), T.Tensor(weights, dtype="f64")))
        return build

    def binary(op, shape_b=(4, 3), shape_a=(4, 3)):
        def build(rng):
            a, b = rng.standard_normal(shape_a), rng.standard_normal(shape_b)
            weights = rng.standard_normal(op(T.Tensor(a, dtype="f64"), T.Tensor(b, dtype="f64")).shape)
            return [a, b], lambda t: T.sum_all(T.mul_elementwise(op(t[0], t[1]), T.Tensor(weights, dtype="f64")))
        return build

    def layer_norm_case(rng):
        x, g, b = rng.standard_normal((4, 5)), rng.standard_normal(5), rng.standard_normal(5)
        weights = rng.standard_normal((4, 5))
        return [x, g, b], lambda t: T.sum_all(T.mul_elementwise(T.layer_norm(t[0], t[1], t[2]),
                                                                 T.Tensor(weights, dtype="f64")))

    def concat_case(rng):
        a, b = rng.standard_normal((3, 2)), rng.standard_normal((3, 4))
        w1, w2 = rng.standard_normal((3, 6)), rng.standard_normal((6, 3))

        def fn(t):
            both = T.concat_cols([t[0], t[1]])
            stacked = T.concat_rows([both, T.scale(both, 2.0)])
            return T.sum_all(T.mul_elementwise(stacked, T.Tensor(np.vstack([w1, w2.T]), dtype="f64")))
        return [a, b], fn

    def chunk_case(rng):
        x = rng.standard_normal((3, 6))
        weights = [rng.standard_normal((3, 2)) for _ in range(3)]

        def fn(t):
            parts = T.chunk_cols(t[0], 3)
            terms = [T.sum_all(T.mul_elementwise(p, T.Tensor(w, dtype="f64"))) for p, w in zip(parts, weights)]
            return T.add(T.add(terms[0], terms[1]), T.tanh(terms[2]))
        return [x], fn

    def column_case(rng):
        x = rng.standard_normal((5, 3))
        weights = rng.standard_normal((5, 2))

        def fn(t):
            stacked = T.stack_cols([T.column(t[0], 2), T.column(t[0], 0)])
            return T.sum_all(T.mul_elementwise(stacked, T.Tensor(weights, dtype="f64")))
        return [x], fn

    def row_ops_case(rng):
        x, v = rng.standard_normal((5, 3)), rng.uniform(0.5, 2.0, 5)
        weights = rng.standard_normal(5)

        def fn(t):
            scaled = T.row_scale(t[0], T.reciprocal(T.clamp_min(t[1], 0.1)))
            return T.sum_all(T.mul_elementwise(T.row_sum(scaled), T.Tensor(weights, dtype="f64")))
        return [x, v], fn

    def take_reshape_case(rng):
        x = rng.standard_normal((4, 3))
        index = rng.integers(0, 4, size=6)
        weights = rng.standard_normal((2, 9))
        return [x], lambda t: T.sum_all(T.mul_elementwise(T.reshape(T.take_rows(t[0], index), (2, 9)),
                                                          T.Tensor(weights, dtype="f64")))

    def cross_entropy_case(rng):
        x = rng.standard_normal((5, 4))
        labels = rng.integers(0, 4, size=5)
        return [x], lambda t: T.cross_entropy(t[0], labels)

    def dropout_case(rng):
        x = rng.standard_normal((4, 3))
        seed = int(rng.integers(1 << 31))
        weights = rng.standard_normal((4, 3))
        return [x], lambda t: T.sum_all(T.mul_elementwise(
            T.dropout(t[0], 0.3, np.random.default_rng(seed), True), T.Tensor(weights, dtype="f64")))

    def segment_case(rng):
        x = rng.standard_normal((6, 3))
        w = rng.uniform(0.1, 1.0, 6)
        seg = _random_map(rng, 4, 6)
        wm, ws, wv = rng.standard_normal((4, 3)), rng.standard_normal((4, 3)), rng.standard_normal(4)

        def fn(t):
            mean = segment_mean(t[0], seg)
            total = segment_sum(t[0], seg)
            weighted, wsum = segment_weighted_sum(t[0], t[1], seg)
            out = T.add(T.sum_all(T.mul_elementwise(mean, T.Tensor(wm, dtype="f64"))),
                        T.sum_all(T.mul_elementwise(T.add(total, weighted), T.Tensor(ws, dtype="f64"))))
            return T.add(out, T.sum_all(T.mul_elementwise(wsum, T.Tensor(wv, dtype="f64"))))
        return [x, w], fn

    return [
        ("matmul", binary(T.matmul, shape_b=(3, 2))),
        ("add", binary(T.add)),
        ("add_row_vector", binary(T.add, shape_b=(3,))),
        ("sub", binary(T.sub, shape_b=(3,))),
        ("mul_elementwise", binary(T.mul_elementwise)),
        ("scale", unary(lambda a: T.scale(a, -1.7))),
        ("sigmoid", unary(T.sigmoid)),
        ("tanh", unary(T.tanh)),
        ("l2_normalize_rows", unary(T.l2_normalize_rows)),
        ("layer_norm", layer_norm_case),
        ("concat", concat_case),
        ("chunk_cols", chunk_case),
        ("column_stack", column_case),
        ("row_ops", row_ops_case),
        ("take_rows_reshape", take_reshape_case),
        ("log_softmax", unary(T.log_softmax)),
        ("cross_entropy", cross_entropy_case),
        ("dropout", dropout_case),
        ("segment_ops", segment_case),
    ]


def check_primitives(seeds=10, h=1e-5, tolerance=1e-4):
    """
    Run the finite-difference check over every primitive.

    Args:
        seeds (int): Number of randomized instances per primitive
        h (float): Finite-difference step
        tolerance (float): Relative error threshold

    Returns:
        list: GradCheckResult per (primitive, seed)
    """
    results = []
    for name, build in _primitive_cases():
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            inputs, fn = build(rng)
            err = check_function(fn, inputs, h)
            results.append(GradCheckResult(name, seed, err, tolerance))
            if err >= tolerance:
                logger.warning(f"Gradient check failed for {name} (seed {seed}): relative error {err:.3e}")
    logger.info(f"Checked {len(results)} primitive instances, "
                f"{sum(r.passed for r in results)} passed")
    return results
