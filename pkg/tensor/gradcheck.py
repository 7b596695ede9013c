"""
Central finite-difference gradient checks.

A case builder takes an RngStream and returns `(fn, inputs)`: `fn(inputs)`
produces a scalar Tensor and `inputs` are the float64 leaves to check.
`run_case` evaluates a builder on many random instances and reports the worst
relative error, ‖analytic − numeric‖∞ / max(‖analytic‖∞, ‖numeric‖∞, 1e-8).
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from tensor import functional as F
from tensor.random import RngStream
from tensor.scan import linear_recurrence
from tensor.tensor import Tensor, no_grad


CaseFn = Callable[[List[Tensor]], Tensor]
CaseBuilder = Callable[[RngStream], Tuple[CaseFn, List[Tensor]]]


@dataclass
class GradCheckResult:
    """Worst-case finite-difference agreement for one operation."""
    name: str
    instances: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error) and self.max_rel_error < self.tolerance)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-8)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def numeric_gradient(fn: CaseFn, inputs: Sequence[Tensor], target: Tensor, h: float = 1e-5) -> np.ndarray:
    """d fn / d target by central differences, perturbing `target.data` in place."""
    grad = np.zeros_like(target.data)
    flat = target.data.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = fn(list(inputs)).item()
            flat[i] = original - h
            minus = fn(list(inputs)).item()
            flat[i] = original
            grad.reshape(-1)[i] = (plus - minus) / (2.0 * h)
    return grad


def check_gradients(fn: CaseFn, inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """Largest relative error over all inputs between backward() and finite differences."""
    for t in inputs:
        t.data = np.ascontiguousarray(t.data, dtype=np.float64)
        t.requires_grad = True
        t.zero_grad()
    fn(list(inputs)).backward()
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_gradient(fn, inputs, t, h)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def run_case(
    name: str,
    builder: CaseBuilder,
    instances: int = 20,
    seed: int = 0,
    tolerance: float = 1e-4,
) -> GradCheckResult:
    stream = RngStream(seed)
    worst = 0.0
    for i in range(instances):
        fn, inputs = builder(stream.split(i))
        worst = max(worst, check_gradients(fn, inputs))
    return GradCheckResult(name=name, instances=instances, max_rel_error=worst, tolerance=tolerance)


def weighted_sum(rng: RngStream) -> Callable[[Tensor], Tensor]:
    """Reduce an output to a scalar with fixed random weights drawn on first use."""
    cache: Dict[str, np.ndarray] = {}

    def project(out: Tensor) -> Tensor:
        if "w" not in cache:
            cache["w"] = rng.normal(out.shape)
        return (out * cache["w"]).sum()

    return project


def _leaf(rng: RngStream, *shape: int, low: float = None, high: float = None) -> Tensor:
    if low is not None:
        return Tensor(rng.uniform(low, high, shape))
    return Tensor(rng.normal(shape))


def _binary(op: str, positive_b: bool = False) -> CaseBuilder:
    def build(rng: RngStream):
        project = weighted_sum(rng.split(99))
        a = _leaf(rng, 3, 4)
        b = _leaf(rng, 4, low=0.5, high=2.0) if positive_b else _leaf(rng, 1, 4)
        return (lambda xs: project(F.elementwise(op, xs[0], xs[1]))), [a, b]
    return build


def _unary(op: str, positive: bool = False) -> CaseBuilder:
    def build(rng: RngStream):
        project = weighted_sum(rng.split(99))
        x = _leaf(rng, 3, 5, low=0.5, high=2.0) if positive else _leaf(rng, 3, 5)
        return (lambda xs: project(F.elementwise(op, xs[0]))), [x]
    return build


def _method(name: str, positive: bool = False, **kwargs) -> CaseBuilder:
    def build(rng: RngStream):
        project = weighted_sum(rng.split(99))
        x = _leaf(rng, 2, 3, 4, low=0.5, high=2.0) if positive else _leaf(rng, 2, 3, 4)
        return (lambda xs: project(getattr(xs[0], name)(**kwargs))), [x]
    return build


def _matmul(rng: RngStream):
    project = weighted_sum(rng.split(99))
    return (lambda xs: project(xs[0] @ xs[1])), [_leaf(rng, 3, 4), _leaf(rng, 4, 2)]


def _batched_matmul(rng: RngStream):
    project = weighted_sum(rng.split(99))
    return (lambda xs: project(xs[0] @ xs[1])), [_leaf(rng, 2, 3, 4), _leaf(rng, 4, 2)]


def _conv(stride: int):
    def build(rng: RngStream):
        project = weighted_sum(rng.split(99))
        x, w, b = _leaf(rng, 2, 3, 8, 8), _leaf(rng, 4, 3, 3, 3), _leaf(rng, 4)
        return (lambda xs: project(F.conv2d(xs[0], xs[1], xs[2], stride=stride))), [x, w, b]
    return build


def _layer_norm(rng: RngStream):
    project = weighted_sum(rng.split(99))
    return (lambda xs: project(F.layer_norm(xs[0]))), [_leaf(rng, 3, 6)]


def _softmax(rng: RngStream):
    project = weighted_sum(rng.split(99))
    return (lambda xs: project(F.softmax(xs[0], axis=-1))), [_leaf(rng, 3, 5)]


def _log_softmax(rng: RngStream):
    project = weighted_sum(rng.split(99))
    return (lambda xs: project(F.log_softmax(xs[0], axis=-1))), [_leaf(rng, 3, 5)]


def _cosine(rng: RngStream):
    return (lambda xs: F.cosine_similarity(xs[0], xs[1])), [_leaf(rng, 6), _leaf(rng, 6)]


def _l2_normalize(rng: RngStream):
    project = weighted_sum(rng.split(99))
    return (lambda xs: project(F.l2_normalize(xs[0], axis=-1))), [_leaf(rng, 3, 6)]


def _gram(rng: RngStream):
    project = weighted_sum(rng.split(99))
    return (lambda xs: project(F.gram(xs[0]))), [_leaf(rng, 4, 9)]


def _shape_ops(rng: RngStream):
    project = weighted_sum(rng.split(99))

    def fn(xs):
        a, b = xs
        joined = F.concat([a.reshape(3, 4), b.transpose(1, 0)], axis=0)
        return project(joined[1:6, ::2])

    return fn, [_leaf(rng, 2, 6), _leaf(rng, 4, 3)]


def _resample(rng: RngStream):
    project = weighted_sum(rng.split(99))
    return (lambda xs: project(F.avg_pool2d(F.upsample_nearest(xs[0]) * xs[0].sum(), 2))), [_leaf(rng, 1, 2, 3, 3)]


def _recurrence(rng: RngStream):
    project = weighted_sum(rng.split(99))
    a = _leaf(rng, 7, 3, low=0.1, high=0.95)
    return (lambda xs: project(linear_recurrence(xs[0], xs[1], axis=0))), [a, _leaf(rng, 7, 3)]


def _composite(rng: RngStream):
    """conv -> layer_norm -> matmul -> sum."""
    def fn(xs):
        x, w, m = xs
        feat = F.conv2d(x, w)
        tokens = feat.reshape(1, 3, 16).transpose(0, 2, 1)
        return (F.layer_norm(tokens) @ m).sum()

    return fn, [_leaf(rng, 1, 2, 4, 4), _leaf(rng, 3, 2, 3, 3), _leaf(rng, 3, 2)]


TENSOR_CASES: Dict[str, CaseBuilder] = {
    "add": _binary("add"),
    "sub": _binary("sub"),
    "mul": _binary("mul"),
    "div": _binary("div", positive_b=True),
    "exp": _unary("exp"),
    "log": _unary("log", positive=True),
    "softplus": _unary("softplus"),
    "tanh": _unary("tanh"),
    "relu": _unary("relu"),
    "negate": _unary("negate"),
    "sigmoid": _method("sigmoid"),
    "elu": _method("elu"),
    "sqrt": _method("sqrt", positive=True),
    "pow": _method("__pow__", positive=True, exponent=1.5),
    "sum": _method("sum", axis=1),
    "mean": _method("mean", axis=(0, 2)),
    "max": _method("max", axis=-1),
    "matmul": _matmul,
    "matmul_batched": _batched_matmul,
    "conv2d": _conv(1),
    "conv2d_stride2": _conv(2),
    "layer_norm": _layer_norm,
    "softmax": _softmax,
    "log_softmax": _log_softmax,
    "cosine_similarity": _cosine,
    "l2_normalize": _l2_normalize,
    "gram": _gram,
    "reshape_transpose_slice_concat": _shape_ops,
    "upsample_avg_pool": _resample,
    "linear_recurrence": _recurrence,
    "composite": _composite,
}
