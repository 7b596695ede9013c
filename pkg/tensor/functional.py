"""
Differentiable operations built on Tensor.

Primitives with dedicated backward rules (conv2d, softmax, l2_norm, pooling,
concatenation) live here next to compositions of Tensor methods (layer_norm,
cosine_similarity, gram).
"""

import warnings
from pathlib import Path
from typing import Dict, Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from errors import DegenerateInputWarning, NonFiniteError, ShapeError, UsageError
from tensor.tensor import Operand, Tensor, as_tensor, normalize_axes


_BINARY: Dict[str, Callable[[Tensor, Operand], Tensor]] = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
}

_UNARY: Dict[str, Callable[[Tensor], Tensor]] = {
    "exp": Tensor.exp,
    "log": Tensor.log,
    "softplus": Tensor.softplus,
    "tanh": Tensor.tanh,
    "relu": Tensor.relu,
    "negate": Tensor.__neg__,
}

ELEMENTWISE_OPS = tuple(_BINARY) + tuple(_UNARY) + ("scale",)


def elementwise(op: str, a: Operand, b: Optional[Operand] = None) -> Tensor:
    """
    Apply a named elementwise operation.

    Args:
        op: One of ELEMENTWISE_OPS
        a: First operand
        b: Second operand for binary ops, or the factor for "scale"

    Returns:
        Result tensor with its backward rule registered
    """
    a = as_tensor(a)
    if op in _BINARY:
        if b is None:
            raise UsageError(f"'{op}' needs two operands")
        return _BINARY[op](a, b)
    if op in _UNARY:
        return _UNARY[op](a)
    if op == "scale":
        if b is None or isinstance(b, Tensor) or np.ndim(b) != 0:
            raise UsageError("'scale' needs a scalar factor")
        return a * float(b)
    raise UsageError(f"unknown elementwise op '{op}', expected one of {ELEMENTWISE_OPS}")


def matmul(a: Operand, b: Operand) -> Tensor:
    return as_tensor(a) @ b


def reduce(op: str, x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if op not in ("sum", "mean", "max"):
        raise UsageError(f"unknown reduction '{op}'")
    return getattr(as_tensor(x), op)(axis=axis, keepdims=keepdims)


def concat(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    datas = [t.data for t in tensors]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"cannot concatenate shapes {[d.shape for d in datas]} on axis {axis}") from exc
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.result(out, tensors, backward, "concat")


def stack(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    return concat([as_tensor(t).unsqueeze(axis) for t in tensors], axis=axis)


# ----------------------------------------------------------------------
# Convolution and resampling


def conv2d(
    x: Tensor,
    w: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    pad: Optional[int] = None,
) -> Tensor:
    """
    2-D cross-correlation with zero padding.

    Args:
        x: Input [B, C, H, W]
        w: Kernel [O, C, k, k] with odd k
        bias: Optional per-output-channel bias [O]
        stride: 1 or 2
        pad: Zero padding on each side (default k // 2)

    Returns:
        Output [B, O, H', W']
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d expects [B,C,H,W] and [O,C,k,k], got {x.shape} and {w.shape}")
    out_channels, channels, k, k_w = w.shape
    if k != k_w or k % 2 == 0:
        raise ShapeError(f"conv2d kernel must be square with odd size, got {k}x{k_w}")
    if channels != x.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape[1]}, kernel {channels}")
    if stride not in (1, 2):
        raise ShapeError(f"conv2d stride must be 1 or 2, got {stride}")
    pad = k // 2 if pad is None else pad

    batch, _, height, width = x.shape
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    if k > padded.shape[2] or k > padded.shape[3]:
        raise ShapeError(f"kernel {k}x{k} larger than padded input {padded.shape[2:]}")

    windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    columns = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * out_h * out_w, channels * k * k)
    kernel = w.data.reshape(out_channels, channels * k * k)
    out = (columns @ kernel.T).reshape(batch, out_h, out_w, out_channels).transpose(0, 3, 1, 2)

    def backward(g):
        g_rows = g.transpose(0, 2, 3, 1).reshape(-1, out_channels)
        grad_w = (g_rows.T @ columns).reshape(w.shape)
        grad_cols = (g_rows @ kernel).reshape(batch, out_h, out_w, channels, k, k)
        grad_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                grad_padded[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += (
                    grad_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        grad_x = grad_padded[:, :, pad:pad + height, pad:pad + width]
        return grad_x, grad_w

    result = Tensor.result(np.ascontiguousarray(out), (x, w), backward, "conv2d")
    if bias is not None:
        result = result + as_tensor(bias).reshape(1, out_channels, 1, 1)
    return result


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    x = as_tensor(x)
    b, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def backward(g):
        return (g.reshape(b, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return Tensor.result(out, (x,), backward, "upsample")


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    x = as_tensor(x)
    b, c, h, w = x.shape
    if h % size or w % size:
        raise ShapeError(f"avg_pool2d({size}) needs spatial extents divisible by {size}, got {h}x{w}")
    out = x.data.reshape(b, c, h // size, size, w // size, size).mean(axis=(3, 5))

    def backward(g):
        spread = np.repeat(np.repeat(g, size, axis=2), size, axis=3)
        return (spread / (size * size),)

    return Tensor.result(out, (x,), backward, "avg_pool2d")


# ----------------------------------------------------------------------
# Normalization


def standardize(x: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Zero-mean, unit-variance along `axis` (biased variance, eps inside the root)."""
    x = as_tensor(x)
    centered = x - x.mean(axis=axis, keepdims=True)
    variance = (centered * centered).mean(axis=axis, keepdims=True)
    return centered / (variance + eps).sqrt()


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-last-axis normalization without learned affine."""
    return standardize(x, axis=-1, eps=eps)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.result(out, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor.result(out, (x,), backward, "log_softmax")


def l2_norm(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along `axis`; the gradient at a zero vector is taken as 0."""
    x = as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    out = norm if keepdims else np.squeeze(norm, axis=normalize_axes(axis, x.ndim))

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, normalize_axes(axis, x.ndim))
        safe = np.where(norm > 0, norm, 1.0)
        return (g * np.where(norm > 0, x.data / safe, 0.0),)

    return Tensor.result(out, (x,), backward, "l2_norm")


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    x = as_tensor(x)
    return x / (l2_norm(x, axis=axis, keepdims=True) + eps)


def cosine_similarity(a: Operand, b: Operand, axis: int = -1, eps: float = 1e-8) -> Tensor:
    """
    a·b / (‖a‖‖b‖ + eps) along `axis`.

    Both-zero inputs give 0 and emit a DegenerateInputWarning.
    """
    a, b = as_tensor(a), as_tensor(b)
    norm_a = l2_norm(a, axis=axis)
    norm_b = l2_norm(b, axis=axis)
    if np.any((norm_a.data == 0) & (norm_b.data == 0)):
        warnings.warn("cosine similarity of two zero vectors taken as 0", DegenerateInputWarning, stacklevel=2)
    return (a * b).sum(axis=axis) / (norm_a * norm_b + eps)


def gram(features: Tensor) -> Tensor:
    """F·Fᵀ over the last two axes of [..., C, N]."""
    features = as_tensor(features)
    return features @ features.swapaxes(-1, -2)


# ----------------------------------------------------------------------
# Diagnostics


def assert_finite(x: Union[Tensor, np.ndarray], name: str = "tensor") -> Union[Tensor, np.ndarray]:
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if not np.all(np.isfinite(data)):
        bad = int(np.size(data) - np.count_nonzero(np.isfinite(data)))
        raise NonFiniteError(f"{name} has {bad} non-finite entries")
    return x


def dump_csv(x: Union[Tensor, np.ndarray], path: Union[str, Path]) -> Path:
    """Write a tensor row-major to CSV, preceded by a `# shape: d0,d1,...` line."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = data.reshape(1, -1) if data.ndim < 2 else data.reshape(-1, data.shape[-1])
    with open(path, "w") as f:
        f.write("# shape: " + ",".join(str(d) for d in data.shape) + "\n")
        pd.DataFrame(rows).to_csv(f, header=False, index=False, float_format="%.17g")
    return path


def load_csv(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    with open(path) as f:
        header = f.readline().strip()
    if not header.startswith("# shape:"):
        raise ShapeError(f"{path} has no shape header")
    dims = header.split(":", 1)[1].strip()
    shape = tuple(int(d) for d in dims.split(",")) if dims else ()
    values = pd.read_csv(path, header=None, skiprows=1).to_numpy(dtype=np.float64)
    return values.reshape(shape)
