"""
First-order linear recurrence h_t = a_t * h_{t-1} + b_t as a differentiable op.

The kernel is JIT-compiled with numba when available and falls back to a
per-step numpy loop otherwise. Both paths perform the same operations in the
same order.
"""

import numpy as np

from errors import ShapeError
from tensor.tensor import Operand, Tensor, as_tensor


def _scan_steps(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    length = a.shape[0]
    h = np.empty_like(b)
    state = np.zeros_like(b[0])
    for t in range(length):
        state = a[t] * state + b[t]
        h[t] = state
    return h


try:
    from numba import jit
    HAS_NUMBA = True

    @jit(nopython=True, nogil=True)
    def _scan_kernel(a, b):
        length, width = a.shape
        h = np.empty_like(b)
        state = np.zeros_like(b[0])
        for t in range(length):
            for m in range(width):
                state[m] = a[t, m] * state[m] + b[t, m]
                h[t, m] = state[m]
        return h

except ImportError:
    HAS_NUMBA = False
    _scan_kernel = _scan_steps


def scan_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Run the recurrence over axis 0 of two [L, M] arrays (no autodiff)."""
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b, dtype=a.dtype)
    return _scan_kernel(a, b)


def linear_recurrence(a: Operand, b: Operand, axis: int = 0) -> Tensor:
    """
    Differentiable inclusive scan with h_{-1} = 0.

    Args:
        a: Decay factors, same shape as b
        b: Inputs
        axis: Sequence axis

    Returns:
        h with the shape of b

    The backward pass is the same recurrence run in reverse:
    G_t = g_t + a_{t+1} G_{t+1}, db_t = G_t, da_t = G_t h_{t-1}.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"linear_recurrence operands differ in shape: {a.shape} vs {b.shape}")
    shape = b.shape
    axis = axis % len(shape)
    length = shape[axis]

    a_rows = np.moveaxis(a.data, axis, 0).reshape(length, -1)
    b_rows = np.moveaxis(b.data, axis, 0).reshape(length, -1)
    h_rows = scan_rows(a_rows, b_rows)
    moved_shape = (length,) + shape[:axis] + shape[axis + 1:]
    out = np.moveaxis(h_rows.reshape(moved_shape), 0, axis)

    def backward(g):
        g_rows = np.moveaxis(g, axis, 0).reshape(length, -1)
        decay_next = np.zeros_like(a_rows)
        decay_next[:-1] = a_rows[1:]
        total = scan_rows(decay_next[::-1], g_rows[::-1])[::-1]
        h_prev = np.zeros_like(h_rows)
        h_prev[1:] = h_rows[:-1]
        grad_a = np.moveaxis((total * h_prev).reshape(moved_shape), 0, axis)
        grad_b = np.moveaxis(total.reshape(moved_shape), 0, axis)
        return grad_a, grad_b

    return Tensor.result(np.ascontiguousarray(out), (a, b), backward, "linear_recurrence")
