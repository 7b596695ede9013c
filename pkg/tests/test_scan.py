"""
Selective scan: agreement with a direct per-step loop, direction symmetry and
long-sequence stability.
"""

import numpy as np
import pytest

from errors import ShapeError, UsageError
from model import ScanDirection, SsmParams, bidirectional_scan, ssm_scan
from tensor import RngStream, Tensor, linear_recurrence, no_grad
from tensor.scan import _scan_steps, scan_rows


def naive_scan(x: np.ndarray, params: SsmParams) -> np.ndarray:
    """Token-by-token recurrence, written out with plain loops."""
    A = -np.exp(params.a_log.data)
    h = np.zeros_like(A)
    out = np.empty_like(x)
    for t in range(x.shape[0]):
        delta = np.logaddexp(0.0, x[t] @ params.delta_proj.weight.data + params.delta_proj.bias.data)
        b = x[t] @ params.b_proj.weight.data
        c = x[t] @ params.c_proj.weight.data
        h = np.exp(delta[:, None] * A) * h + delta[:, None] * b[None, :] * x[t][:, None]
        out[t] = h @ c + params.d_skip.data * x[t]
    return out


# =============================================================================
# Equivalence with the direct loop
# =============================================================================

class TestScanEquivalence:

    @pytest.mark.parametrize("instance", range(50))
    def test_matches_naive_loop(self, instance):
        rng = RngStream(11).split(instance)
        length = int(rng.split(0).integers(1, 12))
        d = int(rng.split(1).integers(1, 5))
        n = int(rng.split(2).integers(1, 4))
        params = SsmParams(d, n, rng.split(3))
        params.delta_proj.bias.data += rng.split(4).normal(d)
        x = rng.split(5).normal((length, d))
        with no_grad():
            fast = ssm_scan(Tensor(x), params).data
        np.testing.assert_allclose(fast, naive_scan(x, params), rtol=0, atol=1e-10)

    def test_batched_rows_are_independent(self, rng):
        params = SsmParams(3, 2, rng.split(0))
        x = rng.split(1).normal((4, 6, 3))
        with no_grad():
            batched = ssm_scan(Tensor(x), params).data
            single = np.stack([ssm_scan(Tensor(row), params).data for row in x])
        np.testing.assert_allclose(batched, single, atol=1e-12)

    def test_backward_direction_is_reversed_forward(self, rng):
        params = SsmParams(3, 2, rng.split(0))
        x = rng.split(1).normal((7, 3))
        with no_grad():
            backward = ssm_scan(Tensor(x), params, ScanDirection.BACKWARD).data
            expected = naive_scan(x[::-1].copy(), params)[::-1]
        np.testing.assert_allclose(backward, expected, atol=1e-10)

    def test_unknown_direction(self, rng):
        with pytest.raises(UsageError):
            ssm_scan(Tensor(np.ones((2, 3))), SsmParams(3, 2, rng), "sideways")


# =============================================================================
# Bidirectional symmetry and stability
# =============================================================================

class TestBidirectional:

    def test_reversing_input_reverses_output(self, rng):
        params = SsmParams(4, 3, rng.split(0))
        x = rng.split(1).normal((9, 4))
        with no_grad():
            out = bidirectional_scan(Tensor(x), params).data
            flipped = bidirectional_scan(Tensor(x[::-1].copy()), params).data
        np.testing.assert_allclose(flipped, out[::-1], atol=1e-12)

    def test_long_sequence_stays_bounded(self, rng):
        params = SsmParams(4, 4, rng.split(0))
        x = rng.split(1).normal((10_000, 4))
        with no_grad():
            out = bidirectional_scan(Tensor(x), params).data
        assert np.all(np.isfinite(out))
        assert np.max(np.abs(out)) < 1e4

    def test_state_matrix_is_negative(self, rng):
        params = SsmParams(5, 3, rng)
        assert np.all(params.A.data < 0)


# =============================================================================
# Linear recurrence kernel
# =============================================================================

class TestLinearRecurrence:

    def test_kernel_matches_reference_loop(self, rng):
        a = rng.split(0).uniform(0.0, 1.0, (20, 6))
        b = rng.split(1).normal((20, 6))
        np.testing.assert_allclose(scan_rows(a, b), _scan_steps(a, b), atol=1e-14)

    def test_scan_along_inner_axis(self, rng):
        a = rng.split(0).uniform(0.0, 1.0, (3, 8))
        b = rng.split(1).normal((3, 8))
        out = linear_recurrence(a, b, axis=1).data
        np.testing.assert_allclose(out, _scan_steps(a.T.copy(), b.T.copy()).T, atol=1e-14)

    def test_zero_input_gives_zero_state(self, rng):
        a = rng.uniform(0.0, 1.0, (15, 4))
        np.testing.assert_array_equal(linear_recurrence(a, np.zeros((15, 4))).data, 0.0)

    def test_single_step_returns_input(self, rng):
        a = rng.split(0).uniform(0.0, 1.0, (1, 5))
        b = rng.split(1).normal((1, 5))
        np.testing.assert_array_equal(linear_recurrence(a, b).data, b)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            linear_recurrence(np.ones((4, 2)), np.ones((4, 3)))
