"""
Selective state-space scan over a token sequence.

For every token x_t (length-d vector) and per-channel diagonal state of size n:

    Δ_t = softplus(x_t W_Δ + b_Δ)            [d]
    Ā_t = exp(Δ_t ⊗ A),  A = −exp(a_log)     [d, n]
    h_t = Ā_t ⊙ h_{t−1} + (Δ_t ⊗ x_t W_B) ⊙ x_t
    y_t = h_t · (x_t W_C) + Dskip ⊙ x_t

The recurrence runs through `linear_recurrence`, so cost is O(L·d·n).
"""

from enum import Enum
from typing import Union

import numpy as np

from errors import UsageError
from model.layers import Linear, Module, Parameter
from tensor import RngStream, Tensor, as_tensor, linear_recurrence


class ScanDirection(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class SsmParams(Module):
    """
    Parameters of one selective scan.

    Attributes:
        a_log: [d, n], A = −exp(a_log) is strictly negative
        d_skip: [d] skip gain
        delta_proj: W_Δ [d→d] with bias b_Δ
        b_proj: W_B [d→n], no bias
        c_proj: W_C [d→n], no bias
    """

    def __init__(self, channels: int, state_size: int, rng: RngStream):
        self.channels = channels
        self.state_size = state_size
        self.a_log = Parameter(np.log(np.tile(np.arange(1, state_size + 1, dtype=np.float64), (channels, 1))))
        self.d_skip = Parameter(np.ones(channels))
        self.delta_proj = Linear(channels, channels, rng.split(0))
        self.b_proj = Linear(channels, state_size, rng.split(1), bias=False)
        self.c_proj = Linear(channels, state_size, rng.split(2), bias=False)

        # step sizes start log-uniform in [1e-3, 1e-1]; bias = softplus⁻¹(Δ)
        dt = np.exp(rng.split(3).uniform(np.log(1e-3), np.log(1e-1), channels))
        self.delta_proj.bias.data = dt + np.log(-np.expm1(-dt))

    @property
    def A(self) -> Tensor:
        return -(self.a_log.exp())


def ssm_scan(
    x: Tensor,
    params: SsmParams,
    direction: Union[ScanDirection, str] = ScanDirection.FORWARD,
) -> Tensor:
    """
    Run the selective scan over axis -2 of x ([..., L, d]).

    The backward direction reverses the sequence before and after the scan.
    """
    try:
        direction = ScanDirection(direction)
    except ValueError as exc:
        raise UsageError(f"unknown scan direction '{direction}'") from exc
    x = as_tensor(x)
    if direction is ScanDirection.BACKWARD:
        return ssm_scan(x.flip(-2), params, ScanDirection.FORWARD).flip(-2)

    delta = params.delta_proj(x).softplus()
    decay = (delta.unsqueeze(-1) * params.A).exp()
    drive = delta.unsqueeze(-1) * params.b_proj(x).unsqueeze(-2) * x.unsqueeze(-1)
    state = linear_recurrence(decay, drive, axis=-3)
    readout = (state * params.c_proj(x).unsqueeze(-2)).sum(axis=-1)
    return readout + x * params.d_skip


def bidirectional_scan(x: Tensor, params: SsmParams) -> Tensor:
    """Sum of the forward and backward scans; image tokens have no causal order."""
    return ssm_scan(x, params, ScanDirection.FORWARD) + ssm_scan(x, params, ScanDirection.BACKWARD)
