"""
Parameter containers and basic layers.

Modules discover their parameters by walking instance attributes in
definition order, so parameter names (and checkpoint layouts) are stable.
"""

from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigurationError, ShapeError
from tensor import RngStream, Tensor, conv2d


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data: np.ndarray, name: Optional[str] = None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)


class Module:
    """Base class for everything that owns parameters."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False

    def unfreeze(self):
        for p in self.parameters():
            p.requires_grad = True

    def to_dtype(self, dtype) -> "Module":
        """Cast every parameter in place (float32 is used by the benchmark)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ConfigurationError(
                f"state dict mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}"
            )
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ShapeError(f"parameter {name}: expected {p.shape}, got {value.shape}")
            p.data = value.astype(p.dtype).copy()
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Linear(Module):
    """y = x·W + b with W stored as [in, out]."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: Optional[RngStream] = None,
        bias: bool = True,
        scale: Optional[float] = None,
    ):
        self.in_features = in_features
        self.out_features = out_features
        std = 1.0 / np.sqrt(in_features) if scale is None else scale
        if rng is None or std == 0.0:
            weight = np.zeros((in_features, out_features))
        else:
            weight = rng.normal((in_features, out_features), scale=std)
        self.weight = Parameter(weight)
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError(f"Linear expects last extent {self.in_features}, got {x.shape}")
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class Conv2d(Module):
    """Square-kernel convolution with He-normal initialization."""

    def __init__(self, in_channels: int, out_channels: int, rng: RngStream, kernel: int = 3, stride: int = 1):
        self.stride = stride
        fan_in = in_channels * kernel * kernel
        self.weight = Parameter(rng.normal((out_channels, in_channels, kernel, kernel), scale=np.sqrt(2.0 / fan_in)))
        self.bias = Parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride)


ACTIVATIONS = {
    "tanh": Tensor.tanh,
    "relu": Tensor.relu,
    "elu": Tensor.elu,
}


class MLP(Module):
    """Stack of Linear layers with an activation between consecutive layers."""

    def __init__(self, sizes: Sequence[int], rng: RngStream, activation: str = "tanh"):
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation '{activation}'")
        self.activation = activation
        self.layers = [
            Linear(sizes[i], sizes[i + 1], rng.split(i)) for i in range(len(sizes) - 1)
        ]

    def forward(self, x: Tensor) -> Tensor:
        act = ACTIVATIONS[self.activation]
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = act(x)
        return x
