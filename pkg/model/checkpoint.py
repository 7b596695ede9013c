"""
JSON checkpoint container.

    {
      "format": "clast-checkpoint/1",
      "header": {...},
      "parameters": {"<module>.<param>": {"shape": [...], "data": [...]}, ...}
    }

Floats are written with their shortest round-trip representation, so
save → load → save reproduces the file byte for byte.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np

from errors import ConfigurationError
from model.layers import Module
from model.network import NetworkConfig


CHECKPOINT_FORMAT = "clast-checkpoint/1"


@dataclass
class CheckpointHeader:
    channels: int
    state_size: int
    fusion_variant: str
    fusion_depth: int
    embed_dim: int
    manifest_hash: str = ""
    stage: int = 0
    step: int = 0
    seed: int = 0
    extra: Dict[str, Union[int, float, str]] = field(default_factory=dict)

    @classmethod
    def for_network(cls, config: NetworkConfig, manifest_hash: str = "", **kwargs) -> "CheckpointHeader":
        return cls(
            channels=config.channels,
            state_size=config.state_size,
            fusion_variant=config.fusion_variant,
            fusion_depth=config.fusion_depth,
            embed_dim=config.embed_dim,
            manifest_hash=manifest_hash,
            seed=config.seed,
            **kwargs,
        )

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(
            channels=self.channels,
            state_size=self.state_size,
            embed_dim=self.embed_dim,
            fusion_variant=self.fusion_variant,
            fusion_depth=self.fusion_depth,
            seed=self.seed,
        )


@dataclass
class Checkpoint:
    header: CheckpointHeader
    parameters: Dict[str, np.ndarray]

    @classmethod
    def capture(cls, header: CheckpointHeader, modules: Dict[str, Module]) -> "Checkpoint":
        """Snapshot every parameter of `modules`, names prefixed by their key."""
        parameters = {}
        for prefix, module in modules.items():
            for name, value in module.state_dict().items():
                parameters[f"{prefix}.{name}"] = value
        return cls(header=header, parameters=parameters)

    def state_for(self, prefix: str) -> Dict[str, np.ndarray]:
        lead = f"{prefix}."
        return {name[len(lead):]: value for name, value in self.parameters.items() if name.startswith(lead)}

    def restore(self, modules: Dict[str, Module]):
        for prefix, module in modules.items():
            state = self.state_for(prefix)
            if not state:
                raise ConfigurationError(f"checkpoint has no parameters for '{prefix}'")
            module.load_state_dict(state)

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "header": asdict(self.header),
            "parameters": {
                name: {"shape": list(value.shape), "data": value.ravel().tolist()}
                for name, value in self.parameters.items()
            },
        }

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"checkpoint not found: {path}")
        with open(path) as f:
            data = json.load(f)
        if data.get("format") != CHECKPOINT_FORMAT:
            raise ConfigurationError(f"{path} is not a checkpoint (format {data.get('format')!r})")
        parameters = {
            name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in data["parameters"].items()
        }
        return cls(header=CheckpointHeader(**data["header"]), parameters=parameters)
