"""
Configuration for CLAST runs.

Every key is a field of `Settings`. Values are resolved with increasing
precedence from:

    1. the dataclass defaults below
    2. a KEY=value config file (--config), parsed with python-dotenv
    3. environment variables CLAST_<KEY>
    4. command-line flags (--seed, --deterministic, --set KEY=VALUE, subcommand flags)

The resolved configuration is echoed to <run_dir>/config.resolved; its
SHA-256 is the config hash recorded in reports.
"""

import hashlib
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values
from rich.console import Console

from errors import ConfigurationError


ENV_PREFIX = "CLAST_"
RESOLVED_NAME = "config.resolved"

console = Console(highlight=False)
error_console = Console(stderr=True, highlight=False)


@dataclass
class Settings:
    """All tunable keys of a run."""

    # Run
    seed: int = 0
    deterministic: bool = False             # single-threaded numerics, sequential dataset build
    workers: int = 1                        # dataset rendering threads
    run_dir: str = "./clast_output/run"
    dataset_dir: str = "./clast_output/dataset"
    verbose: bool = True

    # Dataset
    num_classes: int = 2                    # C
    paintings_per_class: int = 8            # K
    num_contents: int = 16                  # M
    image_size: int = 32
    embed_dim: int = 64                     # D
    hue_bandwidth: float = 0.25             # radians
    holdout_fraction: float = 0.25

    # Network
    channels: int = 64                      # d
    state_size: int = 8                     # n
    fusion_variant: str = "ssm_adaln"
    fusion_depth: int = 2
    proj_dim: int = 128
    temperature: float = 0.1

    # Training
    stage1_iterations: int = 2000
    stage1_lr: float = 1e-3
    stage2_iterations: int = 500
    lr: float = 1e-4
    batch_size: int = 4
    checkpoint_every: int = 250
    log_every: int = 50

    # Loss weights
    lambda_clip: float = 1.0
    lambda_supcon: float = 2.0
    lambda_sty: float = 50.0
    lambda_con: float = 0.02
    lambda_lpips: float = 1.0
    lambda_unsup: float = 0.0

    # Deception classifier
    classifier_steps: int = 2000
    classifier_lr: float = 0.5

    # Benchmark
    bench_lengths: Tuple[int, ...] = (256, 1024, 4096, 16384)
    bench_repeats: int = 20
    bench_warmup: int = 3
    bench_float_width: int = 32
    bench_variants: Tuple[str, ...] = ("ssm_adaln", "attn_adain", "linattn_adaln")

    def update(self, values: Mapping[str, object], source: str = "override") -> "Settings":
        """Apply string or typed values by key; unknown keys are configuration errors."""
        types = {f.name: f.type for f in fields(self)}
        for raw_key, value in values.items():
            key = raw_key.strip().lower()
            if key not in types:
                raise ConfigurationError(f"unknown config key '{raw_key}' ({source})")
            if value is None:
                continue
            setattr(self, key, _coerce(key, value, types[key], source))
        return self

    def to_lines(self) -> Iterable[str]:
        for key, value in sorted(asdict(self).items()):
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            yield f"{key}={value}"

    def resolved_text(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.resolved_text().encode("utf-8")).hexdigest()

    def write_resolved(self, run_dir: Union[str, Path, None] = None) -> Path:
        path = Path(run_dir or self.run_dir) / RESOLVED_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.resolved_text())
        return path

    def effective_workers(self) -> int:
        return 1 if self.deterministic else max(1, self.workers)


_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _coerce(key: str, value, declared, source: str):
    kind = declared if isinstance(declared, type) else str(declared)
    try:
        if kind in (bool, "bool"):
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(text)
        if kind in (int, "int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(str(value).strip()) if not isinstance(value, (int, float)) else int(value)
        if kind in (float, "float"):
            return float(value)
        if kind in (str, "str"):
            return str(value).strip()
        if "Tuple[int" in str(kind):
            items = value.split(",") if isinstance(value, str) else value
            return tuple(int(str(v).strip()) for v in items if str(v).strip())
        if "Tuple[str" in str(kind):
            items = value.split(",") if isinstance(value, str) else value
            return tuple(str(v).strip() for v in items if str(v).strip())
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"config key '{key}' cannot take value {value!r} ({source})") from exc
    raise ConfigurationError(f"config key '{key}' has unsupported type {declared}")


def parse_assignments(pairs: Optional[Iterable[str]]) -> Dict[str, str]:
    """KEY=VALUE strings (from --set) to a dict."""
    values = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigurationError(f"--set expects KEY=VALUE, got '{pair}'")
        key, value = pair.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_settings(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, object]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> Settings:
    """
    Resolve settings from defaults, config file, environment and overrides.

    Args:
        config_file: Optional KEY=value file
        overrides: Highest-precedence values (CLI flags); None entries are ignored
        environ: Environment mapping, defaults to os.environ

    Raises:
        ConfigurationError: For unknown keys, bad values or a missing config file
    """
    settings = Settings()
    if config_file is not None:
        path = Path(config_file)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        settings.update({k: v for k, v in dotenv_values(path).items() if v is not None}, source=str(path))

    environ = os.environ if environ is None else environ
    known = {f.name for f in fields(Settings)}
    from_env = {
        name[len(ENV_PREFIX):].lower(): value
        for name, value in environ.items()
        if name.startswith(ENV_PREFIX) and name[len(ENV_PREFIX):].lower() in known
    }
    settings.update(from_env, source="environment")
    settings.update(dict(overrides or {}), source="command line")
    return settings
