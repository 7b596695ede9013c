"""
Weighted total objective, ablation presets and the loss-curve log.
"""

from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from errors import ConfigurationError, NonFiniteError
from tensor import Tensor, as_tensor


# log column order; L_unsup trails so the core columns stay in place
LOSS_TERMS = ("L_clip", "L_supcon", "L_sty", "L_con", "L_lpips", "L_unsup")
STAGE2_COLUMNS = ("step", "L_clip", "L_supcon", "L_sty", "L_con", "L_lpips", "total", "L_unsup")
STAGE1_COLUMNS = ("step", "L_rec", "L_lpips", "total")


@dataclass
class LossWeights:
    """Coefficients of the stage-2 objective."""
    lambda_clip: float = 1.0
    lambda_supcon: float = 2.0
    lambda_sty: float = 50.0
    lambda_con: float = 0.02
    lambda_lpips: float = 1.0
    lambda_unsup: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value) or value < 0:
                raise ConfigurationError(f"{name} must be a finite nonnegative number, got {value}")

    def weight(self, term: str) -> float:
        if term not in LOSS_TERMS:
            raise ConfigurationError(f"unknown loss term '{term}', expected one of {LOSS_TERMS}")
        return getattr(self, "lambda_" + term[len("L_"):])

    def active(self, term: str) -> bool:
        return self.weight(term) > 0.0

    @classmethod
    def preset(cls, name: str) -> "LossWeights":
        if name not in ABLATION_PRESETS:
            raise ConfigurationError(f"unknown ablation preset '{name}', expected one of {sorted(ABLATION_PRESETS)}")
        return ABLATION_PRESETS[name]


def total_loss(terms: Mapping[str, Union[Tensor, float]], weights: LossWeights) -> Tensor:
    """
    Σ λ_term · L_term over the given terms.

    Raises:
        NonFiniteError: Naming the first non-finite component
    """
    total = None
    for name, value in terms.items():
        value = as_tensor(value)
        if not np.all(np.isfinite(value.data)):
            raise NonFiniteError(f"loss term {name} is not finite ({value.data})")
        w = weights.weight(name)
        if w == 0.0:
            continue
        total = value * w if total is None else total + value * w
    return total if total is not None else Tensor(0.0)


_BASELINE = LossWeights(
    lambda_clip=0.0, lambda_supcon=0.0, lambda_sty=50.0, lambda_con=0.02, lambda_lpips=0.0, lambda_unsup=0.0,
)

ABLATION_PRESETS: Dict[str, LossWeights] = {
    "baseline": _BASELINE,
    "clip": replace(_BASELINE, lambda_clip=1.0),
    "unsup": replace(_BASELINE, lambda_unsup=1.0),
    "clip_unsup": replace(_BASELINE, lambda_clip=1.0, lambda_unsup=1.0),
    "clip_unsup_lpips": replace(_BASELINE, lambda_clip=1.0, lambda_unsup=1.0, lambda_lpips=1.0),
    "clip_supcon": replace(_BASELINE, lambda_clip=1.0, lambda_supcon=2.0),
    "clip_supcon_lpips": LossWeights(),
}


class LossLog:
    """Per-step loss records written as CSV."""

    def __init__(self, columns: Sequence[str] = STAGE2_COLUMNS):
        self.columns = tuple(columns)
        self.rows: List[Dict[str, float]] = []

    def append(self, step: int, values: Mapping[str, float]):
        row = {"step": int(step)}
        for column in self.columns[1:]:
            row[column] = float(values.get(column, 0.0))
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(self.columns))

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> pd.DataFrame:
        return pd.read_csv(path)
