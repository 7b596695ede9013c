"""
Exception hierarchy for CLAST.

Every failure raised by the library derives from ClastError so the runner can
map it to an exit code. Numerical degeneracies that have a defined fallback
are reported as DegenerateInputWarning instead.
"""


class ClastError(Exception):
    """Base class for all CLAST errors."""


class ShapeError(ClastError, ValueError):
    """Incompatible tensor shapes."""


class UsageError(ClastError, ValueError):
    """An API or command line used outside its contract."""


class ConfigurationError(ClastError, ValueError):
    """Invalid configuration values or dataset parameters."""


class StyleLookupError(ClastError, KeyError):
    """Unknown style class id or name."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else "unknown style"


class CalibrationError(ClastError, RuntimeError):
    """Anchor calibration could not be completed."""


class NonFiniteError(ClastError, FloatingPointError):
    """A tensor or loss component contains NaN or Inf."""


class DivergenceError(ClastError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, checkpoint_path=None, step: int = -1):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
        self.step = step


class EvaluationError(ClastError, ValueError):
    """Evaluation inputs or outputs violate their invariants."""


class DegenerateInputWarning(UserWarning):
    """A degenerate numerical case was handled by a documented convention."""
