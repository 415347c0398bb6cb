"""
Exception hierarchy for the Arctic structural BVAR toolkit.

Input problems derive from ``ValueError`` as well so callers that only know
about the builtin still catch them. Numerical failures share
``NumericalError`` so the command line can map them to one exit code.
"""
from typing import Iterable, Optional


class ArcticBvarError(Exception):
    """Base class for all toolkit errors."""


class PanelError(ArcticBvarError, ValueError):
    """Malformed or inconsistent monthly panel input."""


class ConfigError(ArcticBvarError, ValueError):
    """Invalid or incomplete run configuration."""


class NumericalError(ArcticBvarError):
    """A numerical routine could not produce a valid result."""


class BsmError(NumericalError):
    """Kalman filter or structural-model estimation failure."""


class BvarError(NumericalError):
    """Reduced-form estimation failure."""


class IdentificationError(NumericalError):
    """Structural identification failure."""


class ScenarioError(NumericalError):
    """Forecast or conditioning failure."""


class StageError(ArcticBvarError):
    """A pipeline stage failed; carries the stage name and missing artifacts."""

    def __init__(
        self,
        stage: str,
        message: str,
        missing: Optional[Iterable[str]] = None,
        cause: Optional[BaseException] = None,
    ):
        self.stage = stage
        self.missing = sorted(missing) if missing else []
        self.cause = cause
        text = f"[{stage}] {message}"
        if self.missing:
            text += f" (missing: {', '.join(self.missing)})"
        super().__init__(text)
