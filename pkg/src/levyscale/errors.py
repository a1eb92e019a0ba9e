"""Exception hierarchy shared by all levyscale modules."""

from __future__ import annotations


class LevyScaleError(Exception):
    """Base class. ``stage`` names the pipeline step that raised, when known."""

    def __init__(self, message: str, *, stage: str | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.stage = stage
        self.diagnostics = diagnostics or {}

    def with_stage(self, stage: str) -> "LevyScaleError":
        if self.stage is None:
            self.stage = stage
        return self

    def __str__(self) -> str:
        base = super().__str__()
        return f"[{self.stage}] {base}" if self.stage else base


class ModelError(LevyScaleError, ValueError):
    """The Lévy triplet is invalid (integrability, drift sign, parameters)."""


class NumericalIntegrationError(LevyScaleError):
    """Quadrature failed to reach the requested tolerance."""

    def __init__(self, message: str, *, achieved: float | None = None, **kw):
        super().__init__(message, **kw)
        self.achieved = achieved


class RootFindError(LevyScaleError):
    pass


class InversionError(LevyScaleError):
    """Laplace inversion produced a negative or non-monotone scale function."""


class PreconditionError(LevyScaleError):
    pass


class DomainError(LevyScaleError, ValueError):
    pass


class GridRangeError(LevyScaleError, ValueError):
    """Evaluation requested outside the tabulated grid."""


class MarginError(LevyScaleError, ValueError):
    pass


class LocalizationError(LevyScaleError):
    """The global minimum of W^(q)' could not be bracketed inside the grid."""


class UnsupportedModelError(LevyScaleError):
    pass
