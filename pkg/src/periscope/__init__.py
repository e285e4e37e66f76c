"""Periodic GARCH/ACD estimation with Fourier and wavelet parameter
compression: fit periodic conditional-variance or duration models by
quasi-maximum likelihood, test the transform coefficients of each parameter
family, and rebuild a parsimonious model from the significant ones."""

from .core import (
    Family,
    FitResult,
    InnovationSpec,
    Law,
    ModelKind,
    ModelSpec,
    PeriodicVector,
    SchemaError,
    SpecificationError,
    StabilityWarning,
    flatten,
    load_model,
    save_model,
    unflatten,
)
from .harmonic import FourierCoefs, FourierReduction, PositivityError
from .optimize import GlobalInitConfig, OptimizerConfig
from .wavelet import WaveletCoefs, WaveletReduction, WaveletSpec

__version__ = "0.1.0"

__all__ = [
    "Family",
    "FitResult",
    "InnovationSpec",
    "Law",
    "ModelKind",
    "ModelSpec",
    "PeriodicVector",
    "SchemaError",
    "SpecificationError",
    "StabilityWarning",
    "flatten",
    "unflatten",
    "save_model",
    "load_model",
    "FourierCoefs",
    "FourierReduction",
    "PositivityError",
    "WaveletCoefs",
    "WaveletReduction",
    "WaveletSpec",
    "OptimizerConfig",
    "GlobalInitConfig",
    "__version__",
]
