"""Trainable monogenic (local phase / phase asymmetry) feature layer for 2D images."""
from .errors import (CheckpointError, ConfigError, DivergenceError, InvalidInputError, InvalidShapeError,
                     Mono2DError)
from .estimators import Mono2D, Mono2DSegmenter
from .filters import LogGaborSpec, LowPassSpec
from .monogenic import PhaseFeatures, forward
from .autodiff import forward_with_tangents, grad_of_scalar
from .params import FilterBank, init_bank

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ConfigError", "DivergenceError", "FilterBank", "InvalidInputError",
    "InvalidShapeError", "LogGaborSpec", "LowPassSpec", "Mono2D", "Mono2DError", "Mono2DSegmenter",
    "PhaseFeatures", "forward", "forward_with_tangents", "grad_of_scalar", "init_bank",
]
