"""Measurable Riemannian structures on finite-atom Dirichlet-form models.

Energy measures, minimal energy-dominant measures, pointwise index,
coordinate tuples, the gradient along them, and the martingale
representation of the associated jump chain.
"""
from . import forms, medm, riemann, stoch
from .errors import (
    BackendMismatchError,
    CatalogueError,
    CompositeError,
    DominationError,
    EmptyFamilyError,
    IllConditionedError,
    LevelError,
    MRSError,
    RepresentationError,
    SamplingError,
)

__version__ = "0.1.0"

__all__ = [
    "forms", "medm", "riemann", "stoch", "MRSError", "BackendMismatchError", "CatalogueError",
    "CompositeError", "DominationError", "EmptyFamilyError", "IllConditionedError", "LevelError",
    "RepresentationError", "SamplingError",
]
