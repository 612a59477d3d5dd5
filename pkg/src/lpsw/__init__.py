"""Littlewood-Paley tools, Besov norms, and a shallow water Picard iteration on the periodic torus."""

__version__ = "0.1.0"

from .errors import (
    CFLError,
    ConfigurationError,
    CoverageError,
    DivergenceError,
    LpswError,
    PreconditionError,
    RegimeExitError,
)
from .grid import Field, Grid, read_field, write_field
from .norms import BesovParams, besov, besov_norm, chemin_lerner_norm, lp_norm, sobolev_norm
from .partition import DyadicPartition, build_partition, dyadic_block, paraproduct, remainder

__all__ = [
    "__version__",
    "BesovParams",
    "CFLError",
    "ConfigurationError",
    "CoverageError",
    "DivergenceError",
    "DyadicPartition",
    "Field",
    "Grid",
    "LpswError",
    "PreconditionError",
    "RegimeExitError",
    "besov",
    "besov_norm",
    "build_partition",
    "chemin_lerner_norm",
    "dyadic_block",
    "lp_norm",
    "paraproduct",
    "read_field",
    "remainder",
    "sobolev_norm",
    "write_field",
]
