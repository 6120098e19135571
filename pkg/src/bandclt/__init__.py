"""Fluctuations of linear eigenvalue statistics of random band matrices.

Modules: ``ensemble`` (band matrix laws and sampling), ``combinatorics``
(exact gamma_k, Dyck counts, moment coefficients), ``varengine`` (limit
kernel, bilinear form, variances), ``spectral`` (eigensolves and norm
experiments), ``montecarlo`` (replicate runs) and ``cli``.
"""
__version__ = "0.1.0"

from .combinatorics import gamma_closed, gamma_quadrature, gamma_table, moment_coeff
from .ensemble import EnsembleSpec, EntryDistribution, Topology, sample
from .errors import (
    AccuracyError,
    BandCltError,
    ConfigError,
    InsufficientDataError,
    InvalidSpecError,
    KernelSingularityError,
    NumericInputError,
    ReplicateFailureError,
)
from .montecarlo import McConfig, empirical_a, empirical_bilinear, run_linear_stat
from .spectral import Spectrum, eigenvalues, linear_statistic, matrix_function
from .testfunctions import TestFunction, named, parse_test_function, polynomial
from .varengine import a_limit, f_kernel_integral, f_kernel_series, var_band, var_gauss

__all__ = [
    "__version__",
    "gamma_closed",
    "gamma_quadrature",
    "gamma_table",
    "moment_coeff",
    "EnsembleSpec",
    "EntryDistribution",
    "Topology",
    "sample",
    "AccuracyError",
    "BandCltError",
    "ConfigError",
    "InsufficientDataError",
    "InvalidSpecError",
    "KernelSingularityError",
    "NumericInputError",
    "ReplicateFailureError",
    "McConfig",
    "empirical_a",
    "empirical_bilinear",
    "run_linear_stat",
    "Spectrum",
    "eigenvalues",
    "linear_statistic",
    "matrix_function",
    "TestFunction",
    "named",
    "parse_test_function",
    "polynomial",
    "a_limit",
    "f_kernel_integral",
    "f_kernel_series",
    "var_band",
    "var_gauss",
]
