"""Pseudomode embedding of bosonic baths with complex-weighted correlation functions."""
from .correlation import (
    ExponentialSeries,
    MatsubaraSpec,
    PoleTerm,
    SpectralDensityModel,
    analytic_c0,
    correlation_quadrature,
    matsubara_series,
)
from .dynamics import (
    Liouvillian,
    SystemSpec,
    Trajectory,
    assemble_liouvillian,
    check_physicality,
    convergence_sweep,
    propagate,
    qrt_correlation,
)
from .exceptions import (
    ConvergenceError,
    DimensionCapError,
    DomainError,
    FitWarning,
    InputError,
    NumericalError,
    PseudomodeError,
    TruncationWarning,
)
from .expfit import ExponentialFit, ExponentialSumRegressor, fit_matsubara_tail
from .oracles import HeomConfig, heom_config, heom_solve, pure_dephasing_exact
from .pseudomodes import Pseudomode, PseudomodeSet, spin_boson_pipeline

__version__ = "0.1.0"

__all__ = [
    "ExponentialSeries", "MatsubaraSpec", "PoleTerm", "SpectralDensityModel",
    "analytic_c0", "correlation_quadrature", "matsubara_series",
    "Liouvillian", "SystemSpec", "Trajectory", "assemble_liouvillian", "check_physicality",
    "convergence_sweep", "propagate", "qrt_correlation",
    "ConvergenceError", "DimensionCapError", "DomainError", "FitWarning", "InputError",
    "NumericalError", "PseudomodeError", "TruncationWarning",
    "ExponentialFit", "ExponentialSumRegressor", "fit_matsubara_tail",
    "HeomConfig", "heom_config", "heom_solve", "pure_dephasing_exact",
    "Pseudomode", "PseudomodeSet", "spin_boson_pipeline",
]
