"""Quasi-realizations of Gaussian excursion sets from optimally chosen simulation points."""
from ._version import __version__
from .bvn import bvn_lower, bvn_upper, phi2
from .criterion import (CriterionState, Direction, ExcursionSpec, IntegrationMeasure, edm,
                        edm_empirical, rho)
from .designs import Design, DesignKind, grid, maximin_lhs, sobol
from .gp import (KrigingMode, Observations, PosteriorGp, fit_mle, kriging_weights, posterior,
                 update_posterior)
from .kernels import KernelFamily, KernelSpec, MeanSpec
from .optpoints import Algorithm, OptimizerConfig, algorithm_a, algorithm_b
from .simulate import (ExcursionEnsemble, FieldEnsemble, excursions, quasi_realizations,
                       simulate_full)

__all__ = [
    "__version__",
    "bvn_lower", "bvn_upper", "phi2",
    "CriterionState", "Direction", "ExcursionSpec", "IntegrationMeasure", "edm",
    "edm_empirical", "rho",
    "Design", "DesignKind", "grid", "maximin_lhs", "sobol",
    "KrigingMode", "Observations", "PosteriorGp", "fit_mle", "kriging_weights", "posterior",
    "update_posterior",
    "KernelFamily", "KernelSpec", "MeanSpec",
    "Algorithm", "OptimizerConfig", "algorithm_a", "algorithm_b",
    "ExcursionEnsemble", "FieldEnsemble", "excursions", "quasi_realizations", "simulate_full",
]
