"""Hierarchical shot-noise Cox process mixtures for grouped data.

Library + CLI covering prior moment and correlation computation, prior
simulation, data-driven hyperparameter elicitation, conditional Gibbs
posterior sampling, and posterior summaries.
"""

from ._backend import BACKEND
from .levy import LevyParams, psi, kappa, tail_mass, tilt
from .kernel import KernelModel, MotherAtom, MotherAtomLocation
from .moments import DependenceIntegrals, dependence_integrals, prior_correlation, prior_expectation
from .fk import TruncatedCRM, sample_jumps, sample_locations
from .errors import ConfigError, DataError, ElicitationError, NumericError

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "LevyParams", "psi", "kappa", "tail_mass", "tilt",
    "KernelModel", "MotherAtom", "MotherAtomLocation",
    "DependenceIntegrals", "dependence_integrals", "prior_correlation",
    "prior_expectation", "TruncatedCRM", "sample_jumps", "sample_locations",
    "ConfigError", "DataError", "ElicitationError", "NumericError",
    "__version__",
]
