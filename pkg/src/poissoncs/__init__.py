"""Flux-constrained Poisson compressed sensing under l_q-ball sparsity.

Modules
-------
basis    orthonormal bases with a constant first column, localization quantities
sensing  bounded random ensembles, the physical embedding, RIP / RE diagnostics
signal   signals on the flux-normalised l_q ball
model    Poisson observations
solver   pinned-coordinate Lasso, weighted Lasso, l1-penalised Poisson likelihood
theory   rate formulas, regime flags, packing sets and inequality checks
harness  sweeps, single trials and the verification suite
"""
from .basis import OrthonormalBasis, build_basis, localization_bound, localization_exact
from .errors import ConfigurationError, ConstructionError, ModelError, NumericalError, PoissonCSError, RegimeError
from .model import Observation, mean_range, sample_observation
from .sensing import embed_physical, estimate_upper_rip, sample_bernoulli_ensemble, sample_uniform_ensemble, verify_physical
from .signal import GroundTruth, SignalSpec, check_membership, generate_signal
from .solver import (
    EstimateResult,
    ReducedProblem,
    SolverConfig,
    cross_validate,
    fit_lasso,
    fit_poisson_mle_l1,
    fit_weighted_lasso,
    theoretical_lambda,
)
from .theory import RateParams, effective_sparsity, minimax_lower_rate, regime_flags, upper_rate

__version__ = "0.1.0"
