"""Incoherence conditions and uniform support recovery for marginal regression."""

__version__ = "0.1.0"

from .covariance import CoefVector, CovMatrix, ParamClass, Support, parse_support
from .dual import alpha, alpha_R, dual_member, gamma_doubleprime_member, gamma_prime_member, recovery_by_lambda_sweep
from .incoherence import (IncoherenceReport, lasso_incoherence, mri_check, mri_check_orthonormal,
                          pairwise_incoherence, rip_constant)
from .sampling import SampleConfig, phase_transition_sweep, sample_design, sample_mr_select
from .selectors import (margin_of_beta, population_lasso, population_mr_select, population_omp,
                        truthfulness_search)
from .verdict import RecoveryVerdict
from .witness import brute_force_recovery, construct_counterexample_orthonormal, verify_theorem1

__all__ = [
    "CoefVector", "CovMatrix", "ParamClass", "Support", "parse_support",
    "alpha", "alpha_R", "dual_member", "gamma_prime_member", "gamma_doubleprime_member",
    "recovery_by_lambda_sweep", "IncoherenceReport", "lasso_incoherence", "mri_check",
    "mri_check_orthonormal", "pairwise_incoherence", "rip_constant", "SampleConfig",
    "phase_transition_sweep", "sample_design", "sample_mr_select", "margin_of_beta",
    "population_lasso", "population_mr_select", "population_omp", "truthfulness_search",
    "RecoveryVerdict", "brute_force_recovery", "construct_counterexample_orthonormal",
    "verify_theorem1",
]
