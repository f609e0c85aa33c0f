"""Simultaneous failure probabilities in correlated Brownian risk models."""

from .asymptotics import (
    AsymptoticEstimate,
    PickandsEstimate,
    RateFunction,
    constant_C,
    equicorrelated_closed_forms,
    estimate_E,
    infinite_horizon_lograte,
    psi_k_asymptotic,
    rate_function,
    tail_asymptotic_p1,
)
from .bounds import BoundResult, RiskSpec, bonferroni, k_constant, p_T, sandwich
from .errors import BrmNumericalError, BrmValueError
from .gauss import CovModel, McEstimate, PathGrid, mvn_pdf, mvn_survival, sample_paths
from .qp import QpSolution, solve_pi_sigma, verify_representation
from .simulator import SimResult, sample_failure_time, simulate_psi, simulate_psi_infinite

__version__ = "0.1.0"

__all__ = [
    "AsymptoticEstimate",
    "BoundResult",
    "BrmNumericalError",
    "BrmValueError",
    "CovModel",
    "McEstimate",
    "PathGrid",
    "PickandsEstimate",
    "QpSolution",
    "RateFunction",
    "RiskSpec",
    "SimResult",
    "bonferroni",
    "constant_C",
    "equicorrelated_closed_forms",
    "estimate_E",
    "infinite_horizon_lograte",
    "k_constant",
    "mvn_pdf",
    "mvn_survival",
    "p_T",
    "psi_k_asymptotic",
    "rate_function",
    "sample_failure_time",
    "sample_paths",
    "sandwich",
    "simulate_psi",
    "simulate_psi_infinite",
    "solve_pi_sigma",
    "tail_asymptotic_p1",
    "verify_representation",
]
