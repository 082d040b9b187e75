"""Constructive solvers for the worked problems; each carries an independent residual check."""

from .dual import DualSolution, solve_nonlinear_dro_dual
from .gmm import GmmFit, fit_gaussian_mixture
from .meanvar import DroSolution, LinearSolution, solve_linear_second_moment, solve_meanvar_dro
from .prox import ProxResult, prox

__all__ = [
    "DroSolution",
    "DualSolution",
    "GmmFit",
    "LinearSolution",
    "ProxResult",
    "fit_gaussian_mixture",
    "prox",
    "solve_linear_second_moment",
    "solve_meanvar_dro",
    "solve_nonlinear_dro_dual",
]
