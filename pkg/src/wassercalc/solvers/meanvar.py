"""Linear and mean-variance objectives over second-moment and Wasserstein balls."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..constraints import SecondMomentBall, WassersteinBall
from ..errors import NoValidRoot, SingularMap, ValidationError, ZeroTheta
from ..functionals import ExpectedValue, MeanVariance
from ..measures import DiscreteMeasure, canonicalize, dirac
from ..optimality import StationarityReport, kkt_residual
from ..potentials import linear
from ..transport import w2

IMAG_TOL = 1e-8
FORMULA_TOL = 1e-6
RADIUS_TOL = 1e-6


def _theta(theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not np.all(np.isfinite(theta)):
        raise ValidationError("theta must be finite", field="theta")
    if not np.any(theta != 0.0):
        raise ZeroTheta("theta must be nonzero", field="theta")
    return theta


@dataclass
class LinearSolution:
    mu_star: DiscreteMeasure
    lambda_star: float
    objective: float
    report: StationarityReport

    def __iter__(self):
        return iter((self.mu_star, self.lambda_star))

    def to_dict(self) -> dict:
        from ..serialization import measure_to_dict

        return {
            "mu_star": measure_to_dict(self.mu_star),
            "lambda_star": self.lambda_star,
            "objective": self.objective,
            "report": self.report.to_dict(),
        }


def solve_linear_second_moment(theta, eps: float) -> LinearSolution:
    """Minimise E<theta, x> subject to E||x||^2 <= eps^2."""
    theta = _theta(theta)
    if not (math.isfinite(eps) and eps > 0):
        raise ValidationError(f"eps must be finite and positive, got {eps}", field="eps")
    norm = float(np.linalg.norm(theta))
    mu = dirac(-eps * theta / norm)
    J = ExpectedValue(linear(theta))
    report = kkt_residual(J, SecondMomentBall(eps), mu)
    return LinearSolution(mu, norm / (2.0 * eps), J.evaluate(mu), report)


@dataclass
class DroBranch:
    lam: float
    source: str  # "quartic", "shift" or "spread"
    valid: bool
    reason: str = ""
    worst_case: Optional[DiscreteMeasure] = None
    map_matrix: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    cost_direct: float = math.nan
    cost_formula: float = math.nan
    radius_check: float = math.nan
    residual: float = math.nan
    report: Optional[StationarityReport] = None

    def to_dict(self) -> dict:
        out = {"lambda": self.lam, "source": self.source, "valid": self.valid, "reason": self.reason}
        if self.worst_case is not None:
            out.update(
                cost_direct=self.cost_direct,
                cost_formula=self.cost_formula,
                radius_check=self.radius_check,
                residual=self.residual,
            )
        return out


@dataclass
class DroSolution:
    lambda_star: float
    map_matrix: Optional[np.ndarray]
    offset: Optional[np.ndarray]
    worst_case: DiscreteMeasure
    cost_direct: float
    cost_formula: float
    radius_check: float
    formula_mismatch: bool
    report: StationarityReport
    branches: list = field(default_factory=list)
    roots: list = field(default_factory=list)

    def to_dict(self) -> dict:
        from ..serialization import measure_to_dict

        return {
            "lambda_star": self.lambda_star,
            "map_matrix": None if self.map_matrix is None else self.map_matrix.tolist(),
            "offset": None if self.offset is None else self.offset.tolist(),
            "worst_case": measure_to_dict(self.worst_case),
            "cost_direct": self.cost_direct,
            "cost_formula": self.cost_formula,
            "radius_check": self.radius_check,
            "formula_mismatch": self.formula_mismatch,
            "report": self.report.to_dict(),
            "branches": [b.to_dict() for b in self.branches],
            "roots": [[float(r.real), float(r.imag)] for r in self.roots],
        }


def meanvar_quartic(a: float, rho: float, eps: float, var: float) -> np.ndarray:
    """Coefficients (highest degree first) of (rho a - 2 lam)^2 (4 eps^2 lam^2 - a) - 4 rho^2 a var lam^2."""
    P = np.polynomial.Polynomial
    p = P([rho * a, -2.0]) ** 2 * P([-a, 0.0, 4.0 * eps * eps]) - P([0.0, 0.0, 4.0 * rho * rho * a * var])
    return p.coef[::-1]


def _polish(coefs: np.ndarray, x: float, steps: int = 3) -> float:
    d = np.polyder(coefs)
    for _ in range(steps):
        dv = np.polyval(d, x)
        if dv == 0.0:
            break
        step = np.polyval(coefs, x) / dv
        if not math.isfinite(step) or abs(step) > 1e-6 * (1.0 + abs(x)):
            break
        x -= step
    return x


def affine_map(theta: np.ndarray, rho: float, lam: float, mean_ref: float) -> tuple[np.ndarray, np.ndarray]:
    """y = M x + c, the transport map from the worst case back to the reference."""
    a = float(theta @ theta)
    M = np.eye(theta.size) - rho * np.outer(theta, theta) / (2.0 * lam)
    c = -(1.0 - rho * (mean_ref + a / (2.0 * lam))) / (2.0 * lam) * theta
    return M, c


def closed_form_cost(a: float, lam: float, rho: float, mean_ref: float, var_ref: float) -> float:
    """Closed-form risk expression at a root; cross-checked against direct evaluation."""
    return a / (2.0 * lam) + mean_ref + rho / (4.0 * lam**2 * (rho * a - 2.0 * lam) ** 2) * var_ref


def _finish(branch: DroBranch, mu: DiscreteMeasure, nu_hat, theta, rho, eps) -> DroBranch:
    J = MeanVariance(theta, rho, -1)
    branch.worst_case = mu
    branch.cost_direct = -J.evaluate(mu)
    branch.radius_check = w2(mu, nu_hat)[0]
    rep = kkt_residual(J, WassersteinBall(nu_hat, eps), mu) if _near_ball(branch.radius_check, eps) else None
    branch.report = rep
    branch.residual = rep.residual if rep is not None else math.inf
    if rep is None:
        branch.valid = False
        branch.reason = f"radius {branch.radius_check:.12g} off the ball boundary"
    elif not rep.stationary:
        branch.valid = False
        branch.reason = f"KKT residual {rep.residual:.3g} above tolerance"
    return branch


def _near_ball(r: float, eps: float) -> bool:
    return abs(r - eps) <= RADIUS_TOL * (1.0 + eps)


def solve_meanvar_dro(theta, rho: float, eps: float, nu_hat: DiscreteMeasure) -> DroSolution:
    """Worst-case E<theta,x> + rho/2 Var<theta,x> over the W2 ball of radius eps around nu_hat."""
    theta = _theta(theta)
    if not (math.isfinite(rho) and rho >= 0):
        raise ValidationError(f"rho must be finite and nonnegative, got {rho}", field="rho")
    if not (math.isfinite(eps) and eps > 0):
        raise ValidationError(f"eps must be finite and positive, got {eps}", field="eps")
    if nu_hat.dim != theta.size:
        raise ValidationError(f"theta has dim {theta.size}, reference has dim {nu_hat.dim}", field="theta")

    a = float(theta @ theta)
    norm = math.sqrt(a)
    t = nu_hat.points @ theta
    mean_ref = float(nu_hat.weights @ t)
    var_ref = float(nu_hat.weights @ (t - mean_ref) ** 2)
    lam_floor = rho * a / 2.0
    branches: list[DroBranch] = []
    roots: list = []

    if var_ref > 1e-14 * (1.0 + mean_ref * mean_ref):
        coefs = meanvar_quartic(a, rho, eps, var_ref)
        roots = list(np.roots(coefs))
        for r in roots:
            if abs(r.imag) > IMAG_TOL * (1.0 + abs(r.real)):
                continue
            lam = float(_polish(coefs, float(r.real)))
            br = DroBranch(lam, "quartic", True)
            branches.append(br)
            if lam < lam_floor - 1e-9 or lam <= 0:
                br.valid, br.reason = False, "lambda below rho*|theta|^2/2"
                continue
            if 4.0 * lam * lam * eps * eps < a * (1.0 - 1e-12):
                br.valid, br.reason = False, "4 lambda^2 eps^2 < |theta|^2"
                continue
            if 1.0 - rho * a / (2.0 * lam) <= 1e-12:
                br.valid, br.reason = False, "singular map"
                continue
            M, c = affine_map(theta, rho, lam, mean_ref)
            X = np.linalg.solve(M, (nu_hat.points - c).T).T
            mu = canonicalize(DiscreteMeasure(X, nu_hat.weights))
            br.map_matrix, br.offset = M, c
            br.cost_formula = closed_form_cost(a, lam, rho, mean_ref, var_ref)
            _finish(br, mu, nu_hat, theta, rho, eps)
    else:
        unit = theta / norm
        # every atom moved by eps along theta; optimal when rho |theta| eps <= 1
        lam = norm / (2.0 * eps)
        br = DroBranch(lam, "shift", True)
        if lam < lam_floor - 1e-12:
            br.valid, br.reason = False, "lambda below rho*|theta|^2/2"
        else:
            if 1.0 - rho * a / (2.0 * lam) > 1e-12:
                M, c = affine_map(theta, rho, lam, mean_ref)
                X = np.linalg.solve(M, (nu_hat.points - c).T).T
                br.map_matrix, br.offset = M, c
            else:
                X = nu_hat.points + eps * unit
            br.cost_formula = mean_ref + norm * eps
            _finish(br, canonicalize(DiscreteMeasure(X, nu_hat.weights)), nu_hat, theta, rho, eps)
        branches.append(br)
        if rho > 0:
            # singular-map branch: each atom split symmetrically around a mean shift along theta
            lam = lam_floor
            br = DroBranch(lam, "spread", True)
            shift = 1.0 / (rho * norm)
            if shift > eps * (1.0 + 1e-12):
                br.valid, br.reason = False, "requires rho |theta| eps >= 1"
            else:
                spread = math.sqrt(max(eps * eps - shift * shift, 0.0))
                X = np.vstack([nu_hat.points + (shift + spread) * unit, nu_hat.points + (shift - spread) * unit])
                W = np.concatenate([nu_hat.weights, nu_hat.weights]) / 2.0
                br.cost_formula = mean_ref + rho * a * eps * eps
                _finish(br, canonicalize(DiscreteMeasure(X, W)), nu_hat, theta, rho, eps)
            branches.append(br)

    valid = [b for b in branches if b.valid]
    if not valid and any(b.reason == "singular map" for b in branches):
        raise SingularMap(
            "I - rho theta theta'/(2 lambda) is singular at every admissible root",
            roots=[[float(r.real), float(r.imag)] for r in roots],
            branches=[b.to_dict() for b in branches],
        )
    if not valid:
        raise NoValidRoot(
            "no admissible multiplier",
            roots=[[float(r.real), float(r.imag)] for r in roots],
            branches=[b.to_dict() for b in branches],
        )
    best = max(valid, key=lambda b: b.cost_direct)
    mismatch = abs(best.cost_direct - best.cost_formula) > FORMULA_TOL * (1.0 + abs(best.cost_direct))
    return DroSolution(
        lambda_star=best.lam,
        map_matrix=best.map_matrix,
        offset=best.offset,
        worst_case=best.worst_case,
        cost_direct=best.cost_direct,
        cost_formula=best.cost_formula,
        radius_check=best.radius_check,
        formula_mismatch=bool(mismatch),
        report=best.report,
        branches=branches,
        roots=roots,
    )
