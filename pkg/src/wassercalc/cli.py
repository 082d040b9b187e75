"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 non-stationary
verdict under ``--assert-stationary``. Errors go to stderr as JSON objects
with a stable ``code`` field.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import serialization as io
from .errors import ValidationError, WasserCalcError
from .potentials import from_catalog

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_NOT_STATIONARY = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route usage errors through the JSON error path
        raise _UsageError(message)


def _floats(text: str, name: str) -> np.ndarray:
    try:
        vals = [float(t) for t in text.replace(" ", ",").split(",") if t]
    except ValueError:
        raise ValidationError(f"cannot parse {name} from {text!r}", field=name) from None
    if not vals:
        raise ValidationError(f"{name} is empty", field=name)
    return np.asarray(vals)


def _cost(name: str):
    from .transport import cost_from_name

    return cost_from_name(name[len("catalog:"):] if name.startswith("catalog:") else name)


def _common(p: argparse.ArgumentParser, seed: bool = False) -> None:
    p.add_argument("--tol", type=float, default=None, help="stationarity tolerance (absolute)")
    p.add_argument("--out", type=Path, default=None, help="write result JSON here instead of stdout")
    p.add_argument("--csv-out", type=Path, default=None, help="write a support-point table for plotting")
    p.add_argument("-v", "--verbose", action="store_true")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wassercalc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ot", help="optimal transport plan between two measures")
    p.add_argument("--mu", type=Path, required=True)
    p.add_argument("--nu", type=Path, required=True)
    p.add_argument("--cost", default="sqeuclidean", help="sqeuclidean | pnorm:p")
    p.add_argument("--vertices", action="store_true", help="also enumerate alternate optimal vertices")
    _common(p)

    p = sub.add_parser("residual", help="KKT residual of a functional over a constraint")
    p.add_argument("--J", dest="J", type=Path, required=True)
    p.add_argument("--C", dest="C", type=Path, required=True)
    p.add_argument("--mu", type=Path, required=True)
    p.add_argument("--method", choices=["auto", "closed", "golden"], default="auto")
    p.add_argument("--assert-stationary", action="store_true")
    _common(p)

    p = sub.add_parser("fermat", help="unconstrained stationarity residual")
    p.add_argument("--J", dest="J", type=Path, required=True)
    p.add_argument("--mu", type=Path, required=True)
    p.add_argument("--assert-stationary", action="store_true")
    _common(p)

    p = sub.add_parser("dro-meanvar", help="worst-case mean-variance risk over a W2 ball")
    p.add_argument("--theta", required=True, help="comma-separated vector")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--nuhat", type=Path, required=True)
    _common(p, seed=True)

    p = sub.add_parser("prox", help="Wasserstein proximal operator of a potential")
    p.add_argument("--V", dest="V", required=True, help="catalog:<name>[:args]")
    p.add_argument("--mu", type=Path, required=True)
    p.add_argument("--multistart", type=int, default=8)
    _common(p, seed=True)

    p = sub.add_parser("gmm-fit", help="unit-covariance Gaussian mixture fit")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--max-iter", type=int, default=5000)
    _common(p, seed=True)

    p = sub.add_parser("dro-nonlinear", help="dual of the worst-case E[V] + rho Var[V]")
    p.add_argument("--V", dest="V", required=True, help="catalog:<name>[:args]")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--nuhat", type=Path, required=True)
    p.add_argument("--multistart", type=int, default=5)
    _common(p, seed=True)

    p = sub.add_parser("tangent-check", help="grid test of tangent-space membership")
    p.add_argument("--xi", type=Path, required=True, help="variation JSON")
    p.add_argument("--eps-grid", default=None, help="comma-separated step sizes")
    _common(p)
    return parser


def _measure_csv(path, m, extra=None):
    io.write_points_csv(path, m.points, m.weights, extra)


def _run(args) -> tuple[dict, int]:
    cmd = args.command
    status = EXIT_OK

    if cmd == "ot":
        from .transport import optimal_vertices, solve_ot, verify_optimality

        mu, nu, c = io.load_measure(args.mu), io.load_measure(args.nu), _cost(args.cost)
        plan = solve_ot(mu, nu, c)
        result = plan.to_dict()
        result["cost"] = c.name
        result["optimality"] = verify_optimality(plan, c).to_dict()
        if args.vertices:
            search = optimal_vertices(mu, nu, c)
            result["vertices"] = search.to_dict()
        if args.csv_out:
            rows = np.hstack([mu.points[plan.rows], nu.points[plan.cols]])
            io.write_points_csv(args.csv_out, rows, plan.mass)
        return result, status

    if cmd in ("residual", "fermat"):
        from .optimality import fermat_residual, kkt_residual

        J = io.load_functional(args.J)
        mu = io.load_measure(args.mu)
        if cmd == "residual":
            C = io.load_constraint(args.C)
            rep = kkt_residual(J, C, mu, tol=args.tol, method=args.method)
        else:
            rep = fermat_residual(J, mu, tol=args.tol)
        if args.assert_stationary and not rep.stationary:
            status = EXIT_NOT_STATIONARY
        if args.csv_out:
            _measure_csv(args.csv_out, mu)
        return rep.to_dict(), status

    if cmd == "dro-meanvar":
        from .solvers import solve_meanvar_dro

        nu = io.load_measure(args.nuhat)
        sol = solve_meanvar_dro(_floats(args.theta, "theta"), args.rho, args.eps, nu)
        if args.csv_out:
            _measure_csv(args.csv_out, sol.worst_case)
        return sol.to_dict(), status

    if cmd == "prox":
        from .solvers import prox

        V = from_catalog(args.V)
        mu = io.load_measure(args.mu)
        res = prox(V, mu, multistart=args.multistart, seed=args.seed)
        if args.csv_out:
            _measure_csv(args.csv_out, res.mu_star)
        return res.to_dict(), status

    if cmd == "gmm-fit":
        from .solvers import fit_gaussian_mixture

        data = io.load_points(args.data)
        fit = fit_gaussian_mixture(data, args.m, seed=args.seed, max_iter=args.max_iter)
        if args.csv_out:
            _measure_csv(args.csv_out, fit.mu_star)
        return fit.to_dict(), status

    if cmd == "dro-nonlinear":
        from .solvers import solve_nonlinear_dro_dual

        V = from_catalog(args.V)
        nu = io.load_measure(args.nuhat)
        sol = solve_nonlinear_dro_dual(V, args.rho, args.eps, nu, multistart=args.multistart, seed=args.seed)
        if args.csv_out:
            _measure_csv(args.csv_out, sol.reconstructed_primal)
        return sol.to_dict(), status

    if cmd == "tangent-check":
        from .tangent import apply, is_tangent

        xi = io.load_variation(args.xi)
        grid = None if args.eps_grid is None else list(_floats(args.eps_grid, "eps-grid"))
        rep = is_tangent(xi, grid)
        if args.csv_out:
            _measure_csv(args.csv_out, apply(xi, rep.eps_grid[-1]))
        return rep.to_dict(), status

    raise ValidationError(f"unknown command {cmd!r}", field="command")  # pragma: no cover


def _emit_error(code: str, message: str, details: Optional[dict] = None) -> None:
    payload = {"code": code, "message": message, "details": details or {}}
    sys.stderr.write(io.dumps(payload))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _emit_error("usage_error", str(exc))
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        result, status = _run(args)
    except WasserCalcError as exc:
        _emit_error(exc.code, exc.message, exc.details)
        return exc.exit_status
    except (ValueError, KeyError, TypeError, IndexError, OSError) as exc:
        _emit_error("invalid_input", f"{type(exc).__name__}: {exc}")
        return EXIT_INPUT
    text = io.dumps(result)
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    if getattr(args, "verbose", False):
        sys.stderr.write(json.dumps({"command": args.command, "status": status}) + "\n")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
