"""Scalar potentials V: R^d -> R with gradients.

Catalog items evaluate row-wise on (n, d) arrays; host callables are wrapped
with :func:`from_callables` and evaluated point by point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class Potential:
    tag: str
    params: dict = field(default_factory=dict)
    _values: Callable[[np.ndarray], np.ndarray] = field(default=None, repr=False)
    _grads: Callable[[np.ndarray], np.ndarray] = field(default=None, repr=False)
    # dimension constraint, None when any d works
    dim: Optional[int] = None

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.dim is not None and X.shape[1] != self.dim:
            raise ValidationError(
                f"potential {self.tag!r} expects dimension {self.dim}, got {X.shape[1]}",
                field="V",
            )
        return X

    def values(self, X) -> np.ndarray:
        return np.asarray(self._values(self._check(X)), dtype=float).reshape(-1)

    def grads(self, X) -> np.ndarray:
        X = self._check(X)
        return np.asarray(self._grads(X), dtype=float).reshape(X.shape)

    def __call__(self, x) -> float:
        return float(self.values(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))[0])

    def grad(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.grads(x.reshape(1, -1))[0]

    def to_dict(self) -> dict:
        out = {"type": self.tag}
        for k, v in self.params.items():
            out[k] = np.asarray(v).tolist() if isinstance(v, np.ndarray) else v
        return out


def quadratic(A, b=None, c: float = 0.0) -> Potential:
    """V(x) = 1/2 x'Ax + <b, x> + c."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    if A.shape != (d, d):
        raise ValidationError("quadratic A must be square", field="V")
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float).reshape(d)
    S = 0.5 * (A + A.T)
    return Potential(
        "quadratic",
        {"A": A, "b": b, "c": float(c)},
        lambda X: 0.5 * np.einsum("ij,jk,ik->i", X, A, X) + X @ b + c,
        lambda X: X @ S.T + b,
        dim=d,
    )


def half_norm_sq(d: Optional[int] = None) -> Potential:
    """V(x) = ||x||^2 / 2 in any dimension."""
    return Potential(
        "halfnorm2",
        {},
        lambda X: 0.5 * np.einsum("ij,ij->i", X, X),
        lambda X: X.copy(),
        dim=d,
    )


def zero() -> Potential:
    return Potential("zero", {}, lambda X: np.zeros(X.shape[0]), lambda X: np.zeros_like(X))


def linear(a) -> Potential:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return Potential(
        "linear", {"a": a}, lambda X: X @ a, lambda X: np.broadcast_to(a, X.shape).copy(), dim=a.size
    )


def double_well() -> Potential:
    """V(x) = (||x||^2 - 1)^2."""

    def vals(X):
        r = np.einsum("ij,ij->i", X, X)
        return (r - 1.0) ** 2

    def grads(X):
        r = np.einsum("ij,ij->i", X, X)
        return 4.0 * (r - 1.0)[:, None] * X

    return Potential("double-well", {}, vals, grads)


def log_sum_exp() -> Potential:
    return Potential("lse", {}, lambda X: logsumexp(X, axis=1), lambda X: softmax(X, axis=1))


def softnorm(a=None) -> Potential:
    """V(x) = sqrt(1 + ||x - a||^2): smooth, nonlinear, linear growth."""

    def vals(X):
        Z = X if a is None else X - a
        return np.sqrt(1.0 + np.einsum("ij,ij->i", Z, Z))

    def grads(X):
        Z = X if a is None else X - a
        return Z / np.sqrt(1.0 + np.einsum("ij,ij->i", Z, Z))[:, None]

    params = {} if a is None else {"a": np.asarray(a, dtype=float)}
    return Potential("softnorm", params, vals, grads)


def polynomial_1d(coeffs) -> Potential:
    """V(x) = sum_k coeffs[k] x^k on the real line (ascending coefficients)."""
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
    poly = np.polynomial.Polynomial(coeffs)
    dpoly = poly.deriv()
    return Potential(
        "poly1d",
        {"coeffs": coeffs},
        lambda X: poly(X[:, 0]),
        lambda X: dpoly(X[:, 0])[:, None],
        dim=1,
    )


def from_callables(f: Callable, grad: Callable, name: str = "callable") -> Potential:
    """Wrap host-level point functions (not serialisable to the CLI)."""
    return Potential(
        name,
        {},
        lambda X: np.array([float(f(x)) for x in X]),
        lambda X: np.vstack([np.asarray(grad(x), dtype=float).reshape(-1) for x in X]),
    )


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse numbers from {text!r}", field="V") from None


def from_catalog(spec: str) -> Potential:
    """Parse ``catalog:<name>[:args]`` (the prefix is optional).

    Names: zero, halfnorm2, double-well, lse, softnorm, linear:a1,a2,...,
    poly1d:c0,c1,...
    """
    body = spec[len("catalog:"):] if spec.startswith("catalog:") else spec
    name, _, args = body.partition(":")
    if name == "zero":
        return zero()
    if name == "halfnorm2":
        return half_norm_sq()
    if name in ("double-well", "double_well"):
        return double_well()
    if name == "lse":
        return log_sum_exp()
    if name == "softnorm":
        return softnorm(_floats(args) if args else None)
    if name == "linear":
        return linear(_floats(args))
    if name == "poly1d":
        return polynomial_1d(_floats(args))
    raise ValidationError(f"unknown potential {spec!r}", field="V")


def from_dict(d: dict) -> Potential:
    kind = d.get("type")
    if kind == "quadratic":
        return quadratic(d["A"], d.get("b"), d.get("c", 0.0))
    if kind == "linear":
        return linear(d["a"])
    if kind == "poly1d":
        return polynomial_1d(d["coeffs"])
    if kind == "softnorm":
        return softnorm(d.get("a"))
    if kind in ("zero", "halfnorm2", "double-well", "double_well", "lse"):
        return from_catalog(kind)
    raise ValidationError(f"unknown potential type {kind!r}", field="V")
