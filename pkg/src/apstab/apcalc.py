"""Calculus on trigonometric polynomials: derivative, bounded antiderivative, exponential."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trigpoly import TrigPoly

_EPS = float(np.finfo(float).eps)

__all__ = [
    "UnboundedAntiderivative",
    "BoundedApprox",
    "derivative",
    "antiderivative",
    "ap_exponential",
    "exp_tail_bound",
]


class UnboundedAntiderivative(ValueError):
    """The zero-frequency coefficient is nonzero, so the primitive grows linearly."""

    def __init__(self, mean):
        self.mean = mean
        super().__init__(f"nonzero mean {mean!r}: the antiderivative is unbounded")


@dataclass(frozen=True)
class BoundedApprox:
    """A trigonometric polynomial within ``sup_error`` of its target, uniformly in t."""

    approx: TrigPoly
    sup_error: float
    order: int = 0

    def eval(self, t):
        return self.approx.eval(t)

    def sup_bound(self) -> float:
        """Upper bound on the sup norm of the target."""
        return self.approx.l1_norm() + self.sup_error


def derivative(p: TrigPoly) -> TrigPoly:
    """Termwise ``i lam_k c_k``."""
    factor = 1j * p.lam.reshape((-1,) + (1,) * len(p.shape))
    return TrigPoly(p.basis, p.num, p.den, p.coef * factor, p.shape)


def antiderivative(p: TrigPoly) -> TrigPoly:
    """The primitive ``g(t) = int_0^t p`` of a zero-mean polynomial.

    Termwise ``c_k / (i lam_k)`` plus the constant that makes ``g(0) = 0``;
    raises UnboundedAntiderivative when ``p`` has a nonzero mean.
    """
    zero_rows = ~p.num.any(axis=1) if len(p) else np.zeros(0, dtype=bool)
    if zero_rows.any():
        raise UnboundedAntiderivative(p.coef[zero_rows][0])
    if len(p) == 0:
        return p
    factor = (1j * p.lam).reshape((-1,) + (1,) * len(p.shape))
    coef = p.coef / factor
    g = TrigPoly(p.basis, p.num, p.den, coef, p.shape, _canonical=True)
    return g - TrigPoly.constant(p.basis, coef.sum(axis=0))


def exp_tail_bound(b: float, n: int) -> float:
    """Bound on ``sum_{k>n} b**k / k!`` (valid once ``n + 2 > b``)."""
    if n + 2 <= b:
        return math.inf
    first = math.exp((n + 1) * math.log(b) - math.lgamma(n + 2)) if b > 0 else 0.0
    return first / (1.0 - b / (n + 2))


def ap_exponential(g: TrigPoly, tol: float, prune: bool = True) -> BoundedApprox:
    """Truncated series for ``exp(g(t))`` with a certified uniform error.

    The order N is the smallest with tail ``sum_{k>N} B^k/k! <= tol/2`` where
    ``B`` is the coefficient l1 norm of ``g``. Terms are pruned below a
    threshold and the dropped mass, propagated through later powers, is added
    to the error; the threshold tightens until the total stays within ``tol``.
    A rounding allowance for the coefficient arithmetic is included as well.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not g.is_scalar:
        raise ValueError("closed-form exponentials are only provided for scalar polynomials")
    b = g.l1_norm()
    n = 0
    while exp_tail_bound(b, n) > tol / 2:
        n += 1
    tail = exp_tail_bound(b, n)
    threshold = tol * 1e-4 if prune else 0.0
    while True:
        one = TrigPoly.constant(g.basis, 1.0)
        total, term = one, one
        carried = 0.0  # sup bound on error inside the current term
        pruned = 0.0
        for k in range(1, n + 1):
            term = (term * g).scale(1.0 / k)
            carried = carried * b / k
            term, dropped = term.prune(threshold)
            carried += dropped
            pruned += carried
            total = total + term
        total, dropped = total.prune(threshold)
        pruned += dropped
        rounding = (n + 1) * (len(g) + 1) * _EPS * total.l1_norm()
        if pruned + rounding <= tol / 2 or threshold == 0.0:
            return BoundedApprox(total, tail + pruned + rounding, n)
        threshold = threshold * 1e-2 if threshold > 1e-300 else 0.0
