"""Periodic systems: monodromy matrix, its unit-circle spectrum, power bounds,
the discrete resolvent-limit condition, and the link between the discrete
resolvent and bounded solutions of the damped forced equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from .evolve import EvolutionProcess, LinearSystem, SampledFunction, dopri5
from .freqlat import Frequency, RealConstant
from .records import ConditionRecord, TrendRule

__all__ = [
    "Aperiodic",
    "SingularResolvent",
    "period_constant",
    "check_period",
    "monodromy",
    "CircleSpectrum",
    "circle_spectrum",
    "PowerBound",
    "power_bound",
    "LimitCheck",
    "resolvent_limit_check",
    "BridgeResult",
    "periodic_resolvent_bridge",
    "PeriodicConfig",
    "MonodromyReport",
    "periodic_stability_verdict",
]


class Aperiodic(ValueError):
    def __init__(self, freq: Frequency | None, tau):
        self.freq = freq
        self.tau = tau
        super().__init__(f"frequency {freq} is not an integer multiple of 2*pi/{tau}")


class SingularResolvent(ArithmeticError):
    def __init__(self, alpha: float, cond: float):
        self.alpha = alpha
        self.cond = cond
        super().__init__(f"resolvent numerically singular at alpha = {alpha:g} (cond {cond:.3g})")


def period_constant(tau) -> RealConstant:
    """Exact period from a RealConstant, a rational number or a descriptor string."""
    if isinstance(tau, RealConstant):
        c = tau
    elif isinstance(tau, (int, Fraction)):
        c = RealConstant.rational(tau)
    elif isinstance(tau, str):
        c = RealConstant.parse(tau)
    else:
        raise TypeError("the period must be exact: RealConstant, int, Fraction or string")
    if c.scale <= 0:
        raise ValueError("the period must be positive")
    return c


def _period_multiple(freq: Frequency, tau: RealConstant) -> Fraction | None:
    """Exact value of ``freq * tau / (2 pi)`` when it is rational, else None."""
    rational = Fraction(0)
    pi_part = Fraction(0)
    for c, const in zip(freq.coords, freq.basis.constants):
        c = Fraction(c)
        if c == 0:
            continue
        if const.kind == "rational":
            rational += c * const.scale
        elif const.kind == "pi":
            pi_part += c * const.scale
        else:
            return None  # a surd component never combines with tau into a rational multiple of pi
    if tau.kind == "rational":
        return None if rational else pi_part * tau.scale / 2
    if tau.kind == "pi":
        return None if pi_part else rational * tau.scale / 2
    return None if (rational or pi_part) else Fraction(0)


def check_period(system: LinearSystem, tau) -> RealConstant:
    """Raise Aperiodic unless every frequency of ``A`` is an integer multiple of ``2 pi / tau``."""
    tau = period_constant(tau)
    if system.A is not None:
        for f in system.A.frequencies():
            k = _period_multiple(f, tau)
            if k is None or k.denominator != 1:
                raise Aperiodic(f, tau)
    return tau


def monodromy(system: LinearSystem, tau, tol: float = 1e-12) -> np.ndarray:
    """``P = U(tau, 0)`` after the exact periodicity check."""
    tau = check_period(system, tau)
    eye = np.eye(system.n, dtype=complex)
    return dopri5(system.rhs(), 0.0, float(tau), eye, rtol=tol).states[-1]


@dataclass
class CircleSpectrum:
    eigenvalues: np.ndarray
    hits: list[complex]
    near_hits: list[complex]
    tol: float


def circle_spectrum(P, tol: float = 1e-6, near: float = 1e-3) -> CircleSpectrum:
    """Eigenvalues with ``||xi| - 1| <= tol``; those inside within ``near`` are near-hits."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    eig = np.linalg.eigvals(np.atleast_2d(np.asarray(P, dtype=complex)))
    gap = np.abs(eig) - 1
    hits = [complex(z) for z, g in zip(eig, gap) if abs(g) <= tol]
    near_hits = [complex(z) for z, g in zip(eig, gap) if -near <= g < -tol]
    return CircleSpectrum(eig, hits, near_hits, tol)


@dataclass
class PowerBound:
    norms: np.ndarray  # |P^n| for n = 1..N
    sup: float
    trend: str  # decaying | bounded | growing
    tail_ratio: float

    def csv_rows(self):
        return ["n", "norm"], [[n, float(v)] for n, v in enumerate(self.norms, start=1)]


def power_bound(P, N: int = 200, tail: int = 50, ratio_tol: float = 1e-6) -> PowerBound:
    """Norms of ``P^n`` for ``n <= N`` and the trend of the last ``tail`` terms.

    The trend uses the geometric mean ratio ``(|P^N| / |P^{N-tail}|)^{1/tail}``:
    below ``1 - ratio_tol`` is decaying, above ``1 + ratio_tol`` growing.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    norms = np.empty(N)
    Q = np.eye(P.shape[0], dtype=complex)
    for n in range(N):
        Q = Q @ P
        norms[n] = np.linalg.norm(Q, 2)
    tail = min(tail, N - 1)
    if tail < 1:
        ratio = norms[-1]
    else:
        lo, hi = norms[N - 1 - tail], norms[-1]
        ratio = 0.0 if hi == 0 else (math.inf if lo == 0 else (hi / lo) ** (1.0 / tail))
    if ratio < 1 - ratio_tol:
        trend = "decaying"
    elif ratio > 1 + ratio_tol:
        trend = "growing"
    else:
        trend = "bounded"
    return PowerBound(norms, float(norms.max()), trend, float(ratio))


@dataclass
class LimitCheck:
    xi0: complex
    x0: np.ndarray
    alphas: tuple[float, ...]
    values: tuple[float, ...]
    passed: bool
    reason: str

    def evidence(self) -> dict:
        return {"xi0": self.xi0, "x0": self.x0, "alphas": list(self.alphas),
                "values": list(self.values), "reason": self.reason}


def resolvent_limit_check(P, xi0: complex, x0, alphas: Sequence[float] = (1.0, 0.1, 0.01),
                          rule: TrendRule | None = None) -> LimitCheck:
    """``|(lam - xi0) R(lam, P) x0|`` along ``lam = xi0 exp(alpha)``, judged by the trend rule."""
    rule = rule or TrendRule()
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    x0 = np.asarray(x0, dtype=complex).reshape(P.shape[0])
    values = []
    for alpha in alphas:
        if not alpha > 0:
            raise ValueError("alphas must be positive")
        lam = xi0 * math.exp(alpha)
        M = lam * np.eye(P.shape[0]) - P
        cond = np.linalg.cond(M)
        if cond > 1e12:
            raise SingularResolvent(alpha, cond)
        y = np.linalg.solve(M, x0)
        values.append(float(abs(lam - xi0) * np.linalg.norm(y)))
    ok, reason = rule.check(alphas, values)
    return LimitCheck(complex(xi0), x0, tuple(alphas), tuple(values), ok, reason)


@dataclass
class BridgeResult:
    z: complex
    x0: np.ndarray
    u0: np.ndarray
    u_period: np.ndarray
    periodicity_defect: float
    u0_long: np.ndarray | None
    bridge_defect: float | None


def periodic_resolvent_bridge(process: EvolutionProcess, P, lam0: float, alpha: float,
                              f: SampledFunction, tau: float = 1.0, long_horizon: bool = True,
                              decay_target: float = 1e-13) -> BridgeResult:
    """Initial value of the periodic solution of ``u' = (A(t) - z) u + f``, ``z = i lam0 + alpha``.

    Variation of constants over one period gives
    ``u(tau) = exp(-z tau) P u(0) + x0`` with
    ``x0 = int_0^tau exp(-z (tau - xi)) U(tau, xi) f(xi) d xi``, so periodicity
    forces ``u(0) = exp(z tau) R(exp(z tau), P) x0``. ``x0`` is computed by
    Simpson quadrature on the samples of ``f`` with ``U(tau, xi) = P U(xi, 0)^{-1}``.
    Two cross-checks are reported: the defect ``|u(tau) - u(0)|`` after
    integrating one period from ``u(0)``, and the distance to ``u(0)`` obtained
    independently by integrating from rest over many periods.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    n = P.shape[0]
    z = 1j * lam0 + alpha
    if abs(f.t0) > 1e-12 or abs(f.t1 - tau) > 1e-9 * max(1.0, tau):
        raise ValueError("f must be sampled over exactly one period [0, tau]")
    times = f.times
    eye = np.eye(n, dtype=complex)
    tr = dopri5(process.system.rhs(), 0.0, tau, eye, rtol=process.tol, t_eval=times)
    Us = tr.states
    if not np.all(np.isfinite(Us)):
        raise ArithmeticError("quadrature failed: non-finite propagator samples")
    # U(tau, xi) f(xi) = P U(xi, 0)^{-1} f(xi)
    vals = np.stack([P @ np.linalg.solve(U, fv) for U, fv in zip(Us, f.values)])
    weights = np.exp(-z * (tau - times))[:, None]
    x0 = simpson(weights * vals, x=times, axis=0)
    ez = np.exp(z * tau)
    M = ez * eye - P
    cond = np.linalg.cond(M)
    if cond > 1e12:
        raise SingularResolvent(alpha, cond)
    u0 = ez * np.linalg.solve(M, x0)

    def forced(t, u):
        return (process.system.matrix(t) - z * eye) @ u + f(t % tau if t % tau <= f.t1 else f.t1)

    u_tau = dopri5(forced, 0.0, tau, u0, atol=1e-14, rtol=process.tol).states[-1]
    scale = max(1.0, float(np.linalg.norm(u0)))
    defect = float(np.linalg.norm(u_tau - u0)) / scale
    u_long = None
    bridge = None
    if long_horizon:
        # from rest, the transient decays like |exp(-z tau) P|^k
        rate = abs(np.exp(-z * tau)) * max(np.abs(np.linalg.eigvals(P)).max(), 1e-300)
        periods = int(math.ceil(math.log(decay_target) / math.log(rate))) if rate < 1 else 0
        if 0 < periods <= 5000:
            u = np.zeros(n, dtype=complex)
            for _ in range(periods):
                u = dopri5(forced, 0.0, tau, u, atol=1e-14, rtol=process.tol).states[-1]
            u_long = u
            bridge = float(np.linalg.norm(u_long - u0)) / scale
    return BridgeResult(z, x0, u0, u_tau, defect, u_long, bridge)


@dataclass(frozen=True)
class PeriodicConfig:
    tol: float = 1e-12
    circle_tol: float = 1e-6
    power_N: int = 200
    power_tail: int = 50
    alphas: tuple[float, ...] = (1.0, 0.1, 0.01)
    rule: TrendRule = field(default_factory=TrendRule)


@dataclass
class MonodromyReport:
    P: np.ndarray
    tau: RealConstant
    eigenvalues: np.ndarray
    circle: CircleSpectrum
    power: PowerBound
    limits: list[LimitCheck]
    verdict: str  # StronglyStable | Bounded | Unbounded
    records: tuple[ConditionRecord, ...]

    def record(self, name: str) -> ConditionRecord:
        return next(r for r in self.records if r.name == name)


def periodic_stability_verdict(system: LinearSystem, tau, config: PeriodicConfig | None = None
                               ) -> MonodromyReport:
    """Power-boundedness, countable circle spectrum and the resolvent limit at each circle
    eigenvalue for every basis vector; StronglyStable only when all pass."""
    config = config or PeriodicConfig()
    tau = check_period(system, tau)
    P = monodromy(system, tau, config.tol)
    circle = circle_spectrum(P, config.circle_tol)
    power = power_bound(P, config.power_N, config.power_tail)
    limits = []
    for xi0 in circle.hits:
        for j in range(P.shape[0]):
            e = np.zeros(P.shape[0], dtype=complex)
            e[j] = 1
            try:
                limits.append(resolvent_limit_check(P, xi0, e, config.alphas, config.rule))
            except SingularResolvent as exc:
                limits.append(LimitCheck(xi0, e, config.alphas, (), False, str(exc)))
    power_ok = power.trend in ("decaying", "bounded")
    rec_power = ConditionRecord(
        "power-bounded", "sup over n of |P^n| finite", "pass" if power_ok else "fail",
        {"sup": power.sup, "N": config.power_N, "trend": power.trend, "tail_ratio": power.tail_ratio})
    rec_circle = ConditionRecord(
        "countable-circle-spectrum", "spectrum of P on the unit circle countable", "pass",
        {"hits": circle.hits, "near_hits": circle.near_hits, "tol": circle.tol,
         "eigenvalues": circle.eigenvalues})
    limits_ok = all(c.passed for c in limits)
    rec_limit = ConditionRecord(
        "resolvent-limit", "(lam - xi0) R(lam, P) x0 -> 0 as lam -> xi0 radially",
        "pass" if limits_ok else "fail",
        {"checks": [c.evidence() for c in limits], "alphas": list(config.alphas)})
    if power_ok and limits_ok:
        verdict = "StronglyStable"
    elif power_ok:
        verdict = "Bounded"
    else:
        verdict = "Unbounded"
    return MonodromyReport(P, tau, circle.eigenvalues, circle, power, limits, verdict,
                           (rec_power, rec_circle, rec_limit))
