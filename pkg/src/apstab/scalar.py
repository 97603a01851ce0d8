"""Scalar equations ``x' = a(t) x`` with trigonometric-polynomial ``a``.

The propagator has the closed form ``U(t, s) = exp(mu0 (t - s)) exp(G(t) - G(s))``
where ``mu0`` is the mean of ``a`` and ``G`` the bounded primitive of ``a - mu0``.
Resolvent problems ``u' = (a - lam) u + f`` are solved in closed form on the
harmonics of ``exp(-G) f``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .apcalc import BoundedApprox, antiderivative, ap_exponential, derivative
from .freqlat import DEFAULT_EPS, DEFAULT_SEARCH_BOUND, Discreteness, Frequency, ModuleCheck, SemiModule
from .records import ConditionRecord, TrendRule
from .trigpoly import TrigPoly, bohr_mean, bohr_spectrum

__all__ = [
    "NotApplicable",
    "ScalarEquation",
    "SupBound",
    "SpectrumReport",
    "ResolventSolution",
    "ErgodicResult",
    "StabilityConfig",
    "StabilityVerdict",
    "propagator",
    "sup_propagator_bound",
    "spectrum_report",
    "solve_resolvent",
    "ergodic_check",
    "default_probes",
    "stability_verdict",
]

_EPS = float(np.finfo(float).eps)


class NotApplicable(ValueError):
    """No bounded-solution formula is available for this spectral parameter."""


@dataclass(frozen=True, eq=False)
class ScalarEquation:
    """``x' = a(t) x`` together with the decomposition ``a = mu0 + (a - mu0)``."""

    a: TrigPoly
    exp_tol: float = 1e-12

    def __post_init__(self):
        if not self.a.is_scalar:
            raise ValueError("ScalarEquation needs a scalar polynomial")

    @property
    def basis(self):
        return self.a.basis

    @functools.cached_property
    def mu0(self) -> complex:
        return complex(bohr_mean(self.a, self.basis.zero()))

    @functools.cached_property
    def a_tilde(self) -> TrigPoly:
        return self.a - self.mu0

    @functools.cached_property
    def G(self) -> TrigPoly:
        """Primitive of the zero-mean part, normalised to ``G(0) = 0``."""
        return antiderivative(self.a_tilde)

    @functools.cached_property
    def re_G_bound(self) -> float:
        """l1 bound on ``Re G``, hence ``|Re G(t)| <= re_G_bound``."""
        return self.G.real_part().l1_norm()

    @functools.cached_property
    def exp_plus(self) -> BoundedApprox:
        return ap_exponential(self.G, self.exp_tol)

    @functools.cached_property
    def exp_minus(self) -> BoundedApprox:
        return ap_exponential(-self.G, self.exp_tol)

    def __repr__(self):
        return f"ScalarEquation(a={self.a!r})"


def propagator(eq: ScalarEquation, s, t):
    """Closed-form ``U(t, s)`` and a bound on its evaluation error; vectorises over t."""
    s_arr, t_arr = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    if np.any(t_arr < s_arr):
        raise ValueError("propagator needs t >= s")
    gt, et = eq.G.eval_with_error(t_arr)
    gs, es = eq.G.eval_with_error(s_arr)
    expo = eq.mu0 * (t_arr - s_arr) + (gt - gs)
    val = np.exp(expo)
    expo_err = et + es + 4 * _EPS * (abs(eq.mu0) * np.abs(t_arr - s_arr) + np.abs(gt) + np.abs(gs))
    err = np.abs(val) * (np.expm1(expo_err) + 2 * _EPS)
    if val.ndim == 0:
        return complex(val), float(err)
    return val, err


@dataclass(frozen=True)
class SupBound:
    status: str  # "Bounded" | "Unbounded"
    bound: float
    reason: str


def sup_propagator_bound(eq: ScalarEquation) -> SupBound:
    """Bound ``sup_{t >= s} |U(t, s)|`` from the mean and the size of ``Re G``."""
    re_mu = eq.mu0.real
    b = eq.re_G_bound
    if re_mu > 0:
        return SupBound("Unbounded", math.inf, f"mean growth rate Re mu0 = {re_mu:g} > 0")
    kind = "decaying mean" if re_mu < 0 else "zero real mean"
    return SupBound("Bounded", math.exp(2 * b), f"{kind}; |Re G| <= {b:.12g}")


@dataclass(frozen=True)
class SpectrumReport:
    """Where the imaginary-axis spectrum of ``-d/dt + a`` can sit.

    ``route`` is ``"discrete-semimodule"`` when the semi-module of the
    spectrum is discrete and 0 is not a frequency (inclusion in
    ``-i Lambda U i Lambda``), ``"mean-extraction"`` when the mean has negative
    real part (inclusion in ``i Lambda``), and ``"none"`` otherwise.
    """

    module: SemiModule
    discreteness: Discreteness
    zero_in_spectrum: bool
    module_check: ModuleCheck
    route: str
    member_bound: int

    @property
    def applicable(self) -> bool:
        return self.route != "none"

    @property
    def inclusion(self) -> str | None:
        return {"discrete-semimodule": "-i*Lambda U i*Lambda", "mean-extraction": "i*Lambda"}.get(self.route)

    def candidate(self, beta: Frequency, bound: int | None = None) -> bool | None:
        """Is ``i*beta`` in the candidate set? None when no inclusion is established."""
        bound = self.member_bound if bound is None else bound
        if self.route == "none":
            return None
        if self.module.member(beta, bound):
            return True
        if self.route == "discrete-semimodule":
            return bool(self.module.member(-beta, bound))
        return False

    def probe_betas(self) -> list[Frequency]:
        """Finite sample of candidate points used by the ergodic check."""
        out = [self.module.basis.zero()]
        for g in self.module.generators:
            if g.is_zero():
                continue
            out.append(g)
            if self.route == "discrete-semimodule":
                out.append(-g)
        seen, uniq = set(), []
        for b in out:
            if b not in seen:
                seen.add(b)
                uniq.append(b)
        return uniq


def spectrum_report(eq: ScalarEquation, member_bound: int = 64, search_bound: int = DEFAULT_SEARCH_BOUND,
                    eps: float = DEFAULT_EPS) -> SpectrumReport:
    spectrum = bohr_spectrum(eq.a)
    module = SemiModule.generated_by(spectrum, eq.basis)
    disc = module.discreteness(search_bound, eps)
    zero_in = eq.basis.zero() in spectrum
    mcheck = module.is_module(member_bound)
    if disc.status == "Discrete" and not zero_in:
        route = "discrete-semimodule"
    elif eq.mu0.real < 0:
        route = "mean-extraction"
    else:
        route = "none"
    return SpectrumReport(module, disc, zero_in, mcheck, route, member_bound)


@dataclass(frozen=True)
class ResolventSolution:
    """Bounded solution of ``u' = (a - lam) u + f``."""

    lam: complex
    f: TrigPoly
    u: BoundedApprox
    residual_bound: float
    unique: bool
    justification: str

    def residual(self, eq: ScalarEquation) -> TrigPoly:
        u = self.u.approx
        return derivative(u) - (eq.a - self.lam) * u - self.f


def solve_resolvent(eq: ScalarEquation, lam: complex, f: TrigPoly, tol: float | None = None,
                    with_residual: bool = True) -> ResolventSolution:
    """Unique bounded solution of ``u' = (a - lam) u + f`` when ``Re lam > Re mu0``.

    With ``d = lam - mu0`` the solution is
    ``u = exp(G) * sum_nu h_nu exp(i nu t) / (i nu + d)`` where ``h = exp(-G) f``;
    every denominator has real part ``Re d > 0``. ``u.sup_error`` bounds the
    distance to the exact solution; ``residual_bound`` is the l1 norm of the
    computed polynomial residual ``u' - (a - lam) u - f``.
    """
    lam = complex(lam)
    if tol is not None and not tol > 0:
        raise ValueError("tol must be positive")
    if not f.is_scalar or f.basis != eq.basis:
        raise ValueError("forcing must be a scalar polynomial over the equation's basis")
    d = lam - eq.mu0
    if not d.real > 0:
        raise NotApplicable(f"Re lam = {lam.real:g} <= Re mu0 = {eq.mu0.real:g}: "
                            "no bounded-solution formula")
    e_plus = eq.exp_plus if tol is None else ap_exponential(eq.G, tol)
    e_minus = eq.exp_minus if tol is None else ap_exponential(-eq.G, tol)

    h = e_minus.approx * f
    err_h = e_minus.sup_error * f.l1_norm()
    w = h.map_coefficients(lambda nu, _row, c: c / (1j * nu + d))
    # convolution with exp(-d (t - s)) over s < t has norm at most 1 / Re d
    err_w = err_h / d.real
    u = e_plus.approx * w
    size_exp_g = min(e_plus.sup_bound(), math.exp(eq.re_G_bound))
    err_u = e_plus.sup_error * w.l1_norm() + size_exp_g * err_w
    rounding = 8 * _EPS * (len(e_plus.approx) + len(w)) * e_plus.approx.l1_norm() * w.l1_norm()
    sol_u = BoundedApprox(u, err_u + rounding, e_plus.order)
    residual_bound = math.nan
    if with_residual:
        residual = derivative(u) - (eq.a - lam) * u - f
        residual_bound = residual.l1_norm()
    why = (f"homogeneous solutions c*exp((mu0 - lam) t + G(t)) grow like exp({-d.real:g} t) as t -> -inf, "
           "so at most one bounded solution exists")
    return ResolventSolution(lam, f, sol_u, residual_bound, True, why)


@dataclass(frozen=True)
class ErgodicResult:
    lam: complex
    f: TrigPoly
    alphas: tuple[float, ...]
    values: tuple[float, ...]
    sampled: tuple[float, ...]
    passed: bool
    reason: str


def ergodic_check(eq: ScalarEquation, lam: complex, f: TrigPoly, alphas: Sequence[float],
                  rule: TrendRule | None = None, samples: np.ndarray | None = None) -> ErgodicResult:
    """Sequence ``alpha * ||u_{lam + alpha, f}||`` for decreasing alphas and its trend verdict.

    The norm is the certified upper bound ``l1(u) + sup_error``; ``sampled``
    holds the grid sup of ``alpha * |u|`` when sample times are given.
    """
    rule = rule or TrendRule()
    alphas = tuple(float(a) for a in alphas)
    if any(a <= 0 for a in alphas):
        raise ValueError("alphas must be positive")
    values, sampled = [], []
    for a in alphas:
        sol = solve_resolvent(eq, complex(lam) + a, f, with_residual=False)
        values.append(a * sol.u.sup_bound())
        if samples is not None:
            sampled.append(a * float(np.abs(sol.u.approx.eval(samples)).max()))
    ok, reason = rule.check(alphas, values)
    return ErgodicResult(complex(lam), f, alphas, tuple(values), tuple(sampled), ok, reason)


def default_probes(eq: ScalarEquation, degree: int = 2) -> list[TrigPoly]:
    """Constants, exponentials of the nonzero frequencies of ``a``, and their products up to ``degree``."""
    gens = sorted((g for g in bohr_spectrum(eq.a) if not g.is_zero()), key=lambda g: (float(g), g.coords))
    freqs = [eq.basis.zero()]
    for k in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(gens, k):
            total = eq.basis.zero()
            for g in combo:
                total = total + g
            freqs.append(total)
    seen, out = set(), []
    for fr in freqs:
        if fr not in seen:
            seen.add(fr)
            out.append(TrigPoly.exp(fr))
    return out


@dataclass(frozen=True)
class StabilityConfig:
    alphas: tuple[float, ...] = (1.0, 0.1, 0.01)
    probe_degree: int = 2
    member_bound: int = 64
    search_bound: int = DEFAULT_SEARCH_BOUND
    eps: float = DEFAULT_EPS
    rule: TrendRule = field(default_factory=TrendRule)


@dataclass(frozen=True)
class StabilityVerdict:
    status: str  # StronglyStable | BoundedAlmostPeriodic | Unbounded | Inconclusive
    evidence: tuple[ConditionRecord, ...]
    spectrum: SpectrumReport | None = None

    def record(self, name: str) -> ConditionRecord:
        return next(r for r in self.evidence if r.name == name)


def _spectrum_record(rep: SpectrumReport) -> ConditionRecord:
    ev = {
        "generators": [str(g) for g in rep.module.generators],
        "discreteness": rep.discreteness.status,
        "discreteness_reason": rep.discreteness.reason,
        "zero_in_spectrum": rep.zero_in_spectrum,
        "module": rep.module_check.status,
        "route": rep.route,
        "inclusion": rep.inclusion,
    }
    if rep.discreteness.witness is not None:
        ev["witness"] = str(rep.discreteness.witness)
        ev["witness_value"] = rep.discreteness.witness_value
    # a finitely generated semi-module is countable, so any established inclusion gives countability
    return ConditionRecord("countable-imaginary-spectrum", "spectrum-in-semimodule",
                           "pass" if rep.applicable else "fail", ev)


def stability_verdict(eq: ScalarEquation, config: StabilityConfig | None = None) -> StabilityVerdict:
    """Strong-stability verdict with one record per checked condition.

    ``Re mu0 > 0`` gives Unbounded and ``Re mu0 = 0`` gives
    BoundedAlmostPeriodic (the propagator never decays). For ``Re mu0 < 0``
    the three conditions of the ergodic stability criterion are assembled:
    bounded propagator, countable imaginary spectrum, and vanishing
    ``alpha * u_{lam + alpha, f}`` over the probe set; StronglyStable only when
    all three pass, Inconclusive otherwise.
    """
    cfg = config or StabilityConfig()
    records = []
    re_mu = eq.mu0.real
    sup = sup_propagator_bound(eq)
    records.append(ConditionRecord("mean-growth-rate", "mean-of-coefficient", "info",
                                   {"mu0": eq.mu0, "re_G_bound": eq.re_G_bound}))
    records.append(ConditionRecord("bounded-propagator", "sup-norm-of-propagator",
                                   "pass" if sup.status == "Bounded" else "fail",
                                   {"bound": sup.bound, "reason": sup.reason}))
    if re_mu > 0:
        return StabilityVerdict("Unbounded", tuple(records))

    rep = spectrum_report(eq, cfg.member_bound, cfg.search_bound, cfg.eps)
    records.append(_spectrum_record(rep))
    if re_mu == 0:
        floor = math.exp(-2 * eq.re_G_bound)
        records.append(ConditionRecord("decay-to-zero", "strong-stability-definition", "fail",
                                       {"lower_bound_on_|U(t,s)|": floor,
                                        "reason": "zero real mean: |U(t,s)| = exp(Re G(t) - Re G(s)) "
                                                  "stays above the floor, solutions are almost periodic"}))
        return StabilityVerdict("BoundedAlmostPeriodic", tuple(records), rep)

    results = []
    betas = rep.probe_betas() if rep.applicable else [eq.basis.zero()]
    for beta in betas:
        for f in default_probes(eq, cfg.probe_degree):
            res = ergodic_check(eq, 1j * float(beta), f, cfg.alphas, cfg.rule)
            results.append((beta, f, res))
    all_pass = all(r.passed for _, _, r in results)
    worst = max(results, key=lambda x: x[2].values[-1])
    records.append(ConditionRecord(
        "ergodic-limit", "alpha-resolvent-vanishes",
        "pass" if all_pass else "fail",
        {"probes": len(results), "alphas": list(cfg.alphas),
         "failures": [f"beta={b}, f={f!r}: {r.reason}" for b, f, r in results if not r.passed],
         "worst_final_value": worst[2].values[-1],
         "worst_probe": f"beta={worst[0]}, f={worst[1]!r}",
         "probe_set_complete": False}))
    strong = all(r.passed for r in records if r.status != "info")
    return StabilityVerdict("StronglyStable" if strong else "Inconclusive", tuple(records), rep)
