"""Numerical oracle for ``x' = (A0 + A(t)) x``: adaptive Runge-Kutta integration,
propagator matrices, process-axiom checks, the evolution semigroup on sampled
functions and decay probes.

Everything here is independent of the closed-form scalar machinery, so the two
can be compared against each other.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .trigpoly import TrigPoly

__all__ = [
    "StepUnderflow",
    "GridCoverageError",
    "LinearSystem",
    "Trajectory",
    "dopri5",
    "rk_propagate",
    "rk_trajectory",
    "PropagatorResult",
    "propagator_matrix",
    "EvolutionProcess",
    "SampledFunction",
    "semigroup_apply",
    "ScanResult",
    "sup_norm_scan",
    "ProbeResult",
    "stability_probe",
    "write_trajectory_csv",
    "write_scan_csv",
]


class StepUnderflow(RuntimeError):
    """The step size collapsed before the end of the interval."""

    def __init__(self, t_reached: float, h: float):
        self.t_reached = t_reached
        self.h = h
        super().__init__(f"step size {h:.3g} underflowed at t = {t_reached:.17g}")


class GridCoverageError(ValueError):
    pass


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass(frozen=True)
class LinearSystem:
    """``x' = (A0 + A(t)) x`` with ``A`` a matrix trigonometric polynomial.

    Either part may be absent; ``n`` is taken from whichever is given.
    """

    A: TrigPoly | None = None
    A0: np.ndarray | None = None

    def __post_init__(self):
        A, A0 = self.A, self.A0
        if A is not None and A.is_scalar:
            A = TrigPoly(A.basis, A.num, A.den, A.coef.reshape(-1, 1, 1), (1, 1), _canonical=True)
            object.__setattr__(self, "A", A)
        if A0 is not None:
            A0 = np.atleast_2d(np.asarray(A0, dtype=complex))
            if A0.shape[0] != A0.shape[1] or not np.all(np.isfinite(A0)):
                raise ValueError("A0 must be a finite square matrix")
            object.__setattr__(self, "A0", A0)
        if A is not None and (len(A.shape) != 2 or A.shape[0] != A.shape[1]):
            raise ValueError("A must be square-matrix valued")
        if A is not None and A0 is not None and A.shape != A0.shape:
            raise ValueError("A and A0 differ in dimension")
        if A is None and A0 is None:
            raise ValueError("need A or A0 to fix the dimension")
        lam = A.lam if A is not None else np.zeros(0)
        coef = A.coef if A is not None else np.zeros((0, self.n, self.n), dtype=complex)
        object.__setattr__(self, "_lam", lam)
        object.__setattr__(self, "_coef", coef)

    @classmethod
    def scalar(cls, a: TrigPoly) -> "LinearSystem":
        return cls(A=a)

    @property
    def n(self) -> int:
        return self.A0.shape[0] if self.A0 is not None else self.A.shape[0]

    def matrix(self, t) -> np.ndarray:
        """``A0 + A(t)``; a stack of matrices when ``t`` is an array."""
        t = np.asarray(t, dtype=float)
        n = self.n
        out = np.zeros(t.shape + (n, n), dtype=complex)
        if len(self._lam):
            phase = np.exp(1j * np.multiply.outer(t, self._lam))
            out += np.tensordot(phase, self._coef, axes=(phase.ndim - 1, 0))
        if self.A0 is not None:
            out += self.A0
        return out

    def rhs(self, offsets=0.0, scales=None) -> Callable:
        """Right-hand side in shifted time: row ``j`` of the state lives at ``offsets[j] + tau``.

        With ``scales``, row ``j`` lives at ``offsets[j] + scales[j] * tau`` and
        its derivative is multiplied by ``scales[j]``.
        """
        off = np.asarray(offsets, dtype=float)
        if scales is not None:
            sc = np.asarray(scales, dtype=float)
            return lambda tau, y: np.einsum("bij,bj...->bi...",
                                            sc[:, None, None] * self.matrix(off + sc * tau), y)
        if off.ndim == 0:
            return lambda tau, y: self.matrix(off + tau) @ y
        return lambda tau, y: np.einsum("bij,bj...->bi...", self.matrix(off + tau), y)


def _rms(x: np.ndarray) -> float:
    if not x.size:
        return 0.0
    m = float(np.max(np.abs(x)))
    if m == 0.0 or not math.isfinite(m):
        return m
    # scaled so that tiny states do not underflow when squared
    return m * float(np.sqrt(np.mean(np.abs(x / m) ** 2)))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    error: float  # accumulated local error estimate
    steps: int
    rejected: int


def dopri5(rhs: Callable, t0: float, t1: float, y0, atol: float = 0.0, rtol: float = 1e-10,
           t_eval: Sequence[float] | None = None, h0: float | None = None,
           max_steps: int = 10_000_000) -> Trajectory:
    """Dormand-Prince 5(4) with FSAL, local extrapolation and fixed step control.

    ``y`` may be an array of any shape. The error test is norm-wise:
    ``rms(err) <= atol + rtol * max(rms(y), rms(y_new))``, so a linear flow
    keeps its relative accuracy however small the state becomes. Steps are
    clipped so every time in ``t_eval`` is hit exactly. Results depend only on
    the inputs.
    """
    y = np.array(y0, dtype=complex)
    t0, t1 = float(t0), float(t1)
    if t1 < t0:
        raise ValueError("integration runs forward only")
    targets = np.array([t1] if t_eval is None else sorted(t_eval), dtype=float)
    if targets.size and (targets[0] < t0 or targets[-1] > t1):
        raise ValueError("t_eval outside the integration interval")
    out_t, out_y = [], []
    i_target = 0
    while i_target < len(targets) and targets[i_target] == t0:
        out_t.append(t0)
        out_y.append(y.copy())
        i_target += 1
    if t1 == t0 or i_target == len(targets):
        return Trajectory(np.array(out_t), np.array(out_y), 0.0, 0, 0)

    t = t0
    k1 = rhs(t, y)
    if h0 is None:
        scale = atol + rtol * _rms(y)
        d0 = _rms(y) / scale if scale > 0 else 0.0
        d1 = _rms(k1) / scale if scale > 0 else 0.0
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, t1 - t0)
    else:
        h = h0
    err_total = 0.0
    steps = rejected = 0
    while i_target < len(targets):
        target = targets[i_target]
        if steps + rejected > max_steps:
            raise StepUnderflow(t, h)
        hit = False
        step = h
        if t + step >= target or target - (t + step) < 1e-12 * max(1.0, abs(target)):
            step = target - t
            hit = True
        if step <= 1e-14 * max(1.0, abs(t)):
            if hit:
                # target numerically equal to t
                t = target
                out_t.append(t)
                out_y.append(y.copy())
                i_target += 1
                continue
            raise StepUnderflow(t, step)
        ks = [k1]
        for i in range(1, 7):
            yi = y + step * sum(a * k for a, k in zip(_A[i], ks) if a != 0)
            ks.append(rhs(t + _C[i] * step, yi))
        y_new = y + step * sum(b * k for b, k in zip(_B5, ks) if b != 0)
        err_vec = step * sum(e * k for e, k in zip(_E, ks) if e != 0)
        scale = atol + rtol * max(_rms(y), _rms(y_new))
        err = _rms(err_vec) / scale if scale > 0 else (0.0 if not err_vec.any() else math.inf)
        if err <= 1.0:
            t = target if hit else t + step
            y = y_new
            k1 = ks[6]
            err_total += float(np.max(np.abs(err_vec))) if err_vec.size else 0.0
            steps += 1
            if hit:
                out_t.append(t)
                out_y.append(y.copy())
                i_target += 1
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            if not hit or step >= h:
                h = step * fac
        else:
            rejected += 1
            h = step * max(0.2, 0.9 * err ** -0.2)
            if h <= 1e-14 * max(1.0, abs(t)):
                raise StepUnderflow(t, h)
    return Trajectory(np.array(out_t), np.array(out_y), err_total, steps, rejected)


def rk_propagate(system: LinearSystem, s: float, t: float, x0, tol: float = 1e-10,
                 atol: float = 0.0) -> tuple[np.ndarray, float]:
    """``x(t)`` from ``x(s) = x0``; returns the state and an accumulated error estimate.

    ``tol`` is the relative tolerance of the step control, ``atol`` the absolute one.
    """
    if t < s:
        raise ValueError("rk_propagate needs t >= s")
    if tol <= 0:
        raise ValueError("tol must be positive")
    x0 = np.asarray(x0, dtype=complex).reshape(system.n, *np.shape(x0)[1:])
    if not np.any(x0):
        return np.zeros_like(x0), 0.0
    # linear flow: integrate the normalised state so tiny data keeps full precision
    c = float(np.max(np.abs(x0)))
    tr = dopri5(system.rhs(), s, t, x0 / c, atol=atol / c, rtol=tol)
    return tr.states[-1] * c, tr.error * c


def rk_trajectory(system: LinearSystem, s: float, times: Sequence[float], x0, tol: float = 1e-10,
                  atol: float = 0.0) -> Trajectory:
    """States at each of ``times`` (all ``>= s``) from ``x(s) = x0``."""
    times = np.asarray(times, dtype=float)
    x0 = np.asarray(x0, dtype=complex)
    return dopri5(system.rhs(), s, float(times.max()), x0, atol=atol, rtol=tol, t_eval=times)


@dataclass
class PropagatorResult:
    U: np.ndarray
    identity_defect: float
    cocycle_defect: float
    error: float


def propagator_matrix(system: LinearSystem, s: float, t: float, tol: float = 1e-10,
                      midpoints: int = 3) -> PropagatorResult:
    """``U(t, s)`` column by column (all columns integrated together).

    The record holds ``|U(s, s) - I|`` and the largest relative cocycle defect
    ``|U(t, r) U(r, s) - U(t, s)| / max(1, |U(t, s)|)`` over evenly spaced
    midpoints ``r``.
    """
    if t < s:
        raise ValueError("propagator_matrix needs t >= s")
    n = system.n
    eye = np.eye(n, dtype=complex)
    if t == s:
        return PropagatorResult(eye, 0.0, 0.0, 0.0)
    rs = np.linspace(s, t, midpoints + 2)[1:-1]
    tr = dopri5(system.rhs(), s, t, eye, atol=0.0, rtol=tol, t_eval=np.concatenate([[s], rs, [t]]))
    U = tr.states[-1]
    ident = float(np.linalg.norm(tr.states[0] - eye, 2))
    defect = 0.0
    for r, Urs in zip(rs, tr.states[1:-1]):
        Utr = dopri5(system.rhs(), r, t, eye, atol=0.0, rtol=tol).states[-1]
        d = np.linalg.norm(Utr @ Urs - U, 2) / max(1.0, np.linalg.norm(U, 2))
        defect = max(defect, float(d))
    return PropagatorResult(U, ident, defect, tr.error)


@dataclass
class EvolutionProcess:
    """Numerical evolutionary process of a linear system.

    ``bound`` is an empirical ``(M, alpha)`` with ``|U(t, s)| <= M exp(alpha (t - s))``
    on the explored region, filled in by :meth:`fit_bound` or by a scan.
    """

    system: LinearSystem
    tol: float = 1e-10
    atol: float = 0.0
    bound: tuple[float, float] | None = None

    @property
    def n(self) -> int:
        return self.system.n

    def U(self, t: float, s: float) -> np.ndarray:
        if t < s:
            raise ValueError("U(t, s) needs t >= s")
        if t == s:
            return np.eye(self.n, dtype=complex)
        return dopri5(self.system.rhs(), s, t, np.eye(self.n, dtype=complex),
                      atol=self.atol, rtol=self.tol).states[-1]

    def U_batch(self, starts, length: float) -> np.ndarray:
        """``U(s_j + length, s_j)`` for every start ``s_j``, integrated as one batch."""
        starts = np.asarray(starts, dtype=float)
        eye = np.broadcast_to(np.eye(self.n, dtype=complex), starts.shape + (self.n, self.n))
        if length == 0:
            return eye.copy()
        return dopri5(self.system.rhs(starts), 0.0, length, eye, atol=self.atol, rtol=self.tol).states[-1]

    def U_pairs(self, starts, ends) -> np.ndarray:
        """``U(t_j, s_j)`` for arbitrary pairs, integrated as one batch in rescaled time."""
        starts = np.asarray(starts, dtype=float)
        ends = np.asarray(ends, dtype=float)
        if starts.shape != ends.shape or starts.ndim != 1:
            raise ValueError("starts and ends must be 1-d arrays of equal length")
        if np.any(ends < starts):
            raise ValueError("U(t, s) needs t >= s")
        eye = np.broadcast_to(np.eye(self.n, dtype=complex), starts.shape + (self.n, self.n))
        if not np.any(ends > starts):
            return eye.copy()
        rhs = self.system.rhs(starts, ends - starts)
        return dopri5(rhs, 0.0, 1.0, eye, atol=self.atol, rtol=self.tol).states[-1]

    def axiom_defects(self, triples) -> dict:
        """Identity and cocycle defects over ``(s, r, t)`` triples with ``s <= r <= t``.

        The cocycle defect is relative: ``|U(t, r) U(r, s) - U(t, s)| / max(1, |U(t, s)|)``.
        """
        trip = np.sort(np.asarray(triples, dtype=float).reshape(-1, 3), axis=1)
        if not len(trip):
            return {"identity_defect": 0.0, "cocycle_defect": 0.0, "triples": 0}
        s, r, t = trip.T
        k = len(trip)
        U = self.U_pairs(np.concatenate([s, s, r, s]), np.concatenate([s, t, t, r]))
        Uss, Uts, Utr, Urs = U[:k], U[k:2 * k], U[2 * k:3 * k], U[3 * k:]
        ident = float(np.max(np.linalg.norm(Uss - np.eye(self.n), 2, axis=(1, 2))))
        num = np.linalg.norm(Utr @ Urs - Uts, 2, axis=(1, 2))
        den = np.maximum(1.0, np.linalg.norm(Uts, 2, axis=(1, 2)))
        return {"identity_defect": ident, "cocycle_defect": float(np.max(num / den)), "triples": k}

    def fit_bound(self, lags, norms) -> tuple[float, float]:
        """Log-linear fit of the worst norm per lag, lifted so it bounds every sample."""
        lags = np.asarray(lags, dtype=float)
        logs = np.log(np.maximum(np.asarray(norms, dtype=float), 1e-300))
        if len(lags) >= 2 and np.ptp(lags) > 0:
            alpha = float(np.polyfit(lags, logs, 1)[0])
        else:
            alpha = 0.0
        M = float(np.exp(np.max(logs - alpha * lags)))
        self.bound = (max(M, 1.0), alpha)
        return self.bound


@dataclass
class SampledFunction:
    """Vector-valued samples on a uniform grid with cubic interpolation."""

    t0: float
    step: float
    values: np.ndarray  # (nodes, n)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] < 2 or not self.step > 0:
            raise ValueError("need at least two nodes and a positive step")
        self.values = v
        self._spline = None

    @classmethod
    def from_callable(cls, fn, t0: float, t1: float, nodes: int) -> "SampledFunction":
        times = np.linspace(t0, t1, nodes)
        vals = np.asarray([np.atleast_1d(fn(t)) for t in times], dtype=complex)
        return cls(float(t0), float(times[1] - times[0]), vals)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.values.shape[0])

    @property
    def t1(self) -> float:
        return self.t0 + self.step * (self.values.shape[0] - 1)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0 - 1e-12 * max(1.0, abs(self.t0))) or \
                np.any(t > self.t1 + 1e-12 * max(1.0, abs(self.t1))):
            raise GridCoverageError("evaluation outside the sampled grid")
        if self._spline is None:
            x = self.times
            self._spline = (CubicSpline(x, self.values.real, axis=0),
                            CubicSpline(x, self.values.imag, axis=0))
        re, im = self._spline
        return re(t) + 1j * im(t)


def semigroup_apply(process: EvolutionProcess, g: SampledFunction, h: float) -> SampledFunction:
    """``(T^h g)(t) = U(t, t - h) g(t - h)`` on the nodes ``t >= t0 + h``.

    The output keeps the input step; ``g(t - h)`` is interpolated when ``h``
    is not a multiple of the step. ``h = 0`` returns the samples unchanged.
    """
    if h < 0:
        raise ValueError("h must be nonnegative")
    if h == 0:
        return SampledFunction(g.t0, g.step, g.values.copy())
    times = g.times
    k0 = int(np.searchsorted(times, g.t0 + h - 1e-9 * g.step))
    out_t = times[k0:]
    if len(out_t) < 2:
        raise GridCoverageError(f"grid of length {g.t1 - g.t0:g} does not cover shift h = {h:g}")
    starts = out_t - h
    ratio = h / g.step
    if abs(ratio - round(ratio)) < 1e-9:
        src = g.values[np.arange(len(out_t)) + k0 - int(round(ratio))]
    else:
        src = g(starts)
    Ub = process.U_batch(starts, h)
    vals = np.einsum("bij,bj->bi", Ub, src)
    return SampledFunction(float(out_t[0]), g.step, vals)


@dataclass
class ScanResult:
    sup: float
    argmax: tuple[float, float]
    horizons: tuple[float, ...]
    nested_sups: tuple[float, ...]
    growth_rates: tuple[float, ...]
    growing: bool
    bound: tuple[float, float]
    rows: list = field(default_factory=list, repr=False)  # (s, t, norm)

    def evidence(self) -> dict:
        return {"sup": self.sup, "argmax": list(self.argmax), "horizons": list(self.horizons),
                "nested_sups": list(self.nested_sups), "growth_rates": list(self.growth_rates),
                "growing": self.growing, "M": self.bound[0], "alpha": self.bound[1]}


def sup_norm_scan(process: EvolutionProcess, horizon: float, grid_step: float = 0.5,
                  growth_threshold: float = 0.05) -> ScanResult:
    """``sup |U(t, s)|`` over grid pairs ``0 <= s <= t <= horizon``.

    One-cell propagators are integrated as a batch and chained, so every pair
    costs one small matrix product. Sups over the nested horizons H/4, H/2, H
    give two growth rates; the growth flag is raised when both exceed
    ``growth_threshold``.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    cells = max(1, int(round(horizon / grid_step)))
    step = horizon / cells
    grid = step * np.arange(cells + 1)
    cell_U = process.U_batch(grid[:-1], step)
    n = process.n
    # running[i] = U(grid[j], grid[i]) for i <= j
    running = np.broadcast_to(np.eye(n, dtype=complex), (cells + 1, n, n)).copy()
    norms = np.full((cells + 1, cells + 1), np.nan)
    norms[np.arange(cells + 1), np.arange(cells + 1)] = 1.0
    for j in range(1, cells + 1):
        running[:j] = cell_U[j - 1] @ running[:j]
        norms[:j, j] = np.linalg.norm(running[:j], ord=2, axis=(1, 2))
    i, j = np.unravel_index(np.nanargmax(norms), norms.shape)
    rows = [(grid[a], grid[b], norms[a, b]) for a in range(cells + 1) for b in range(a, cells + 1)]
    horizons, sups = [], []
    for frac in (0.25, 0.5, 1.0):
        k = max(1, int(round(frac * cells)))
        horizons.append(grid[k])
        sups.append(float(np.nanmax(norms[: k + 1, : k + 1])))
    rates = tuple((math.log(sups[q + 1]) - math.log(sups[q])) / (horizons[q + 1] - horizons[q])
                  for q in range(2))
    growing = all(r > growth_threshold for r in rates)
    lags = np.arange(cells + 1)
    worst = np.array([np.nanmax(np.diagonal(norms, offset=d)) for d in lags])
    bound = process.fit_bound(lags * step, worst)
    return ScanResult(float(norms[i, j]), (float(grid[i]), float(grid[j])), tuple(horizons),
                      tuple(sups), rates, growing, bound, rows)


@dataclass
class ProbeResult:
    times: np.ndarray
    initial: np.ndarray  # (k, n)
    states: np.ndarray  # (len(times), k, n)
    norms: np.ndarray  # (len(times), k)
    tail_slope: float
    suggestion: str  # Decaying | Bounded | Growing

    def csv_rows(self):
        header = ["t"] + [f"norm_{j}" for j in range(self.norms.shape[1])]
        return header, [[float(t), *map(float, row)] for t, row in zip(self.times, self.norms)]


def stability_probe(process: EvolutionProcess, initial, s: float = 0.0, horizon: float = 10.0,
                    samples: int = 201, slope_threshold: float = 0.1) -> ProbeResult:
    """Decay curves ``|U(t, s) x0|`` and a suggestion from the last quarter of the horizon.

    The suggestion is Decaying when the fitted log-slope on the tail is below
    ``-slope_threshold`` or the worst final norm is below 1e-6 of the initial
    one, Growing when the slope is above ``slope_threshold`` and the final norm
    exceeds every norm on the first half, and Bounded otherwise.
    """
    X0 = np.atleast_2d(np.asarray(initial, dtype=complex))
    if X0.shape[1] != process.n:
        X0 = X0.T
    times = s + np.linspace(0.0, horizon, samples)
    tr = dopri5(process.system.rhs(), s, s + horizon, X0.T, atol=process.atol, rtol=process.tol,
                t_eval=times)
    states = np.transpose(tr.states, (0, 2, 1))
    norms = np.linalg.norm(states, axis=2)
    worst = norms.max(axis=1)
    tail = times >= s + 0.75 * horizon
    logs = np.log(np.maximum(worst[tail], 1e-300))
    slope = float(np.polyfit(times[tail], logs, 1)[0]) if tail.sum() >= 2 else 0.0
    init = max(float(worst[0]), 1e-300)
    if slope < -slope_threshold or worst[-1] < 1e-6 * init:
        suggestion = "Decaying"
    elif slope > slope_threshold and worst[-1] > worst[times <= s + 0.5 * horizon].max():
        suggestion = "Growing"
    else:
        suggestion = "Bounded"
    return ProbeResult(times, X0, states, norms, slope, suggestion)


def write_trajectory_csv(path, times, states) -> None:
    """Header ``t,re_0,im_0,...`` with one row per time."""
    states = np.asarray(states, dtype=complex).reshape(len(times), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{p}_{j}" for j in range(states.shape[1]) for p in ("re", "im")])
        for t, row in zip(times, states):
            w.writerow([repr(float(t))] + [repr(float(x)) for z in row for x in (z.real, z.imag)])


def write_scan_csv(path, rows) -> None:
    """Header ``s,t,norm``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "t", "norm"])
        for s, t, v in rows:
            w.writerow([repr(float(s)), repr(float(t)), repr(float(v))])
