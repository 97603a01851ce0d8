"""Harmonic-wise analysis of ``x' = A0 x + A(t) x + f``.

The generator ``-d/dt + A0 + A(t)`` acts diagonally on harmonics when ``A`` is
zero: the block of frequency ``lam`` is ``A0 - i lam``. A finite window of
frequencies gives a block matrix on which resolvent norms can be computed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .freqlat import Frequency, SemiModule
from .trigpoly import TrigPoly

__all__ = [
    "SingularHarmonic",
    "autonomous_resolvent",
    "spectrum_lattice",
    "GeneratorTruncation",
    "galerkin_generator",
    "resolvent_norm_sweep",
    "perturbation_radius",
    "SINGULAR_COND",
]

SINGULAR_COND = 1e12


class SingularHarmonic(ValueError):
    """``mu + i lam`` is an eigenvalue of ``A0`` for a forcing frequency ``lam``."""

    def __init__(self, freq: Frequency, distance: float):
        self.freq = freq
        self.distance = distance
        super().__init__(f"harmonic {freq} is resonant (distance to spectrum {distance:.3g})")


def _as_matrix(A0) -> np.ndarray:
    A0 = np.atleast_2d(np.asarray(A0, dtype=complex))
    if A0.ndim != 2 or A0.shape[0] != A0.shape[1] or A0.shape[0] < 1:
        raise ValueError("A0 must be a square matrix")
    if not np.all(np.isfinite(A0)):
        raise ValueError("A0 has non-finite entries")
    return A0


def autonomous_resolvent(A0, mu: complex, f: TrigPoly) -> TrigPoly:
    """Bounded solution of ``u' = (A0 - mu) u + f``, one harmonic at a time.

    ``u_k = (i lam_k + mu - A0)^{-1} f_k``. A harmonic whose matrix has
    condition number above ``SINGULAR_COND`` raises SingularHarmonic.
    ``f`` may be vector-valued (shape ``(n,)``) or matrix-valued (``(n, m)``).
    """
    A0 = _as_matrix(A0)
    n = A0.shape[0]
    if f.shape == () and n == 1:
        f_vec = TrigPoly(f.basis, f.num, f.den, f.coef.reshape(-1, 1), (1,), _canonical=True)
    else:
        f_vec = f
    if not f_vec.shape or f_vec.shape[0] != n:
        raise ValueError(f"forcing shape {f.shape} does not match dimension {n}")
    eig = np.linalg.eigvals(A0)
    coef = np.empty_like(f_vec.coef)
    for k, lam in enumerate(f_vec.lam):
        M = (1j * lam + mu) * np.eye(n) - A0
        if np.linalg.cond(M) > SINGULAR_COND:
            dist = float(np.min(np.abs(eig - (1j * lam + mu))))
            raise SingularHarmonic(f_vec.frequencies()[k], dist)
        coef[k] = np.linalg.solve(M, f_vec.coef[k])
    u = TrigPoly(f_vec.basis, f_vec.num, f_vec.den, coef, f_vec.shape, _canonical=True)
    if f.shape == ():
        return TrigPoly(f.basis, f.num, f.den, coef.reshape(-1), (), _canonical=True)
    return u


def _dedup(points: Sequence[complex], tol: float) -> list[complex]:
    out: list[complex] = []
    for z in sorted(points, key=lambda z: (round(z.real, 9), round(z.imag, 9))):
        if all(abs(z - w) > tol for w in out):
            out.append(complex(z))
    return out


def spectrum_lattice(A0, module: SemiModule, bound: int, tol: float = 1e-9) -> list[complex]:
    """``{eta - i lam}`` over eigenvalues ``eta`` and truncated semi-module elements ``lam``."""
    A0 = _as_matrix(A0)
    eig = np.linalg.eigvals(A0)
    lams = [float(v) for v in module.truncate(bound)]
    return _dedup([e - 1j * lam for e in eig for lam in lams], tol)


@dataclass
class GeneratorTruncation:
    """Block matrix of ``-d/dt + A0 + A(t)`` on a finite frequency window.

    Block ``(k, k)`` is ``A0 - i lam_k I``; the harmonic ``c_m exp(i mu_m t)``
    of ``A`` moves frequency ``lam_j`` to ``lam_j + mu_m``, so it sits in block
    ``(k, j)`` with ``lam_k = lam_j + mu_m``. Couplings leaving the window are
    dropped and counted.
    """

    lattice: tuple[Frequency, ...]
    n: int
    matrix: np.ndarray
    dropped: int

    @property
    def lam(self) -> np.ndarray:
        return np.array([float(f) for f in self.lattice])

    def block(self, k: int, j: int) -> np.ndarray:
        n = self.n
        return self.matrix[k * n:(k + 1) * n, j * n:(j + 1) * n]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)


def galerkin_generator(A0, A: TrigPoly | None, lattice: Sequence[Frequency]) -> GeneratorTruncation:
    lattice = tuple(lattice)
    if not lattice:
        raise ValueError("empty lattice")
    if len(set(lattice)) != len(lattice):
        raise ValueError("lattice frequencies must be distinct")
    A0 = _as_matrix(A0)
    n = A0.shape[0]
    L = len(lattice)
    index = {f: k for k, f in enumerate(lattice)}
    mat = np.zeros((n * L, n * L), dtype=complex)
    for k, f in enumerate(lattice):
        mat[k * n:(k + 1) * n, k * n:(k + 1) * n] = A0 - 1j * float(f) * np.eye(n)
    dropped = 0
    if A is not None and len(A):
        if A.is_scalar:
            A = TrigPoly(A.basis, A.num, A.den, A.coef.reshape(-1, 1, 1), (1, 1), _canonical=True)
        if A.shape != (n, n):
            raise ValueError(f"A has shape {A.shape}, expected {(n, n)}")
        for mu, c in A.terms():
            for j, f in enumerate(lattice):
                k = index.get(f + mu)
                if k is None:
                    dropped += 1
                    continue
                mat[k * n:(k + 1) * n, j * n:(j + 1) * n] += c
    return GeneratorTruncation(lattice, n, mat, dropped)


def _resolvent_norm(matrix: np.ndarray, z: complex) -> float:
    M = z * np.eye(matrix.shape[0]) - matrix
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] == 0 or s[0] / s[-1] > SINGULAR_COND:
        return float("inf")
    return float(1.0 / s[-1])


def resolvent_norm_sweep(trunc: GeneratorTruncation, points: Sequence[complex], workers: int = 1
                         ) -> list[tuple[complex, float]]:
    """``|(z - G)^{-1}|`` (spectral norm) at each point; ``inf`` when numerically singular."""
    points = [complex(z) for z in points]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            norms = list(ex.map(lambda z: _resolvent_norm(trunc.matrix, z), points))
    else:
        norms = [_resolvent_norm(trunc.matrix, z) for z in points]
    return list(zip(points, norms))


@dataclass
class RadiusEstimate:
    delta0: float
    worst_point: complex
    max_resolvent_norm: float
    window: int

    def evidence(self) -> dict:
        return {"delta0": self.delta0, "worst_point": self.worst_point,
                "max_resolvent_norm": self.max_resolvent_norm, "window": self.window,
                "note": "estimate on a finite frequency window"}


def perturbation_radius(A0, K: Sequence[complex], module: SemiModule | None = None,
                        lattice: Sequence[Frequency] | None = None, bound: int = 4) -> RadiusEstimate:
    """``delta0 = 1 / max_{z in K} |R(z, G0)|`` on a truncation of the unperturbed generator.

    Any perturbation with ``sup |A(t)| < delta0`` keeps ``K`` free of spectrum
    by a Neumann series. ``lattice`` defaults to the truncated semi-module.
    """
    if lattice is None:
        if module is None:
            raise ValueError("need a module or an explicit lattice")
        lattice = sorted(module.truncate(bound), key=float)
    trunc = galerkin_generator(A0, None, lattice)
    sweep = resolvent_norm_sweep(trunc, K)
    worst_z, worst = max(sweep, key=lambda p: p[1])
    if not np.isfinite(worst):
        raise ValueError(f"K meets the lattice spectrum at {worst_z}")
    return RadiusEstimate(1.0 / worst, worst_z, worst, len(trunc.lattice))
