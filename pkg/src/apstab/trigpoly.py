"""Trigonometric polynomials ``p(t) = sum_k c_k exp(i lam_k t)`` with exact frequencies.

Frequencies are held as integer coordinate rows over a shared denominator so
products (frequency convolution) and regrouping run in numpy. Coefficients are
complex scalars, or arrays for vector/matrix-valued polynomials; all entries of
a matrix polynomial share one pooled frequency list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

from .freqlat import Frequency, FrequencyBasis, Membership, SemiModule

__all__ = [
    "TrigPoly",
    "APLambdaCertificate",
    "CertificationFailed",
    "ShapeMismatch",
    "algebra",
    "bohr_mean",
    "bohr_spectrum",
    "certify_in_lambda",
]

_EPS = np.finfo(float).eps
_COORD_LIMIT = 2 ** 52
_DENSE_LIMIT = 2_000_000


class ShapeMismatch(ValueError):
    pass


class CertificationFailed(Exception):
    """Some frequencies could not be certified as members of the semi-module."""

    def __init__(self, frequencies, bound, exact):
        self.frequencies = list(frequencies)
        self.bound = bound
        # exact[i] is True when frequencies[i] is provably outside, not just beyond the bound
        self.exact = list(exact)
        kinds = ["outside" if e else f"not found within bound {bound}" for e in self.exact]
        detail = ", ".join(f"{f} ({k})" for f, k in zip(self.frequencies, kinds))
        super().__init__(f"frequencies not certified in Lambda: {detail}")


def _lcm(a: int, b: int) -> int:
    return a // math.gcd(a, b) * b


def _check_coords(num: np.ndarray):
    if num.size and np.abs(num).max() >= _COORD_LIMIT:
        raise OverflowError("frequency coordinates exceed the int64-safe range")


def _group(num: np.ndarray, coef: np.ndarray, m: int):
    """Merge rows with identical coordinates, drop exact-zero coefficients, sort rows."""
    if num.shape[0] == 0:
        return num.reshape(0, m), coef
    uniq, inv = np.unique(num, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    out = np.zeros((uniq.shape[0],) + coef.shape[1:], dtype=complex)
    np.add.at(out, inv, coef)
    keep = np.any(out.reshape(out.shape[0], -1) != 0, axis=1)
    return uniq[keep], out[keep]


class TrigPoly:
    """Finite sum of complex exponentials with exact frequencies.

    Parameters
    ----------
    basis : FrequencyBasis
        Basis the frequency coordinates refer to.
    num : (k, m) int array
        Frequency coordinates scaled by ``den``.
    den : int
        Positive common denominator of all coordinates.
    coef : (k,) + shape complex array
        Coefficients; ``shape`` is ``()`` for scalar polynomials.
    shape : tuple
        Value shape, e.g. ``()``, ``(n,)`` or ``(n, n)``.
    """

    __slots__ = ("basis", "num", "den", "coef", "shape", "_lam")

    def __init__(self, basis: FrequencyBasis, num, den: int, coef, shape=(), *, _canonical=False):
        m = len(basis)
        num = np.asarray(num, dtype=np.int64).reshape(-1, m)
        coef = np.asarray(coef, dtype=complex).reshape((num.shape[0],) + tuple(shape))
        den = int(den)
        if den <= 0:
            raise ValueError("denominator must be positive")
        if not _canonical:
            _check_coords(num)
            num, coef = _group(num, coef, m)
            if num.size:
                g = math.gcd(den, *map(int, np.unique(np.abs(num))))
            else:
                g = den
            if g > 1:
                num, den = num // g, den // g
        if num.shape[0] == 0:
            den = 1
        self.basis = basis
        self.num = num
        self.den = den
        self.coef = coef
        self.shape = tuple(shape)
        self._lam = None

    # -- construction -------------------------------------------------------

    @classmethod
    def zero(cls, basis: FrequencyBasis, shape=()) -> "TrigPoly":
        return cls(basis, np.zeros((0, len(basis)), dtype=np.int64), 1,
                   np.zeros((0,) + tuple(shape), dtype=complex), shape)

    @classmethod
    def from_terms(cls, basis: FrequencyBasis, terms: Iterable[tuple[Frequency, object]], shape=None
                   ) -> "TrigPoly":
        terms = list(terms)
        if shape is None:
            shape = np.shape(terms[0][1]) if terms else ()
        if not terms:
            return cls.zero(basis, shape)
        den = 1
        for f, _ in terms:
            if f.basis != basis:
                raise ValueError("term frequency over a different basis")
            for c in f.coords:
                den = _lcm(den, Fraction(c).denominator)
        num = np.array([[int(Fraction(c) * den) for c in f.coords] for f, _ in terms], dtype=object)
        if num.size and np.abs(num).max() >= _COORD_LIMIT:
            raise OverflowError("frequency coordinates exceed the int64-safe range")
        coef = np.array([np.broadcast_to(np.asarray(c, dtype=complex), shape) for _, c in terms])
        return cls(basis, num.astype(np.int64), den, coef, shape)

    @classmethod
    def constant(cls, basis: FrequencyBasis, c=1.0) -> "TrigPoly":
        return cls.from_terms(basis, [(basis.zero(), c)], np.shape(c))

    @classmethod
    def exp(cls, freq: Frequency, c=1.0) -> "TrigPoly":
        """``c * exp(i freq t)``."""
        return cls.from_terms(freq.basis, [(freq, c)], np.shape(c))

    @classmethod
    def cos(cls, freq: Frequency, c=1.0) -> "TrigPoly":
        c = np.asarray(c, dtype=complex)
        return cls.from_terms(freq.basis, [(freq, c / 2), (-freq, c / 2)], c.shape)

    @classmethod
    def sin(cls, freq: Frequency, c=1.0) -> "TrigPoly":
        c = np.asarray(c, dtype=complex)
        return cls.from_terms(freq.basis, [(freq, c / 2j), (-freq, -c / 2j)], c.shape)

    @classmethod
    def from_entries(cls, entries: Sequence[Sequence["TrigPoly"]]) -> "TrigPoly":
        """Matrix polynomial from an n x n nested list of scalar polynomials."""
        n_rows, n_cols = len(entries), len(entries[0])
        basis = entries[0][0].basis
        out = cls.zero(basis, (n_rows, n_cols))
        for i, row in enumerate(entries):
            for j, e in enumerate(row):
                if e.shape != ():
                    raise ShapeMismatch("matrix entries must be scalar polynomials")
                unit = np.zeros((n_rows, n_cols), dtype=complex)
                unit[i, j] = 1.0
                out = out + e * unit
        return out

    # -- inspection ---------------------------------------------------------

    def __len__(self) -> int:
        return self.num.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.shape == ()

    def is_zero(self) -> bool:
        return len(self) == 0

    def frequencies(self) -> list[Frequency]:
        return [Frequency(self.basis, tuple(Fraction(int(x), self.den) for x in row)) for row in self.num]

    def terms(self) -> list[tuple[Frequency, complex | np.ndarray]]:
        coefs = [complex(c) for c in self.coef] if self.is_scalar else list(self.coef)
        return list(zip(self.frequencies(), coefs))

    @property
    def lam(self) -> np.ndarray:
        """Float values of the frequencies."""
        if self._lam is None:
            self._lam = (self.num.astype(float) @ self.basis.values) / self.den
        return self._lam

    def coefficient(self, freq: Frequency):
        if freq.basis != self.basis:
            raise ValueError("frequency over a different basis")
        row = []
        for c in freq.coords:
            c = Fraction(c) * self.den
            if c.denominator != 1:
                return np.zeros(self.shape, dtype=complex) if self.shape else 0j
            row.append(int(c))
        hit = np.flatnonzero(np.all(self.num == np.array(row, dtype=np.int64), axis=1)) if len(self) else []
        if len(hit) == 0:
            return np.zeros(self.shape, dtype=complex) if self.shape else 0j
        c = self.coef[hit[0]]
        return complex(c) if self.is_scalar else c.copy()

    def l1_norm(self) -> float:
        """Coefficient l1 norm, an upper bound for the sup norm (operator 2-norms for matrices)."""
        if len(self) == 0:
            return 0.0
        if self.is_scalar:
            return float(np.abs(self.coef).sum())
        if len(self.shape) == 1:
            return float(np.linalg.norm(self.coef, axis=1).sum())
        return float(sum(np.linalg.norm(c, 2) for c in self.coef))

    def entry(self, *idx) -> "TrigPoly":
        coef = self.coef[(slice(None),) + idx]
        return TrigPoly(self.basis, self.num, self.den, coef, coef.shape[1:])

    # -- evaluation ---------------------------------------------------------

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        """Evaluate at a scalar or array of times."""
        t_arr = np.asarray(t, dtype=float)
        if len(self) == 0:
            if t_arr.ndim == 0 and not self.shape:
                return 0j
            return np.zeros(t_arr.shape + self.shape, dtype=complex)
        phase = np.exp(1j * np.multiply.outer(t_arr, self.lam))
        val = np.tensordot(phase, self.coef, axes=(phase.ndim - 1, 0))
        if t_arr.ndim == 0 and not self.shape:
            return complex(val)
        return val

    def eval_with_error(self, t) -> tuple:
        """Evaluate and return a bound on the floating-point error.

        The bound accounts for rounding of each frequency (relative ``eps``
        times the number of basis terms), of the phase ``lam * t``, of the
        exponential, and of the final summation.
        """
        val = self.eval(t)
        t_abs = np.abs(np.asarray(t, dtype=float))
        if len(self) == 0:
            return val, np.zeros_like(t_abs)
        mags = np.abs(self.coef).reshape(len(self), -1).max(axis=1)
        lam_err = (len(self.basis) + 2) * _EPS * np.abs(self.lam)
        per_term = np.multiply.outer(t_abs, lam_err) + 4 * _EPS
        err = per_term @ mags + (len(self) + 2) * _EPS * mags.sum()
        return val, err

    # -- algebra ------------------------------------------------------------

    def _align(self, other: "TrigPoly"):
        if other.basis != self.basis:
            raise ValueError("polynomials over different bases")
        den = _lcm(self.den, other.den)
        a = self.num * (den // self.den)
        b = other.num * (den // other.den)
        _check_coords(a)
        _check_coords(b)
        return a, b, den

    def _coerce(self, other):
        if isinstance(other, TrigPoly):
            return other
        c = np.asarray(other, dtype=complex)
        return TrigPoly.constant(self.basis, c)

    def __add__(self, other) -> "TrigPoly":
        other = self._coerce(other)
        if other.shape != self.shape:
            if other.shape == () and len(other) <= 1 and not other.num.any():
                # scalar constant added to a matrix means multiple of the identity
                other = other * np.eye(self.shape[0])
            else:
                raise ShapeMismatch(f"cannot add shapes {self.shape} and {other.shape}")
        a, b, den = self._align(other)
        return TrigPoly(self.basis, np.vstack([a, b]), den, np.concatenate([self.coef, other.coef]),
                        self.shape)

    __radd__ = __add__

    def __neg__(self) -> "TrigPoly":
        return TrigPoly(self.basis, self.num, self.den, -self.coef, self.shape, _canonical=True)

    def __sub__(self, other) -> "TrigPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "TrigPoly":
        return (-self) + other

    def scale(self, c) -> "TrigPoly":
        c = np.asarray(c, dtype=complex)
        if c.shape == ():
            return TrigPoly(self.basis, self.num, self.den, self.coef * complex(c), self.shape)
        return self * TrigPoly.constant(self.basis, c)

    def __mul__(self, other) -> "TrigPoly":
        if not isinstance(other, TrigPoly):
            c = np.asarray(other, dtype=complex)
            if c.shape == ():
                return self.scale(c)
            other = TrigPoly.constant(self.basis, c)
        return _multiply(self, other)

    def __rmul__(self, other) -> "TrigPoly":
        if not isinstance(other, TrigPoly):
            c = np.asarray(other, dtype=complex)
            if c.shape == ():
                return self.scale(c)
            other = TrigPoly.constant(self.basis, c)
        return _multiply(other, self)

    __matmul__ = __mul__

    def __pow__(self, k: int) -> "TrigPoly":
        if k < 0:
            raise ValueError("negative powers are not trigonometric polynomials")
        out = TrigPoly.constant(self.basis, np.eye(self.shape[0]) if self.shape else 1.0)
        for _ in range(k):
            out = out * self
        return out

    def conjugate(self) -> "TrigPoly":
        """Pointwise complex conjugate: frequencies negate, coefficients conjugate."""
        return TrigPoly(self.basis, -self.num, self.den, np.conj(self.coef), self.shape)

    def real_part(self) -> "TrigPoly":
        return (self + self.conjugate()) * 0.5

    def imag_part(self) -> "TrigPoly":
        return (self - self.conjugate()) * (-0.5j)

    def shift(self, freq: Frequency) -> "TrigPoly":
        """Multiply by ``exp(i freq t)``."""
        return self * TrigPoly.exp(freq)

    def prune(self, threshold: float) -> tuple["TrigPoly", float]:
        """Drop terms with coefficient norm below ``threshold``; return the dropped l1 mass."""
        if len(self) == 0 or threshold <= 0:
            return self, 0.0
        mags = np.abs(self.coef).reshape(len(self), -1).max(axis=1)
        keep = mags >= threshold
        if keep.all():
            return self, 0.0
        dropped = self.coef[~keep]
        if self.is_scalar:
            mass = float(np.abs(dropped).sum())
        elif len(self.shape) == 1:
            mass = float(np.linalg.norm(dropped, axis=1).sum())
        else:
            mass = float(sum(np.linalg.norm(c, 2) for c in dropped))
        return TrigPoly(self.basis, self.num[keep], self.den, self.coef[keep], self.shape), mass

    def map_coefficients(self, fn) -> "TrigPoly":
        """Apply ``fn(lam_float, num_row, coef)`` termwise (frequencies unchanged)."""
        new = np.array([fn(l, row, c) for l, row, c in zip(self.lam, self.num, self.coef)],
                       dtype=complex).reshape(self.coef.shape) if len(self) else self.coef
        return TrigPoly(self.basis, self.num, self.den, new, self.shape)

    # -- comparison / display ----------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrigPoly):
            return NotImplemented
        if other.basis != self.basis or other.shape != self.shape:
            return False
        return (self.den == other.den and np.array_equal(self.num, other.num)
                and np.array_equal(self.coef, other.coef))

    __hash__ = None

    def allclose(self, other: "TrigPoly", atol: float = 1e-12) -> bool:
        """Same frequencies up to dropping terms below ``atol``, coefficients within ``atol``."""
        diff = self - other
        return diff.l1_norm() <= atol * max(1, len(diff))

    def __repr__(self) -> str:
        if len(self) == 0:
            return "TrigPoly(0)"
        parts = []
        for f, c in self.terms()[:12]:
            cs = f"{complex(c):.6g}" if self.is_scalar else "M"
            parts.append(f"{cs}*e^(i*{f}*t)" if not f.is_zero() else cs)
        more = " + ..." if len(self) > 12 else ""
        return "TrigPoly(" + " + ".join(parts) + more + ")"


def _product_shape(sa, sb):
    if sa == ():
        return sb
    if sb == ():
        return sa
    if len(sa) == 2 and sa[1] == sb[0]:
        return sa[:1] + sb[1:]
    raise ShapeMismatch(f"cannot multiply shapes {sa} and {sb}")


def _multiply(p: TrigPoly, q: TrigPoly) -> TrigPoly:
    """Frequency convolution: ``sum_jk p_j q_k exp(i (lam_j + mu_k) t)``."""
    shape = _product_shape(p.shape, q.shape)
    a, b, den = p._align(q)
    m = len(p.basis)
    if len(p) == 0 or len(q) == 0:
        return TrigPoly.zero(p.basis, shape)
    if p.is_scalar and q.is_scalar:
        out = _dense_convolve(a, p.coef, b, q.coef, m)
        if out is not None:
            num, coef = out
            return TrigPoly(p.basis, num, den, coef, shape)
    num = (a[:, None, :] + b[None, :, :]).reshape(-1, m)
    _check_coords(num)
    if p.is_scalar:
        coef = p.coef.reshape((len(p), 1) + (1,) * len(q.shape)) * q.coef[None]
    elif q.is_scalar:
        coef = p.coef[:, None] * q.coef.reshape((1, len(q)) + (1,) * len(p.shape))
    elif len(q.shape) == 1:
        coef = np.einsum("aij,bj->abi", p.coef, q.coef)
    else:
        coef = np.matmul(p.coef[:, None], q.coef[None, :])
    coef = coef.reshape((num.shape[0],) + shape)
    return TrigPoly(p.basis, num, den, coef, shape)


def _dense_convolve(a, ca, b, cb, m):
    """Convolve on a dense coordinate box when it is small; None otherwise.

    Small boxes use direct summation. Larger ones use FFTs; entries outside the
    structural support (Minkowski sum of the two supports) are zeroed and
    entries at the FFT rounding level are dropped.
    """
    lo_a, hi_a = a.min(axis=0), a.max(axis=0)
    lo_b, hi_b = b.min(axis=0), b.max(axis=0)
    ext_a = hi_a - lo_a + 1
    ext_b = hi_b - lo_b + 1
    ext = ext_a + ext_b - 1
    cells = float(np.prod(ext.astype(float)))
    if cells > _DENSE_LIMIT or len(a) * len(b) < 64:
        return None
    da = np.zeros(tuple(ext_a), dtype=complex)
    db = np.zeros(tuple(ext_b), dtype=complex)
    np.add.at(da, tuple((a - lo_a).T), ca)
    np.add.at(db, tuple((b - lo_b).T), cb)
    if len(a) * len(b) <= 4096:
        dc = signal.convolve(da, db, mode="full", method="direct")
    else:
        dc = signal.fftconvolve(da, db, mode="full")
        support = signal.fftconvolve((da != 0).astype(float), (db != 0).astype(float), mode="full") > 0.5
        noise = 16 * _EPS * math.log2(cells + 2) * np.abs(ca).sum() * np.abs(cb).sum()
        dc[~support | (np.abs(dc) <= noise)] = 0
    idx = np.nonzero(dc)
    num = np.stack(idx, axis=1).astype(np.int64) + lo_a + lo_b
    return num, dc[idx]


def algebra(p: TrigPoly, q: TrigPoly | None, op: str, c=None) -> TrigPoly:
    """Dispatch ``add``, ``mul``, ``scale``, ``conjugate`` or ``real_part``."""
    if op == "add":
        return p + q
    if op == "mul":
        return p * q
    if op == "scale":
        return p.scale(c)
    if op == "conjugate":
        return p.conjugate()
    if op == "real_part":
        return p.real_part()
    raise ValueError(f"unknown operation {op!r}")


def bohr_mean(p: TrigPoly, lam: Frequency):
    """Mean of ``exp(-i lam t) p(t)`` over the real line, read off exactly."""
    return p.coefficient(lam)


def bohr_spectrum(p: TrigPoly) -> frozenset[Frequency]:
    return frozenset(p.frequencies())


@dataclass(frozen=True)
class APLambdaCertificate:
    poly: TrigPoly
    module: SemiModule
    witnesses: dict  # Frequency -> Membership

    def __post_init__(self):
        missing = [f for f in self.poly.frequencies() if f not in self.witnesses]
        if missing:
            raise ValueError(f"uncertified frequencies {missing}")


def certify_in_lambda(p: TrigPoly, lam_module: SemiModule, bound: int) -> APLambdaCertificate:
    """Certify that every frequency of ``p`` lies in the semi-module, or raise CertificationFailed."""
    witnesses: dict[Frequency, Membership] = {}
    bad, exact = [], []
    for f in p.frequencies():
        m = lam_module.member(f, bound)
        if m:
            witnesses[f] = m
        else:
            bad.append(f)
            exact.append(m.exact)
    if bad:
        raise CertificationFailed(bad, bound, exact)
    return APLambdaCertificate(p, lam_module, witnesses)
