"""Exact real frequencies and the semi-modules they generate.

A frequency is stored as a rational coordinate vector over a declared basis of
real constants (rationals, quadratic surds and rational multiples of pi).
Equality is decided on coordinates; signs and comparisons are decided by
interval evaluation at increasing precision, which always terminates because a
nonzero coordinate vector has a nonzero value over an independent basis.
"""

from __future__ import annotations

import functools
import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from mpmath.ctx_iv import MPIntervalContext

__all__ = [
    "BasisDependenceError",
    "RealConstant",
    "FrequencyBasis",
    "Frequency",
    "Membership",
    "ModuleCheck",
    "Discreteness",
    "SemiModule",
    "sm_truncate",
    "sm_member",
    "is_module",
    "discreteness",
    "DEFAULT_SEARCH_BOUND",
    "DEFAULT_EPS",
]

DEFAULT_SEARCH_BOUND = 10_000
DEFAULT_EPS = 1e-2

_MAX_DPS = 20_000


class BasisDependenceError(ValueError):
    """Two basis constants are rational multiples of each other."""


def _interval_ctx(dps: int) -> MPIntervalContext:
    # a private context per call keeps precision changes thread-local
    ctx = MPIntervalContext()
    ctx.dps = dps
    return ctx


def _squarefree_part(d: int) -> tuple[int, int]:
    """Return (s, r) with d = s**2 * r and r square-free."""
    s, r = 1, d
    f = 2
    while f * f <= r:
        while r % (f * f) == 0:
            r //= f * f
            s *= f
        f += 1
    return s, r


_CONST_RE = re.compile(
    r"^\s*(?:(?P<scale>[+-]?\d+(?:/\d+)?)\s*\*?\s*)?"
    r"(?P<atom>pi|sqrt\(\s*(?P<rad>\d+)\s*\)|sqrt(?P<rad2>\d+))?"
    r"\s*(?:/\s*(?P<div>\d+))?\s*$"
)


@dataclass(frozen=True)
class RealConstant:
    """A real number of one of three exactly-representable kinds.

    ``kind`` is ``"rational"`` (value ``scale``), ``"surd"`` (value
    ``scale * sqrt(radicand)`` with a square-free radicand > 1) or ``"pi"``
    (value ``scale * pi``).
    """

    kind: str
    scale: Fraction
    radicand: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scale", Fraction(self.scale))
        if self.kind not in ("rational", "surd", "pi"):
            raise ValueError(f"unknown constant kind {self.kind!r}")
        if self.kind == "surd":
            if self.radicand < 1:
                raise ValueError("radicand must be positive")
            s, r = _squarefree_part(self.radicand)
            scale = self.scale * s
            if r == 1:
                object.__setattr__(self, "kind", "rational")
            object.__setattr__(self, "scale", scale)
            object.__setattr__(self, "radicand", r)
        elif self.radicand != 1:
            raise ValueError("radicand only applies to surds")

    @classmethod
    def rational(cls, value) -> "RealConstant":
        return cls("rational", Fraction(value))

    @classmethod
    def sqrt(cls, d: int, scale=1) -> "RealConstant":
        return cls("surd", Fraction(scale), d)

    @classmethod
    def pi(cls, scale=1) -> "RealConstant":
        return cls("pi", Fraction(scale))

    @classmethod
    def parse(cls, text: str) -> "RealConstant":
        """Parse ``"3/2"``, ``"sqrt(2)"``, ``"2*sqrt(3)"``, ``"pi"``, ``"pi/2"`` ..."""
        m = _CONST_RE.match(str(text).strip().lower())
        if m is None or (m.group("scale") is None and m.group("atom") is None):
            raise ValueError(f"cannot parse real constant {text!r}")
        scale = Fraction(m.group("scale")) if m.group("scale") else Fraction(1)
        if m.group("div"):
            scale /= int(m.group("div"))
        atom = m.group("atom")
        if atom is None:
            return cls.rational(scale)
        if atom == "pi":
            return cls.pi(scale)
        return cls.sqrt(int(m.group("rad") or m.group("rad2")), scale)

    @property
    def class_key(self) -> tuple[str, int]:
        """Constants sharing a key are rational multiples of each other."""
        if self.kind == "pi":
            return ("pi", 1)
        return ("alg", self.radicand)

    def is_zero(self) -> bool:
        return self.scale == 0

    def interval(self, ctx: MPIntervalContext):
        s = ctx.mpf(self.scale.numerator) / self.scale.denominator
        if self.kind == "rational":
            return s
        if self.kind == "surd":
            return s * ctx.sqrt(self.radicand)
        return s * ctx.pi

    def __float__(self) -> float:
        if self.kind == "rational":
            return float(self.scale)
        if self.kind == "surd":
            return float(self.scale) * math.sqrt(self.radicand)
        return float(self.scale) * math.pi

    def __str__(self) -> str:
        s = self.scale
        if self.kind == "rational":
            return str(s)
        atom = "pi" if self.kind == "pi" else f"sqrt({self.radicand})"
        if s == 1:
            return atom
        if s.denominator != 1 and s.numerator == 1:
            return f"{atom}/{s.denominator}"
        return f"{s}*{atom}"


@dataclass(frozen=True)
class FrequencyBasis:
    """Ordered list of rationally independent real constants.

    Independence is checked pairwise and exactly: two rationals, two surds with
    the same radicand, or two pi-multiples are dependent. Square roots of
    distinct square-free integers are independent over Q, so for algebraic
    entries the pairwise check is complete; pi is assumed independent of surds.
    """

    constants: tuple[RealConstant, ...]
    dps: int = 30

    def __post_init__(self):
        consts = tuple(c if isinstance(c, RealConstant) else RealConstant.parse(c)
                       for c in self.constants)
        object.__setattr__(self, "constants", consts)
        if not consts:
            raise ValueError("a frequency basis needs at least one constant")
        seen = {}
        for i, c in enumerate(consts):
            if c.is_zero():
                raise BasisDependenceError(f"basis entry {i} is zero")
            if c.class_key in seen:
                raise BasisDependenceError(
                    f"basis entries {seen[c.class_key]} and {i} ({consts[seen[c.class_key]]}, {c}) "
                    "are rational multiples of each other")
            seen[c.class_key] = i

    @classmethod
    def of(cls, *items) -> "FrequencyBasis":
        return cls(tuple(items))

    def __len__(self) -> int:
        return len(self.constants)

    @functools.cached_property
    def values(self) -> np.ndarray:
        return np.array([float(c) for c in self.constants], dtype=float)

    def freq(self, *coords) -> "Frequency":
        return Frequency(self, coords)

    def zero(self) -> "Frequency":
        return Frequency(self, (0,) * len(self))

    def unit(self, j: int) -> "Frequency":
        return Frequency(self, tuple(1 if i == j else 0 for i in range(len(self))))

    def __str__(self) -> str:
        return "[" + ", ".join(map(str, self.constants)) + "]"


def _norm_coord(x) -> Fraction | int:
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else x


@functools.total_ordering
@dataclass(frozen=True)
class Frequency:
    """Exact real number ``sum(coords[j] * basis[j])``."""

    basis: FrequencyBasis
    coords: tuple

    def __post_init__(self):
        coords = tuple(self.coords)
        if len(coords) != len(self.basis):
            raise ValueError(f"expected {len(self.basis)} coordinates, got {len(coords)}")
        for c in coords:
            if isinstance(c, float):
                raise TypeError("frequency coordinates must be exact rationals, not floats")
        object.__setattr__(self, "coords", tuple(_norm_coord(c) for c in coords))

    def __hash__(self):
        return hash(self.coords)

    def __eq__(self, other):
        if not isinstance(other, Frequency):
            return NotImplemented
        return self.coords == other.coords and self.basis == other.basis

    def _check(self, other: "Frequency"):
        if self.basis != other.basis:
            raise ValueError("frequencies live over different bases")

    def __add__(self, other: "Frequency") -> "Frequency":
        self._check(other)
        return Frequency(self.basis, tuple(a + b for a, b in zip(self.coords, other.coords)))

    def __neg__(self) -> "Frequency":
        return Frequency(self.basis, tuple(-a for a in self.coords))

    def __sub__(self, other: "Frequency") -> "Frequency":
        return self + (-other)

    def __mul__(self, k) -> "Frequency":
        if isinstance(k, float):
            raise TypeError("frequencies scale by exact rationals only")
        k = Fraction(k)
        return Frequency(self.basis, tuple(a * k for a in self.coords))

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return not any(self.coords)

    def interval(self, dps: int | None = None):
        """Certified enclosure of the value as an mpmath interval."""
        ctx = _interval_ctx(dps or self.basis.dps)
        total = ctx.mpf(0)
        for r, c in zip(self.coords, self.basis.constants):
            if r:
                r = Fraction(r)
                total += ctx.mpf(r.numerator) / r.denominator * c.interval(ctx)
        return total

    def certified(self, dps: int | None = None) -> tuple[float, float]:
        """Return ``(value, err)`` with ``|true - value| <= err``."""
        iv = self.interval(dps)
        mid = float((iv.a + iv.b) / 2)
        err = float(max(abs(iv.b - mid), abs(iv.a - mid))) + abs(mid) * 2.0 ** -52
        return mid, err

    def sign(self) -> int:
        if self.is_zero():
            return 0
        dps = max(self.basis.dps, 20)
        while dps <= _MAX_DPS:
            iv = self.interval(dps)
            if iv.a > 0:
                return 1
            if iv.b < 0:
                return -1
            dps *= 2
        raise ArithmeticError(f"could not decide sign of {self} (basis may be dependent)")

    def __lt__(self, other: "Frequency") -> bool:
        self._check(other)
        return (self - other).sign() < 0

    def __float__(self) -> float:
        return float(sum(float(r) * float(c) for r, c in zip(self.coords, self.basis.constants)))

    def ratio(self, other: "Frequency") -> Fraction | None:
        """Exact ``self / other`` if it is rational, else None."""
        self._check(other)
        if other.is_zero():
            raise ZeroDivisionError("ratio with zero frequency")
        q = None
        for a, b in zip(self.coords, other.coords):
            if b == 0:
                if a != 0:
                    return None
                continue
            r = Fraction(a) / Fraction(b)
            if q is None:
                q = r
            elif r != q:
                return None
        return q

    def to_json(self) -> dict:
        return {"coords": [[Fraction(c).numerator, Fraction(c).denominator] for c in self.coords]}

    @classmethod
    def from_json(cls, basis: FrequencyBasis, obj) -> "Frequency":
        coords = obj["coords"] if isinstance(obj, dict) else obj
        return cls(basis, tuple(_parse_coord(c) for c in coords))

    def __str__(self) -> str:
        parts = []
        for r, c in zip(self.coords, self.basis.constants):
            if r == 0:
                continue
            if c.kind == "rational":
                parts.append(str(Fraction(r) * c.scale))
            else:
                k = Fraction(r) * c.scale
                atom = "pi" if c.kind == "pi" else f"sqrt({c.radicand})"
                parts.append(atom if k == 1 else f"-{atom}" if k == -1 else f"{k}*{atom}")
        if not parts:
            return "0"
        return "+".join(parts).replace("+-", "-")

    __repr__ = __str__


def _parse_coord(c):
    if isinstance(c, bool):
        raise TypeError("boolean is not a coordinate")
    if isinstance(c, int):
        return c
    if isinstance(c, str):
        return Fraction(c)
    if isinstance(c, (list, tuple)) and len(c) == 2 and all(isinstance(x, int) for x in c):
        if c[1] == 0:
            raise ZeroDivisionError("zero denominator in coordinate")
        return Fraction(c[0], c[1])
    raise TypeError(f"non-rational coordinate {c!r}")


# ---------------------------------------------------------------------------
# semi-module machinery


@dataclass(frozen=True)
class Membership:
    member: bool
    bound: int
    witness: tuple[int, ...] | None = None
    # True when non-membership is exact (sign obstruction), not just bound exhaustion
    exact: bool = False

    def __bool__(self):
        return self.member


@dataclass(frozen=True)
class ModuleCheck:
    status: str  # "Module" | "NotModuleWithin" | "SemiModuleOnly"
    bound: int
    witnesses: dict = field(default_factory=dict)
    certificate: str = ""


@dataclass(frozen=True)
class Discreteness:
    status: str  # "Discrete" | "NonDiscrete" | "Unknown"
    reason: str
    witness: Frequency | None = None
    witness_coeffs: tuple[int, ...] | None = None
    witness_value: float | None = None
    witness_error: float | None = None


def _nonzero(gens: Sequence[Frequency]) -> list[Frequency]:
    return [g for g in gens if not g.is_zero()]


def sm_truncate(gens: Sequence[Frequency], coeff_bound: int, basis: FrequencyBasis | None = None
                ) -> frozenset[Frequency]:
    """All combinations ``sum n_j g_j`` with ``0 <= n_j <= coeff_bound``."""
    if coeff_bound < 0:
        raise ValueError("coeff_bound must be non-negative")
    gens = list(gens)
    if not gens:
        if basis is None:
            raise ValueError("need a basis to represent 0 when there are no generators")
        return frozenset({basis.zero()})
    out = {gens[0].basis.zero()}
    for g in gens:
        multiples = [g * n for n in range(coeff_bound + 1)]
        out = {s + m for s in out for m in multiples}
    return frozenset(out)


def _solve_rational(cols: list[tuple], rhs: tuple) -> list[Fraction] | None:
    """Unique exact solution of sum x_j cols[j] = rhs, assuming independent columns."""
    m, k = len(rhs), len(cols)
    rows = [[Fraction(cols[j][i]) for j in range(k)] + [Fraction(rhs[i])] for i in range(m)]
    piv_row = 0
    pivots = []
    for j in range(k):
        p = next((r for r in range(piv_row, m) if rows[r][j] != 0), None)
        if p is None:
            continue
        rows[piv_row], rows[p] = rows[p], rows[piv_row]
        pv = rows[piv_row][j]
        rows[piv_row] = [x / pv for x in rows[piv_row]]
        for r in range(m):
            if r != piv_row and rows[r][j] != 0:
                f = rows[r][j]
                rows[r] = [x - f * y for x, y in zip(rows[r], rows[piv_row])]
        pivots.append(j)
        piv_row += 1
    if any(all(x == 0 for x in row[:k]) and row[k] != 0 for row in rows):
        return None
    sol = [Fraction(0)] * k
    for r, j in enumerate(pivots):
        sol[j] = rows[r][k]
    return sol


def _rank(vectors: list[tuple]) -> int:
    if not vectors:
        return 0
    rows = [[Fraction(x) for x in v] for v in vectors]
    rank, ncol = 0, len(rows[0])
    for j in range(ncol):
        p = next((r for r in range(rank, len(rows)) if rows[r][j] != 0), None)
        if p is None:
            continue
        rows[rank], rows[p] = rows[p], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][j] != 0:
                f = rows[r][j] / rows[rank][j]
                rows[r] = [x - f * y for x, y in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def sm_member(lam: Frequency, gens: Sequence[Frequency], bound: int) -> Membership:
    """Decide whether ``lam = sum n_j gens[j]`` with integers ``0 <= n_j <= bound``.

    Non-membership is only certified up to ``bound`` unless a sign obstruction
    makes it exact (``exact=True``).
    """
    if bound < 0:
        raise ValueError("bound must be non-negative")
    gens = list(gens)
    if lam.is_zero():
        return Membership(True, bound, (0,) * len(gens))
    nz = [i for i, g in enumerate(gens) if not g.is_zero()]
    if not nz:
        return Membership(False, bound, exact=True)
    signs = {gens[i].sign() for i in nz}
    if len(signs) == 1 and lam.sign() != signs.pop():
        return Membership(False, bound, exact=True)

    cols = [gens[i].coords for i in nz]
    if _rank(cols) == len(cols):
        sol = _solve_rational(cols, lam.coords)
        if sol is None or any(x.denominator != 1 or x < 0 or x > bound for x in sol):
            exact = sol is None or any(x.denominator != 1 or x < 0 for x in sol)
            return Membership(False, bound, exact=exact)
        witness = [0] * len(gens)
        for i, x in zip(nz, sol):
            witness[i] = int(x)
        return Membership(True, bound, tuple(witness))

    # dependent generators: layered exploration, one generator per layer, with
    # partial sums deduplicated and pruned to those that can still reach lam
    hit = _layered_search(lam, [gens[i] for i in nz], bound)
    if hit is None:
        return Membership(False, bound)
    witness = [0] * len(gens)
    for i, n in zip(nz, hit):
        witness[i] = n
    return Membership(True, bound, tuple(witness))


def _layered_search(lam: Frequency, gens: list[Frequency], bound: int) -> list[int] | None:
    den = 1
    for v in [lam, *gens]:
        for c in v.coords:
            den = den * Fraction(c).denominator // math.gcd(den, Fraction(c).denominator)
    target = np.array([int(Fraction(c) * den) for c in lam.coords], dtype=np.int64)
    rows = [np.array([int(Fraction(c) * den) for c in g.coords], dtype=np.int64) for g in gens]
    k, m = len(rows), len(target)
    # reach[j]: coordinate box the generators j.. can still add
    lo = np.zeros((k + 1, m), dtype=np.int64)
    hi = np.zeros((k + 1, m), dtype=np.int64)
    for j in range(k - 1, -1, -1):
        lo[j] = lo[j + 1] + bound * np.minimum(rows[j], 0)
        hi[j] = hi[j + 1] + bound * np.maximum(rows[j], 0)
    steps = np.arange(bound + 1, dtype=np.int64)
    states = np.zeros((1, m), dtype=np.int64)
    parents, counts = [], []
    for j, g in enumerate(rows):
        cand = (states[:, None, :] + steps[None, :, None] * g[None, None, :]).reshape(-1, m)
        par = np.repeat(np.arange(len(states)), bound + 1)
        nn = np.tile(steps, len(states))
        gap = target - cand
        ok = np.all((gap >= lo[j + 1]) & (gap <= hi[j + 1]), axis=1)
        cand, par, nn = cand[ok], par[ok], nn[ok]
        if len(cand) == 0:
            return None
        states, first = np.unique(cand, axis=0, return_index=True)
        parents.append(par[first])
        counts.append(nn[first])
    idx = np.flatnonzero(np.all(states == target, axis=1))
    if idx.size == 0:
        return None
    i = int(idx[0])
    out = [0] * k
    for j in range(k - 1, -1, -1):
        out[j] = int(counts[j][i])
        i = int(parents[j][i])
    return out


def is_module(gens: Sequence[Frequency], bound: int = 64) -> ModuleCheck:
    """Check whether ``sm(gens)`` is closed under negation (hence a group)."""
    gens = list(gens)
    nz = _nonzero(gens)
    if nz:
        signs = {g.sign() for g in nz}
        if len(signs) == 1:
            side = "positive" if signs.pop() > 0 else "negative"
            return ModuleCheck("SemiModuleOnly", bound,
                               certificate=f"all nonzero generators are {side}")
    witnesses = {}
    for g in nz:
        m = sm_member(-g, gens, bound)
        if not m:
            return ModuleCheck("NotModuleWithin", bound, witnesses)
        witnesses[str(g)] = m.witness
    return ModuleCheck("Module", bound, witnesses)


def _search_pair_witness(p: Frequency, q: Frequency, bound: int, eps: float):
    """Small ``n*p + m*q`` (p > 0 > q, irrational ratio) with 0 <= n, m <= bound."""
    pv, qv = float(p), -float(q)
    r = pv / qv
    best = None
    ns = np.arange(1, bound + 1, dtype=float)
    # walk along n, rounding m, and along m, rounding n
    for n_arr, m_arr in ((ns, np.rint(ns * r)), (np.rint(ns / r), ns)):
        ok = (m_arr >= 0) & (m_arr <= bound) & (n_arr >= 0) & (n_arr <= bound) & ((n_arr + m_arr) > 0)
        vals = np.abs(n_arr * pv - m_arr * qv)
        hits = np.flatnonzero(ok & (vals < eps))
        if hits.size:
            j = hits[0]
            cand = (int(n_arr[j]), int(m_arr[j]))
            if best is None or max(cand) < max(best):
                best = cand
    return best


def discreteness(gens: Sequence[Frequency], search_bound: int = DEFAULT_SEARCH_BOUND,
                 eps: float = DEFAULT_EPS) -> Discreteness:
    """Classify whether ``sm(gens)`` accumulates at zero.

    The test is "no nonzero element within ``eps`` of zero"; the rule-based
    branches settle it for every finite generator set, and the witness for the
    non-discrete branch is an explicit element with certified ``|w| < eps``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    gens = list(gens)
    nz = _nonzero(gens)
    if not nz:
        return Discreteness("Discrete", "semi-module is {0}")
    signs = [g.sign() for g in nz]
    if len(set(signs)) == 1:
        return Discreteness("Discrete", "all nonzero generators share one sign")
    ref = nz[0]
    if all(g.ratio(ref) is not None for g in nz):
        return Discreteness("Discrete", f"all generators lie on the rational ray of {ref}")

    pos = [g for g, s in zip(nz, signs) if s > 0]
    neg = [g for g, s in zip(nz, signs) if s < 0]
    pairs = [(a, b) for a in pos for b in neg if a.ratio(b) is None]
    for p, q in pairs:
        hit = _search_pair_witness(p, q, search_bound, eps)
        if hit is None:
            continue
        n, m = hit
        w = p * n + q * m
        val, err = w.certified(dps=50)
        if w.is_zero() or abs(val) + err >= eps:
            continue
        coeffs = [0] * len(gens)
        coeffs[gens.index(p)] = n
        coeffs[gens.index(q)] = m
        return Discreteness("NonDiscrete", f"opposite-sign generators {p}, {q} with irrational ratio",
                            w, tuple(coeffs), val, err)
    if pairs:
        p, q = pairs[0]
        return Discreteness("NonDiscrete",
                            f"opposite-sign generators {p}, {q} with irrational ratio "
                            f"(no witness below {eps} within bound {search_bound})")

    # fallback enumeration; the rules above cover every finite generator set
    small = min(search_bound, 12)
    for coeffs in itertools.product(range(small + 1), repeat=len(gens)):
        w = gens[0].basis.zero()
        for n, g in zip(coeffs, gens):
            w = w + g * n
        if not w.is_zero() and abs(float(w)) < eps:
            val, err = w.certified(dps=50)
            if abs(val) + err < eps:
                return Discreteness("NonDiscrete", "enumeration", w, coeffs, val, err)
    return Discreteness("Unknown", f"no rule applied and no witness within bound {small}")


@dataclass(frozen=True)
class SemiModule:
    """The semi-module ``sm(generators)`` with cached truncations."""

    generators: tuple[Frequency, ...]
    basis: FrequencyBasis
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    @classmethod
    def generated_by(cls, gens: Iterable[Frequency], basis: FrequencyBasis | None = None) -> "SemiModule":
        gens = tuple(gens)
        if basis is None:
            if not gens:
                raise ValueError("need a basis for an empty generator set")
            basis = gens[0].basis
        # deterministic order: by numeric value, ties impossible for distinct frequencies
        uniq = sorted(set(gens), key=lambda g: (float(g), g.coords))
        return cls(tuple(uniq), basis)

    def truncate(self, bound: int) -> frozenset[Frequency]:
        if bound not in self._cache:
            self._cache[bound] = sm_truncate(self.generators, bound, self.basis)
        return self._cache[bound]

    def member(self, lam: Frequency, bound: int) -> Membership:
        return sm_member(lam, self.generators, bound)

    def is_module(self, bound: int = 64) -> ModuleCheck:
        return is_module(self.generators, bound)

    def discreteness(self, search_bound: int = DEFAULT_SEARCH_BOUND, eps: float = DEFAULT_EPS) -> Discreteness:
        return discreteness(self.generators, search_bound, eps)

    def __contains__(self, lam: Frequency) -> bool:
        return bool(self.member(lam, 64))
