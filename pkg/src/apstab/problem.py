"""Problem files: JSON description of ``x' = (A0 + A(t)) x + f(t)`` plus analysis parameters.

Layout::

    {
      "basis": ["1", "sqrt(2)"],
      "dimension": 1,
      "A0": [[-2.0]],
      "A": [{"freq": {"coords": [[1, 1], [0, 1]]}, "coeff": 1.0, "kind": "cos"}],
      "forcing": [],
      "analysis": {"alphas": [1.0, 0.1, 0.01]}
    }

Coordinates are integers, ``"p/q"`` strings or ``[p, q]`` pairs; floats are
rejected. Coefficients are numbers or ``{"re": .., "im": ..}`` objects, given
as n x n nested lists for ``A``/``A0`` and length-n lists for the forcing (a
bare number is accepted when n = 1). ``kind`` is ``exp`` (default), ``cos`` or
``sin``; the sugar is kept in the file and expanded when polynomials are built.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .freqlat import BasisDependenceError, Frequency, FrequencyBasis, RealConstant
from .trigpoly import TrigPoly

__all__ = ["ProblemError", "Term", "ProblemFile", "parse", "serialize", "digest"]

_TOP_KEYS = {"basis", "dimension", "A0", "A", "forcing", "analysis"}
_KINDS = ("exp", "cos", "sin")


class ProblemError(ValueError):
    """Schema violation, with the JSON path of the offending value."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Term:
    freq: Frequency
    coeff: np.ndarray
    kind: str = "exp"

    def poly(self) -> TrigPoly:
        return getattr(TrigPoly, self.kind)(self.freq, self.coeff)


@dataclass
class ProblemFile:
    basis: FrequencyBasis
    dimension: int
    A0: np.ndarray | None = None
    A: list[Term] = field(default_factory=list)
    forcing: list[Term] = field(default_factory=list)
    analysis: dict = field(default_factory=dict)

    def A_poly(self) -> TrigPoly:
        """``A(t)`` as an n x n polynomial (zero when there are no terms)."""
        out = TrigPoly.zero(self.basis, (self.dimension, self.dimension))
        for t in self.A:
            out = out + t.poly()
        return out

    def coefficient_poly(self) -> TrigPoly:
        """``A0 + A(t)`` as one polynomial."""
        p = self.A_poly()
        if self.A0 is not None:
            p = p + TrigPoly.constant(self.basis, self.A0)
        return p

    def scalar_poly(self) -> TrigPoly:
        if self.dimension != 1:
            raise ValueError("not a scalar problem")
        p = self.coefficient_poly()
        return TrigPoly(p.basis, p.num, p.den, p.coef.reshape(-1), (), _canonical=True)

    def forcing_poly(self) -> TrigPoly | None:
        if not self.forcing:
            return None
        out = TrigPoly.zero(self.basis, (self.dimension,))
        for t in self.forcing:
            out = out + t.poly()
        return out

    def freq(self, obj, path: str = "frequency") -> Frequency:
        return _parse_freq(self.basis, obj, path)


def _complex(x, path: str) -> complex:
    if isinstance(x, bool):
        raise ProblemError(path, "boolean is not a number")
    if isinstance(x, (int, float)):
        z = complex(x)
    elif isinstance(x, dict) and set(x) <= {"re", "im"}:
        re, im = x.get("re", 0), x.get("im", 0)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (re, im)):
            raise ProblemError(path, "re/im must be numbers")
        z = complex(re, im)
    else:
        raise ProblemError(path, f"expected a number or {{re, im}} object, got {x!r}")
    if not np.isfinite(z.real) or not np.isfinite(z.imag):
        raise ProblemError(path, "non-finite number")
    return z


def _array(x, shape: tuple, path: str) -> np.ndarray:
    if not shape:
        return np.asarray(_complex(x, path))
    if shape and all(s == 1 for s in shape) and not isinstance(x, list):
        return np.full(shape, _complex(x, path))
    if not isinstance(x, list) or len(x) != shape[0]:
        raise ProblemError(path, f"expected a list of length {shape[0]}")
    return np.stack([_array(v, shape[1:], f"{path}[{i}]") for i, v in enumerate(x)])


def _coord(c, path: str):
    if isinstance(c, bool):
        raise ProblemError(path, "boolean is not a coordinate")
    if isinstance(c, int):
        return c
    if isinstance(c, float):
        raise ProblemError(path, f"float coordinate {c!r} not allowed; use an integer, 'p/q' or [p, q]")
    if isinstance(c, str):
        try:
            return Fraction(c)
        except (ValueError, ZeroDivisionError):
            raise ProblemError(path, f"cannot read rational {c!r}") from None
    if isinstance(c, list) and len(c) == 2 and all(isinstance(v, int) and not isinstance(v, bool)
                                                   for v in c):
        if c[1] == 0:
            raise ProblemError(path, "zero denominator")
        return Fraction(c[0], c[1])
    raise ProblemError(path, f"non-rational coordinate {c!r}")


def _parse_freq(basis: FrequencyBasis, obj, path: str) -> Frequency:
    coords = obj.get("coords") if isinstance(obj, dict) else obj
    if isinstance(obj, dict) and set(obj) != {"coords"}:
        raise ProblemError(path, "frequency object takes only 'coords'")
    if not isinstance(coords, list):
        raise ProblemError(path, "coordinates must be a list")
    if len(coords) != len(basis):
        raise ProblemError(path, f"{len(coords)} coordinates for a basis of length {len(basis)}")
    return Frequency(basis, tuple(_coord(c, f"{path}.coords[{i}]") for i, c in enumerate(coords)))


def _terms(items, basis, shape, path) -> list[Term]:
    if items is None:
        return []
    if not isinstance(items, list):
        raise ProblemError(path, "expected a list of terms")
    out = []
    for i, it in enumerate(items):
        p = f"{path}[{i}]"
        if not isinstance(it, dict):
            raise ProblemError(p, "term must be an object")
        extra = set(it) - {"freq", "coeff", "kind"}
        if extra:
            raise ProblemError(p, f"unknown keys {sorted(extra)}")
        if "freq" not in it or "coeff" not in it:
            raise ProblemError(p, "term needs 'freq' and 'coeff'")
        kind = it.get("kind", "exp")
        if kind not in _KINDS:
            raise ProblemError(f"{p}.kind", f"unknown kind {kind!r}")
        out.append(Term(_parse_freq(basis, it["freq"], f"{p}.freq"),
                        _array(it["coeff"], shape, f"{p}.coeff"), kind))
    return out


def parse(data: bytes | str) -> ProblemFile:
    """Validate a problem file; raises ProblemError with a JSON path on failure."""
    try:
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        obj = json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProblemError("$", f"not UTF-8 JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ProblemError("$", "top level must be an object")
    extra = set(obj) - _TOP_KEYS
    if extra:
        raise ProblemError("$", f"unknown keys {sorted(extra)}")
    raw_basis = obj.get("basis")
    if not isinstance(raw_basis, list) or not raw_basis:
        raise ProblemError("$.basis", "expected a non-empty list of constants")
    consts = []
    for i, c in enumerate(raw_basis):
        if isinstance(c, bool) or not isinstance(c, (str, int)):
            raise ProblemError(f"$.basis[{i}]", f"constant must be a string or integer, got {c!r}")
        try:
            consts.append(RealConstant.parse(str(c)))
        except ValueError as exc:
            raise ProblemError(f"$.basis[{i}]", str(exc)) from None
    try:
        basis = FrequencyBasis(tuple(consts))
    except BasisDependenceError as exc:
        raise ProblemError("$.basis", f"basis dependence: {exc}") from None
    n = obj.get("dimension", 1)
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ProblemError("$.dimension", "must be a positive integer")
    A0 = None if obj.get("A0") is None else _array(obj["A0"], (n, n), "$.A0")
    A = _terms(obj.get("A"), basis, (n, n), "$.A")
    forcing = _terms(obj.get("forcing"), basis, (n,), "$.forcing")
    analysis = obj.get("analysis", {})
    if not isinstance(analysis, dict):
        raise ProblemError("$.analysis", "must be an object")
    _check_analysis(analysis)
    return ProblemFile(basis, n, A0, A, forcing, analysis)


def _check_analysis(a: dict):
    for key in ("tol", "horizon", "grid_step", "eps", "alpha"):
        if key in a and (isinstance(a[key], bool) or not isinstance(a[key], (int, float))
                         or not a[key] > 0):
            raise ProblemError(f"$.analysis.{key}", "must be a positive number")
    for key in ("bound", "search_bound", "lattice_bound", "samples"):
        if key in a and (isinstance(a[key], bool) or not isinstance(a[key], int) or a[key] < 0):
            raise ProblemError(f"$.analysis.{key}", "must be a non-negative integer")
    if "alphas" in a:
        al = a["alphas"]
        if not isinstance(al, list) or not al or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in al):
            raise ProblemError("$.analysis.alphas", "must be a non-empty list of positive numbers")


def _num_json(z: complex):
    z = complex(z)
    if z.imag == 0:
        return float(z.real)
    return {"im": float(z.imag), "re": float(z.real)}


def _array_json(a: np.ndarray):
    a = np.asarray(a)
    if a.ndim == 0:
        return _num_json(a)
    return [_array_json(v) for v in a]


def _term_json(t: Term, n: int) -> dict:
    coeff = t.coeff
    if n == 1:
        coeff = coeff.reshape(())
    return {"coeff": _array_json(coeff), "freq": t.freq.to_json(), "kind": t.kind}


def to_json(pf: ProblemFile) -> dict:
    out = {"basis": [str(c) for c in pf.basis.constants], "dimension": pf.dimension,
           "A": [_term_json(t, pf.dimension) for t in pf.A],
           "forcing": [_term_json(t, pf.dimension) for t in pf.forcing],
           "analysis": pf.analysis}
    if pf.A0 is not None:
        out["A0"] = _array_json(pf.A0)
    return out


def serialize(pf: ProblemFile) -> bytes:
    """Canonical bytes: sorted keys, two-space indent, trailing newline."""
    return (json.dumps(to_json(pf), sort_keys=True, indent=2) + "\n").encode("utf-8")


def digest(pf: ProblemFile) -> str:
    return hashlib.sha256(serialize(pf)).hexdigest()
