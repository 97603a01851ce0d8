"""Condition records shared by the verdict builders, plus the limit-trend rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConditionRecord:
    """One checked condition: ``status`` is ``"pass"``, ``"fail"`` or ``"info"``."""

    name: str
    anchor: str
    status: str
    evidence: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_json(self) -> dict:
        return {"name": self.name, "anchor": self.anchor, "status": self.status,
                "evidence": to_jsonable(self.evidence)}


@dataclass(frozen=True)
class TrendRule:
    """Finite stand-in for "tends to zero as alpha decreases to 0".

    Pass when the smallest alpha is at most ``final_alpha_max``, the last
    value is at most ``decay_ratio`` times the first, and the sequence is
    non-increasing up to a relative slack ``monotone_rtol``.
    """

    final_alpha_max: float = 1e-2
    decay_ratio: float = 0.1
    monotone_rtol: float = 1e-9

    def check(self, alphas: Sequence[float], values: Sequence[float]) -> tuple[bool, str]:
        alphas = np.asarray(alphas, dtype=float)
        values = np.asarray(values, dtype=float)
        if len(values) == 0:
            return False, "empty sequence"
        if np.any(np.diff(alphas) >= 0):
            return False, "alphas must be strictly decreasing"
        if not np.all(np.isfinite(values)):
            return False, "non-finite value"
        first, last = values[0], values[-1]
        if first == 0 and np.all(values == 0):
            return True, "identically zero"
        slack = self.monotone_rtol * np.maximum(np.abs(values[:-1]), 1e-300)
        if np.any(values[1:] > values[:-1] + slack):
            return False, "sequence increases"
        if alphas[-1] > self.final_alpha_max:
            return False, f"smallest alpha {alphas[-1]:g} above {self.final_alpha_max:g}"
        if last > self.decay_ratio * first:
            return False, f"last/first = {last / first:.3g} above {self.decay_ratio:g}"
        return True, "non-increasing and decayed"


def to_jsonable(obj):
    """Convert numpy / complex / nested containers into JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": _float(obj.real), "im": _float(obj.imag)}
    if isinstance(obj, (np.floating, float)):
        return _float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if obj is None or isinstance(obj, (str, int, bool)):
        return obj
    return str(obj)


def _float(x):
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x
