"""Write the example problem files in problems/ in canonical form."""

import math
from pathlib import Path

import numpy as np

from apstab.freqlat import FrequencyBasis
from apstab.problem import ProblemFile, Term, serialize

OUT = Path(__file__).resolve().parent.parent / "problems"


def term(basis, coords, coeff, kind="exp", n=1):
    shape = (n, n)
    return Term(basis.freq(*coords), np.broadcast_to(np.asarray(coeff, dtype=complex), shape).copy(), kind)


def main():
    OUT.mkdir(exist_ok=True)
    b2 = FrequencyBasis.of("1", "sqrt(2)")
    bpi = FrequencyBasis.of("pi")
    problems = {
        "decaying_quasiperiodic": ProblemFile(
            b2, 1, None,
            [term(b2, (0, 0), -2.0), term(b2, (1, 0), 0.5), term(b2, (-1, 0), 0.5),
             term(b2, (0, 1), 0.5), term(b2, (0, -1), 0.5)],
            [], {"alphas": [1.0, 0.1, 0.01], "horizon": 10.0}),
        "bounded_quasiperiodic": ProblemFile(
            b2, 1, None, [term(b2, (1, 0), 1.0), term(b2, (0, 1), 1.0)], [],
            {"horizon": 100.0, "grid_step": 0.5}),
        "growing": ProblemFile(
            b2, 1, None, [term(b2, (0, 0), 1.0), term(b2, (1, 0), 1.0)], [], {"horizon": 20.0}),
        "nondiscrete_generators": ProblemFile(
            b2, 1, None, [], [], {"generators": [[-1, 0], [0, 1]], "search_bound": 10000, "eps": 0.01}),
        "forced_decaying": ProblemFile(
            b2, 1, None,
            [term(b2, (0, 0), -2.0), term(b2, (1, 0), 1.0, "cos"), term(b2, (0, 1), 1.0, "cos")],
            [Term(b2.zero(), np.array([1.0 + 0j]))], {"lambda": 0.0}),
        "periodic_decay": ProblemFile(
            bpi, 1, np.array([[-1.0 + 0j]]), [term(bpi, (2,), 1.0, "cos")], [], {"period": "1"}),
        "rotation": ProblemFile(bpi, 1, np.array([[2j * math.pi]]), [], [], {"period": "1"}),
        "rotation_block": ProblemFile(
            bpi, 2, np.array([[0, 2 * math.pi], [-2 * math.pi, 0]], dtype=complex), [], [],
            {"period": "1"}),
        "damped_sweep": ProblemFile(
            b2, 1, np.array([[-1.0 + 0j]]), [term(b2, (1, 0), 0.2, "cos")], [],
            {"lattice_bound": 3, "K": [0.0, {"re": 0.0, "im": 1.0}, {"re": 0.0, "im": -1.0}]}),
    }
    for name, pf in problems.items():
        (OUT / f"{name}.json").write_bytes(serialize(pf))
        print(f"wrote problems/{name}.json")


if __name__ == "__main__":
    main()
