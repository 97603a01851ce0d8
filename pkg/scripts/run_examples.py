"""Run the bundled problem files through the command set and print one line per run.

Usage: python scripts/run_examples.py [--out DIR]

With ``--out`` every report is also written as ``DIR/<problem>.<command>.json``.
"""

import argparse
from pathlib import Path

from apstab.cli import dumps, run
from apstab.problem import parse

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"

PLAN = [
    ("decaying_quasiperiodic", "stability"),
    ("bounded_quasiperiodic", "stability"),
    ("growing", "stability"),
    ("nondiscrete_generators", "semimodule"),
    ("forced_decaying", "solve"),
    ("periodic_decay", "monodromy"),
    ("rotation", "monodromy"),
    ("rotation_block", "monodromy"),
    ("damped_sweep", "sweep"),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    for name, command in PLAN:
        report, _ = run(command, parse((PROBLEMS / f"{name}.json").read_bytes()))
        secs = report["timing"]["seconds"]
        print(f"{name:24s} {command:11s} {report['verdict']:22s} {secs:6.2f} s")
        if args.out:
            (args.out / f"{name}.{command}.json").write_text(dumps(report))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
