"""Command-line entry point: ``apstab <command> problem.json [options]``.

Exit codes: 0 when the analysis completed (whatever the verdict), 2 for
invalid input, 1 for internal failures. Reports are written only after the
analysis has finished, so a failure never leaves a partial report behind.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .apcalc import derivative
from .evolve import EvolutionProcess, LinearSystem, stability_probe, sup_norm_scan
from .freqlat import DEFAULT_EPS, DEFAULT_SEARCH_BOUND, SemiModule
from .harmonic import SingularHarmonic, autonomous_resolvent, galerkin_generator, perturbation_radius, \
    resolvent_norm_sweep
from .periodic import Aperiodic, PeriodicConfig, periodic_stability_verdict
from .problem import ProblemError, ProblemFile, digest, parse
from .records import ConditionRecord, to_jsonable
from .scalar import NotApplicable, ScalarEquation, StabilityConfig, solve_resolvent, \
    stability_verdict
from .trigpoly import TrigPoly, bohr_mean, bohr_spectrum

COMMANDS = ("spectrum", "semimodule", "solve", "stability", "monodromy", "probe", "sweep", "report")


class InvalidInput(ValueError):
    pass


class Outcome:
    """What a command produces: records, a verdict, a result payload and CSV tables."""

    def __init__(self, verdict: str, records, result: dict, tables: dict | None = None):
        if not records:
            raise RuntimeError("a verdict must cite at least one record")
        self.verdict = verdict
        self.records = list(records)
        self.result = result
        self.tables = tables or {}


def _opt(pf: ProblemFile, key: str, default):
    return pf.analysis.get(key, default)


def _complex(x) -> complex:
    if isinstance(x, dict):
        return complex(x.get("re", 0), x.get("im", 0))
    return complex(x)


def _freq_json(f) -> dict:
    return {"value": str(f), "coords": f.to_json()["coords"], "approx": float(f)}


def _terms_json(p: TrigPoly) -> list:
    return [{"freq": str(f), "coeff": c} for f, c in p.terms()]


def _scalar_eq(pf: ProblemFile) -> ScalarEquation:
    return ScalarEquation(pf.scalar_poly())


def _system(pf: ProblemFile) -> LinearSystem:
    A = pf.A_poly()
    return LinearSystem(A=A if len(A) else None,
                        A0=pf.A0 if pf.A0 is not None else np.zeros((pf.dimension, pf.dimension)))


def cmd_spectrum(pf: ProblemFile) -> Outcome:
    p = pf.coefficient_poly()
    spec = sorted(bohr_spectrum(p), key=lambda f: (float(f), f.coords))
    mean = bohr_mean(p, pf.basis.zero())
    rec = ConditionRecord("bohr-spectrum", "frequencies with nonzero mean", "info",
                          {"count": len(spec), "frequencies": [str(f) for f in spec]})
    return Outcome("Computed", [rec], {"frequencies": [_freq_json(f) for f in spec], "mean": mean})


def cmd_semimodule(pf: ProblemFile) -> Outcome:
    if "generators" in pf.analysis:
        gens = [pf.freq(g, f"$.analysis.generators[{i}]") for i, g in enumerate(pf.analysis["generators"])]
    else:
        gens = list(bohr_spectrum(pf.coefficient_poly()))
    if not gens:
        raise InvalidInput("no generators: give analysis.generators or a nonzero coefficient")
    module = SemiModule.generated_by(gens, pf.basis)
    search = _opt(pf, "search_bound", DEFAULT_SEARCH_BOUND)
    disc = module.discreteness(search, _opt(pf, "eps", DEFAULT_EPS))
    mcheck = module.is_module(_opt(pf, "bound", 64))
    ev = {"status": disc.status, "reason": disc.reason, "search_bound": search}
    if disc.witness is not None:
        ev.update(witness=str(disc.witness), witness_coeffs=list(disc.witness_coeffs),
                  witness_value=disc.witness_value, witness_error=disc.witness_error)
    recs = [ConditionRecord("discreteness", "semi-module discreteness", "info", ev),
            ConditionRecord("module", "closure under negation", "info",
                            {"status": mcheck.status, "bound": mcheck.bound,
                             "certificate": mcheck.certificate,
                             "witnesses": {k: list(v) for k, v in mcheck.witnesses.items()}})]
    return Outcome(disc.status, recs, {"generators": [_freq_json(g) for g in module.generators],
                                       "discreteness": ev, "module": mcheck.status})


def cmd_solve(pf: ProblemFile) -> Outcome:
    lam = _complex(_opt(pf, "lambda", 0))
    f = pf.forcing_poly()
    if f is None:
        raise InvalidInput("solve needs forcing terms")
    tol = _opt(pf, "tol", 1e-8)
    if pf.dimension == 1:
        eq = _scalar_eq(pf)
        fs = TrigPoly(f.basis, f.num, f.den, f.coef.reshape(-1), (), _canonical=True)
        try:
            sol = solve_resolvent(eq, lam, fs)
        except NotApplicable as exc:
            raise InvalidInput(str(exc)) from None
        u, err, resid = sol.u.approx, sol.u.sup_error, sol.residual_bound
        extra = {"unique": sol.unique, "justification": sol.justification}
    elif not pf.A:
        A0 = pf.A0 if pf.A0 is not None else np.zeros((pf.dimension, pf.dimension))
        try:
            u = autonomous_resolvent(A0, lam, f)
        except SingularHarmonic as exc:
            raise InvalidInput(str(exc)) from None
        resid = (derivative(u) - TrigPoly.constant(pf.basis, A0 - lam * np.eye(pf.dimension)) @ u - f).l1_norm() \
            if len(u) else 0.0
        err, extra = 0.0, {"unique": True}
    else:
        raise InvalidInput("solve handles scalar equations and constant-coefficient systems")
    rec = ConditionRecord("resolvent-solution", "bounded solution of u' = (A - lam) u + f",
                          "pass" if resid <= tol else "fail",
                          {"residual_bound": resid, "sup_error": err, "tol": tol, "lambda": lam})
    return Outcome("Solved" if rec.passed else "Inaccurate", [rec],
                   {"lambda": lam, "terms": _terms_json(u), "l1_norm": u.l1_norm(),
                    "sup_error": err, "residual_bound": resid, **extra})


def _alphas(pf: ProblemFile) -> tuple:
    return tuple(float(a) for a in _opt(pf, "alphas", [1.0, 0.1, 0.01]))


def cmd_stability(pf: ProblemFile) -> Outcome:
    if pf.dimension == 1 and "period" not in pf.analysis:
        eq = _scalar_eq(pf)
        cfg = StabilityConfig(alphas=_alphas(pf), member_bound=_opt(pf, "bound", 64),
                              search_bound=_opt(pf, "search_bound", DEFAULT_SEARCH_BOUND),
                              eps=_opt(pf, "eps", DEFAULT_EPS))
        v = stability_verdict(eq, cfg)
        return Outcome(v.status, v.evidence, {"mu0": eq.mu0, "dimension": 1})
    if "period" in pf.analysis:
        return cmd_monodromy(pf)
    process = EvolutionProcess(_system(pf), tol=_opt(pf, "tol", 1e-10))
    horizon = _opt(pf, "horizon", 20.0)
    scan = sup_norm_scan(process, horizon, _opt(pf, "grid_step", 0.5))
    probe = stability_probe(process, np.eye(pf.dimension), 0.0, horizon)
    recs = [ConditionRecord("sup-scan", "sup of |U(t,s)| on a grid", "info", scan.evidence()),
            ConditionRecord("probe-trend", "tail of |U(t,0) x0|", "info",
                            {"suggestion": probe.suggestion, "tail_slope": probe.tail_slope})]
    return Outcome("Inconclusive", recs, {"note": "no exact criterion for this system class",
                                          "suggestion": probe.suggestion})


def cmd_monodromy(pf: ProblemFile) -> Outcome:
    if "period" not in pf.analysis:
        raise InvalidInput("monodromy needs analysis.period")
    tau = pf.analysis["period"]
    cfg = PeriodicConfig(tol=min(_opt(pf, "tol", 1e-12), 1e-10), alphas=_alphas(pf))
    try:
        rep = periodic_stability_verdict(_system(pf), tau if isinstance(tau, (str, int)) else str(tau), cfg)
    except Aperiodic as exc:
        raise InvalidInput(str(exc)) from None
    result = {"period": str(rep.tau), "P": rep.P, "eigenvalues": rep.eigenvalues,
              "spectral_radius": float(np.abs(rep.eigenvalues).max()),
              "power_sup": rep.power.sup, "power_trend": rep.power.trend}
    header, rows = rep.power.csv_rows()
    return Outcome(rep.verdict, rep.records, result, {"powers.csv": (header, rows)})


def cmd_probe(pf: ProblemFile) -> Outcome:
    process = EvolutionProcess(_system(pf), tol=_opt(pf, "tol", 1e-10))
    horizon = _opt(pf, "horizon", 10.0)
    init = pf.analysis.get("initial")
    X0 = np.eye(pf.dimension, dtype=complex) if init is None else \
        np.array([[_complex(v) for v in row] for row in init], dtype=complex)
    probe = stability_probe(process, X0, 0.0, horizon, _opt(pf, "samples", 201))
    scan = sup_norm_scan(process, horizon, _opt(pf, "grid_step", 0.5))
    recs = [ConditionRecord("probe-trend", "tail of |U(t,0) x0|", "info",
                            {"suggestion": probe.suggestion, "tail_slope": probe.tail_slope,
                             "final_norms": probe.norms[-1]}),
            ConditionRecord("sup-scan", "sup of |U(t,s)| on a grid", "info", scan.evidence())]
    tables = {"scan.csv": (["s", "t", "norm"], [list(r) for r in scan.rows])}
    for j in range(X0.shape[0]):
        st = probe.states[:, j, :]
        header = ["t"] + [f"{p}_{k}" for k in range(st.shape[1]) for p in ("re", "im")]
        rows = [[float(t)] + [float(x) for z in row for x in (z.real, z.imag)]
                for t, row in zip(probe.times, st)]
        tables[f"trajectory_{j}.csv"] = (header, rows)
    return Outcome(probe.suggestion, recs, {"horizon": horizon, "suggestion": probe.suggestion,
                                            "sup": scan.sup, "M": scan.bound[0], "alpha": scan.bound[1]},
                   tables)


def cmd_sweep(pf: ProblemFile) -> Outcome:
    A0 = pf.A0 if pf.A0 is not None else np.zeros((pf.dimension, pf.dimension))
    A = pf.A_poly()
    if "lattice" in pf.analysis:
        lattice = [pf.freq(g, f"$.analysis.lattice[{i}]") for i, g in enumerate(pf.analysis["lattice"])]
    else:
        gens = list(bohr_spectrum(A)) or [pf.basis.zero()]
        module = SemiModule.generated_by(gens + [pf.basis.zero()], pf.basis)
        lattice = sorted(module.truncate(_opt(pf, "lattice_bound", 2)), key=lambda f: (float(f), f.coords))
    trunc = galerkin_generator(A0, A if len(A) else None, lattice)
    if "points" in pf.analysis:
        points = [_complex(z) for z in pf.analysis["points"]]
    else:
        points = [1j * y for y in np.linspace(-3, 3, 61)]
    sweep = resolvent_norm_sweep(trunc, points)
    finite = [n for _, n in sweep if np.isfinite(n)]
    recs = [ConditionRecord("resolvent-sweep", "resolvent norm of the truncated generator", "info",
                            {"window": len(lattice), "dropped_couplings": trunc.dropped,
                             "max_finite_norm": max(finite) if finite else None,
                             "singular_points": [z for z, n in sweep if not np.isfinite(n)]})]
    result = {"window": [str(f) for f in lattice], "dropped_couplings": trunc.dropped,
              "norms": [{"point": z, "norm": n} for z, n in sweep]}
    if "K" in pf.analysis:
        K = [_complex(z) for z in pf.analysis["K"]]
        try:
            rad = perturbation_radius(A0, K, lattice=lattice)
        except ValueError as exc:
            raise InvalidInput(str(exc)) from None
        recs.append(ConditionRecord("perturbation-radius", "Neumann-series radius on K", "info", rad.evidence()))
        result["delta0"] = rad.delta0
    tables = {"sweep.csv": (["re", "im", "norm"], [[z.real, z.imag, n] for z, n in sweep])}
    return Outcome("Computed", recs, result, tables)


def cmd_report(pf: ProblemFile) -> Outcome:
    parts = {"spectrum": cmd_spectrum(pf), "stability": cmd_stability(pf)}
    if pf.A:
        parts["semimodule"] = cmd_semimodule(pf)
    records = [r for name in ("spectrum", "semimodule", "stability") if name in parts
               for r in parts[name].records]
    result = {name: {"verdict": o.verdict, "result": o.result} for name, o in parts.items()}
    return Outcome(parts["stability"].verdict, records, result)


_DISPATCH = {"spectrum": cmd_spectrum, "semimodule": cmd_semimodule, "solve": cmd_solve,
             "stability": cmd_stability, "monodromy": cmd_monodromy, "probe": cmd_probe,
             "sweep": cmd_sweep, "report": cmd_report}


def apply_overrides(pf: ProblemFile, tol=None, horizon=None, bound=None, alphas=None) -> ProblemFile:
    a = dict(pf.analysis)
    if tol is not None:
        a["tol"] = tol
    if horizon is not None:
        a["horizon"] = horizon
    if bound is not None:
        a["bound"] = bound
    if alphas is not None:
        a["alphas"] = list(alphas)
    pf.analysis = a
    return pf


def run(command: str, pf: ProblemFile) -> tuple[dict, dict]:
    """Run one command; returns the report dict and the CSV tables."""
    if command not in _DISPATCH:
        raise InvalidInput(f"unknown command {command!r}")
    start = time.perf_counter()
    out = _DISPATCH[command](pf)
    report = {
        "command": command,
        "input_digest": digest(pf),
        "records": [r.to_json() for r in out.records],
        "verdict": out.verdict,
        "result": to_jsonable(out.result),
        "version": __version__,
        "timing": {"seconds": time.perf_counter() - start},
    }
    return report, out.tables


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def comparison_digest(report: dict) -> str:
    """Report text without the timing field, for determinism checks."""
    return dumps({k: v for k, v in report.items() if k != "timing"})


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_tables(directory: Path, tables: dict):
    directory.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in tables.items():
        with open(directory / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("alphas must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apstab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("problem", type=Path, help="problem file (JSON)")
    p.add_argument("--out", type=Path, help="write the report here instead of stdout")
    p.add_argument("--csv", type=Path, help="directory for CSV tables")
    p.add_argument("--tol", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--bound", type=int)
    p.add_argument("--alphas", type=_float_list, help="comma-separated, decreasing")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        pf = parse(args.problem.read_bytes())
        apply_overrides(pf, args.tol, args.horizon, args.bound, args.alphas)
        if args.tol is not None and not args.tol > 0 or args.horizon is not None and not args.horizon > 0:
            raise InvalidInput("--tol and --horizon must be positive")
        report, tables = run(args.command, pf)
    except (OSError, ProblemError, InvalidInput) as exc:
        print(f"apstab: invalid input: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"apstab: internal failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = dumps(report)
    try:
        if args.csv is not None and tables:
            _write_tables(args.csv, tables)
        if args.out is not None:
            _atomic_write(args.out, text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"apstab: cannot write output: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
