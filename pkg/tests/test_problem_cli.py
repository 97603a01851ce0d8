import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from apstab.cli import comparison_digest, main, run
from apstab.problem import ProblemError, digest, parse, serialize
from conftest import B2

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"
ONE, R2 = B2.unit(0), B2.unit(1)


def load(name):
    return parse((PROBLEMS / f"{name}.json").read_bytes())


def write(tmp_path, obj, name="p.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return path


def cli(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestParse:
    def test_example_file_spectrum(self):
        pf = load("decaying_quasiperiodic")
        report, _ = run("spectrum", pf)
        got = {pf.freq({"coords": f["coords"]}) for f in report["result"]["frequencies"]}
        assert got == {B2.zero(), ONE, -ONE, R2, -R2}

    def test_empty_system(self, tmp_path):
        pf = parse(json.dumps({"basis": ["1"], "dimension": 2}))
        assert pf.A == [] and pf.A0 is None
        report, _ = run("probe", pf)
        assert report["result"]["sup"] == pytest.approx(1.0, abs=1e-12)
        assert report["verdict"] == "Bounded"

    def test_float_coordinate_rejected(self):
        bad = {"basis": ["1"], "A": [{"freq": {"coords": [0.5]}, "coeff": 1.0}]}
        with pytest.raises(ProblemError) as info:
            parse(json.dumps(bad))
        assert info.value.path == "$.A[0].freq.coords[0]"

    @pytest.mark.parametrize("coord, value", [(3, 3), ("1/2", 0.5), ([-2, 3], -2 / 3)])
    def test_rational_coordinates(self, coord, value):
        pf = parse(json.dumps({"basis": ["1"], "A": [{"freq": {"coords": [coord]}, "coeff": 1.0}]}))
        assert float(pf.A[0].freq) == pytest.approx(value)

    @pytest.mark.parametrize("obj, path", [
        ({"basis": ["1", "2"]}, "$.basis"),
        ({"basis": []}, "$.basis"),
        ({"basis": ["1"], "dimension": 0}, "$.dimension"),
        ({"basis": ["1"], "dimension": 2, "A0": [[1, 0]]}, "$.A0"),
        ({"basis": ["1"], "A": [{"freq": {"coords": [1, 2]}, "coeff": 1}]}, "$.A[0].freq"),
        ({"basis": ["1"], "A": [{"freq": {"coords": [1]}, "coeff": 1, "kind": "tan"}]}, "$.A[0].kind"),
        ({"basis": ["1"], "analysis": {"horizon": -1}}, "$.analysis.horizon"),
        ({"basis": ["1"], "extra": 1}, "$"),
    ])
    def test_schema_errors_carry_paths(self, obj, path):
        with pytest.raises(ProblemError) as info:
            parse(json.dumps(obj))
        assert info.value.path == path

    def test_basis_dependence_message(self):
        with pytest.raises(ProblemError, match="basis dependence"):
            parse(json.dumps({"basis": ["sqrt(2)", "sqrt(8)"]}))

    def test_cos_sugar_expands(self):
        pf = load("forced_decaying")
        a = pf.scalar_poly()
        assert sorted(float(f) for f in a.frequencies()) == pytest.approx(
            sorted([0.0, -1.0, 1.0, -2 ** 0.5, 2 ** 0.5]))

    @pytest.mark.parametrize("path", sorted(PROBLEMS.glob("*.json")), ids=lambda p: p.stem)
    def test_round_trip_byte_identical(self, path):
        data = path.read_bytes()
        assert serialize(parse(data)) == data

    def test_any_valid_file_becomes_canonical(self):
        text = '{"dimension":1,"basis":["1"],"A":[{"coeff":{"re":1,"im":2},"freq":{"coords":["2/4"]}}]}'
        once = serialize(parse(text))
        assert serialize(parse(once)) == once
        assert digest(parse(text)) == digest(parse(once))


class TestCommands:
    def test_stability_example(self, capsys):
        code, out, _ = cli(["stability", PROBLEMS / "decaying_quasiperiodic.json"], capsys)
        assert code == 0
        rep = json.loads(out)
        assert rep["verdict"] == "StronglyStable"
        assert {"command", "input_digest", "records", "verdict", "result", "version", "timing"} <= set(rep)
        passing = {r["name"] for r in rep["records"] if r["status"] == "pass"}
        assert {"bounded-propagator", "countable-imaginary-spectrum", "ergodic-limit"} <= passing
        assert all(r["anchor"] for r in rep["records"])

    def test_semimodule_witness(self, capsys):
        code, out, _ = cli(["semimodule", PROBLEMS / "nondiscrete_generators.json"], capsys)
        rep = json.loads(out)
        assert code == 0 and rep["verdict"] == "NonDiscrete"
        ev = rep["result"]["discreteness"]
        assert abs(ev["witness_value"]) < 0.01 and ev["witness_value"] != 0

    def test_monodromy(self, capsys):
        code, out, _ = cli(["monodromy", PROBLEMS / "periodic_decay.json"], capsys)
        rep = json.loads(out)
        assert code == 0 and rep["verdict"] == "StronglyStable"
        P = rep["result"]["P"]
        val = P[0][0]["re"] if isinstance(P[0][0], dict) else P[0][0]
        assert val == pytest.approx(np.exp(-1), abs=1e-8)

    def test_solve(self, capsys):
        code, out, _ = cli(["solve", PROBLEMS / "forced_decaying.json"], capsys)
        rep = json.loads(out)
        assert code == 0 and rep["verdict"] == "Solved"
        assert rep["result"]["residual_bound"] <= 1e-8

    def test_growing(self, capsys):
        code, out, _ = cli(["stability", PROBLEMS / "growing.json"], capsys)
        assert code == 0 and json.loads(out)["verdict"] == "Unbounded"

    def test_sweep(self, capsys, tmp_path):
        code, out, _ = cli(["sweep", PROBLEMS / "damped_sweep.json", "--csv", tmp_path], capsys)
        rep = json.loads(out)
        assert code == 0 and rep["result"]["delta0"] > 0
        rows = list(csv.reader((tmp_path / "sweep.csv").open()))
        assert rows[0] == ["re", "im", "norm"]

    def test_probe_csv(self, capsys, tmp_path):
        code, _, _ = cli(["probe", PROBLEMS / "decaying_quasiperiodic.json", "--csv", tmp_path,
                          "--horizon", "5"], capsys)
        assert code == 0
        assert next(csv.reader((tmp_path / "scan.csv").open())) == ["s", "t", "norm"]
        assert next(csv.reader((tmp_path / "trajectory_0.csv").open())) == ["t", "re_0", "im_0"]

    def test_every_verdict_cites_a_record(self):
        for name in ("decaying_quasiperiodic", "rotation", "damped_sweep"):
            for command in ("spectrum", "stability"):
                report, _ = run(command, load(name))
                assert report["records"]

    def test_out_file(self, capsys, tmp_path):
        out = tmp_path / "sub" / "r.json"
        code, stdout, _ = cli(["spectrum", PROBLEMS / "growing.json", "--out", out], capsys)
        assert code == 0 and stdout == ""
        assert json.loads(out.read_text())["command"] == "spectrum"


class TestExitCodes:
    def test_float_coordinate(self, capsys, tmp_path):
        p = write(tmp_path, {"basis": ["1"], "A": [{"freq": {"coords": [0.5]}, "coeff": 1.0}]})
        code, out, err = cli(["spectrum", p], capsys)
        assert code == 2 and out == "" and "coords[0]" in err

    def test_missing_file(self, capsys, tmp_path):
        assert cli(["spectrum", tmp_path / "none.json"], capsys)[0] == 2

    def test_monodromy_needs_period(self, capsys):
        assert cli(["monodromy", PROBLEMS / "growing.json"], capsys)[0] == 2

    def test_aperiodic(self, capsys, tmp_path):
        obj = json.loads((PROBLEMS / "bounded_quasiperiodic.json").read_text())
        obj["analysis"]["period"] = "1"
        assert cli(["monodromy", write(tmp_path, obj)], capsys)[0] == 2

    def test_bad_flag(self, capsys):
        assert cli(["stability", PROBLEMS / "growing.json", "--alphas", "1,-1"], capsys)[0] == 2

    def test_unknown_command(self, capsys):
        assert cli(["frobnicate", PROBLEMS / "growing.json"], capsys)[0] == 2

    def test_no_partial_report(self, capsys, tmp_path):
        out = tmp_path / "r.json"
        p = write(tmp_path, {"basis": ["1"], "dimension": 1})
        assert cli(["solve", p, "--out", out], capsys)[0] == 2
        assert not out.exists()

    def test_internal_failure(self, capsys, monkeypatch):
        import apstab.cli as mod
        def boom(pf):
            raise RuntimeError("boom")
        monkeypatch.setitem(mod._DISPATCH, "spectrum", boom)
        code, _, err = cli(["spectrum", PROBLEMS / "growing.json"], capsys)
        assert code == 1 and "boom" in err

    def test_version(self, capsys):
        code, out, _ = cli(["--version"], capsys)
        assert code == 0 and out.startswith("apstab ")

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "apstab", "spectrum", str(PROBLEMS / "growing.json")],
                             capture_output=True, text=True, check=False)
        assert res.returncode == 0 and json.loads(res.stdout)["verdict"] == "Computed"


class TestDeterminism:
    def test_repeated_runs(self):
        pf = load("decaying_quasiperiodic")
        a, _ = run("stability", pf)
        b, _ = run("stability", load("decaying_quasiperiodic"))
        assert comparison_digest(a) == comparison_digest(b)
        assert a["input_digest"] == digest(pf)
