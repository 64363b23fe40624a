import csv
import json

import pytest

from riccideg.cli import CSV_TAIL, main

from helpers import P_CPM, QB_VSTATIC


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def p_instance(tmp_path):
    out = tmp_path / "inst.json"
    assert main(["construct", "--family", "p-cpm", "--params", write(tmp_path / "p.json", P_CPM),
                 "--out", str(out)]) == 0
    return out


def test_construct_prints_summary(tmp_path, capsys):
    params = {k: v for k, v in QB_VSTATIC.items() if k != "kind"}
    out = tmp_path / "q.inst"
    assert main(["construct", "--family", "qb-vstatic", "--params", write(tmp_path / "q.json", params),
                 "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "family: qb-vstatic" in text and "chart:" in text and "drift:" in text
    assert json.loads(out.read_text())["family"] == "qb-vstatic"


def test_construct_rejects_m_zero(tmp_path, capsys):
    params = {k: v for k, v in QB_VSTATIC.items() if k != "kind"}
    params["m"] = 0.0
    code = main(["construct", "--family", "qb-vstatic", "--params", write(tmp_path / "q.json", params),
                 "--out", str(tmp_path / "x.json")])
    assert code == 2
    assert "m must be nonzero" in capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


@pytest.mark.parametrize("doc, msg", [
    ({"beta": -1.0}, "missing field"),
    (dict(P_CPM, delta=1.0), "unknown field"),
    (dict(P_CPM, gamma="abc"), "'gamma'"),
    (dict(P_CPM, kind="vstatic"), "unknown field"),
])
def test_construct_field_level_messages(tmp_path, capsys, doc, msg):
    code = main(["construct", "--family", "p-cpm", "--params", write(tmp_path / "p.json", doc),
                 "--out", str(tmp_path / "x.json")])
    assert code == 2
    assert msg in capsys.readouterr().err


def test_construct_malformed_json(tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{beta: ")
    assert main(["construct", "--family", "p-cpm", "--params", str(tmp_path / "bad.json"),
                 "--out", str(tmp_path / "x.json")]) == 2
    assert "malformed JSON" in capsys.readouterr().err


def test_construct_fixed_kind_clash(tmp_path, capsys):
    code = main(["construct", "--family", "qb-cpm", "--params", write(tmp_path / "q.json", QB_VSTATIC),
                 "--out", str(tmp_path / "x.json")])
    assert code == 2 and "fixed by --family" in capsys.readouterr().err


def test_missing_out_is_usage_error(tmp_path, capsys):
    assert main(["construct", "--family", "p-cpm", "--params", write(tmp_path / "p.json", P_CPM)]) == 2
    assert "usage" in capsys.readouterr().err


def test_verify_passes_and_writes_report(p_instance, tmp_path, capsys):
    rep = tmp_path / "r.json"
    assert main(["verify", "--instance", str(p_instance), "--checks", "all", "--grid", "7x7x7",
                 "--report", str(rep)]) == 0
    doc = json.loads(rep.read_text())
    assert doc["passed"] is True
    assert "overall: PASS" in capsys.readouterr().out


def test_verify_corrupted_potential_fails(p_instance, tmp_path):
    doc = json.loads(p_instance.read_text())
    doc["potential_scale"] = 1.01
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    rep = tmp_path / "r.json"
    assert main(["verify", "--instance", str(bad), "--report", str(rep)]) == 1
    checks = {c["name"]: c for c in json.loads(rep.read_text())["checks"]}
    assert checks["equation_residual"]["passed"] is False


def test_verify_drifted_instance_fails(p_instance, tmp_path):
    doc = json.loads(p_instance.read_text())
    doc["solutions"]["p"]["y"][-1][0] += 1e-3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    rep = tmp_path / "r.json"
    assert main(["verify", "--instance", str(bad), "--report", str(rep)]) == 1
    assert json.loads(rep.read_text())["checks"][0]["status"] == "unverifiable"


@pytest.mark.parametrize("extra", [["--grid", "2x2x2"], ["--checks", "equation_residual,bogus"],
                                   ["--tol", "-1"], ["--grid", "seven"]])
def test_verify_input_errors(p_instance, tmp_path, capsys, extra):
    assert main(["verify", "--instance", str(p_instance), "--report", str(tmp_path / "r.json"), *extra]) == 2
    err = capsys.readouterr().err
    if "bogus" in extra[-1]:
        assert "valid:" in err and "equation_residual" in err


def test_verify_subset_and_tolerance(p_instance, tmp_path):
    rep = tmp_path / "r.json"
    assert main(["verify", "--instance", str(p_instance), "--checks", "equation_residual,scalar_constancy",
                 "--report", str(rep), "--tol", "1e-9"]) == 0
    names = [c["name"] for c in json.loads(rep.read_text())["checks"]]
    assert names == ["provenance_drift", "equation_residual", "scalar_constancy"]
    assert main(["verify", "--instance", str(p_instance), "--checks", "equation_residual",
                 "--report", str(rep), "--tol", "1e-20"]) == 1


def test_sweep_qb_cpm(tmp_path, capsys):
    base = {k: v for k, v in QB_VSTATIC.items() if k not in ("kind", "kappa")}
    ranges = write(tmp_path / "ranges.json", {"base": base, "ranges": {"m": [0.5, 1.0, 2.0]}})
    out = tmp_path / "s.csv"
    assert main(["sweep", "--family", "qb-cpm", "--param-ranges", ranges, "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["family", "m", *CSV_TAIL]
    assert [float(r["m"]) for r in rows] == [0.5, 1.0, 2.0]
    for r in rows:
        assert float(r["max_eq_residual"]) <= 1e-7
        assert float(r["chart_x1"]) > 0 and float(r["cotton_witness"]) >= 1e-6
    # numerics survive a parse/format round trip unchanged
    text = out.read_text()
    for r in rows:
        assert format(float(r["max_eq_residual"]), ".17g") == r["max_eq_residual"]
    assert main(["sweep", "--family", "qb-cpm", "--param-ranges", ranges, "--out", str(tmp_path / "t.csv")]) == 0
    assert (tmp_path / "t.csv").read_text() == text


def test_sweep_guard_row(tmp_path):
    base = {k: v for k, v in QB_VSTATIC.items() if k != "kind"}
    base.update(m=-1.0, q0=0.5)
    ranges = write(tmp_path / "ranges.json", {"base": base, "ranges": {"b0": [-0.47]}})
    out = tmp_path / "s.csv"
    assert main(["sweep", "--family", "qb-vstatic", "--param-ranges", ranges, "--out", str(out)]) == 0
    (row,) = list(csv.DictReader(open(out, newline="")))
    assert row["guard_note"] == "guard: q+b"
    assert float(row["chart_x1"]) == 0 and row["max_eq_residual"] == ""


def test_sweep_linear_range(tmp_path):
    ranges = write(tmp_path / "r.json", {"base": P_CPM, "ranges": {"p0": {"start": 1.5, "stop": 2.5, "num": 3}}})
    out = tmp_path / "s.csv"
    assert main(["sweep", "--family", "p-cpm", "--param-ranges", ranges, "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 4


@pytest.mark.parametrize("doc", [{"base": P_CPM, "ranges": {}}, {"base": P_CPM, "ranges": {"p0": []}},
                                 {"base": P_CPM}, [1, 2]])
def test_sweep_empty_ranges(tmp_path, doc):
    ranges = write(tmp_path / "r.json", doc)
    assert main(["sweep", "--family", "p-cpm", "--param-ranges", ranges, "--out", str(tmp_path / "s.csv")]) == 2


def test_oracle_interior_point(p_instance, capsys):
    assert main(["oracle", "--instance", str(p_instance), "--point", "0.1,0.5,0.05", "--step", "1e-4"]) == 0
    out = capsys.readouterr().out
    assert "within 1e-5" in out
    assert sum(line.startswith(("g11", "g22", "g33", "f ")) for line in out.splitlines()) == 36


def test_oracle_coarse_step_reports_honestly(p_instance, capsys):
    code = main(["oracle", "--instance", str(p_instance), "--point", "0.0,0.5,0.0", "--step", "0.1"])
    out = capsys.readouterr().out
    assert code in (0, 1)
    assert ("above 1e-5" in out) == (code == 1)


@pytest.mark.parametrize("point", ["-1.0,0.5,0.0", "5,5,5", "1,2", "a,b,c"])
def test_oracle_bad_point(p_instance, point):
    assert main(["oracle", "--instance", str(p_instance), f"--point={point}"]) == 2


def test_unreadable_instance(tmp_path, capsys):
    assert main(["verify", "--instance", str(tmp_path / "none.json"), "--report", str(tmp_path / "r.json")]) == 2
    (tmp_path / "junk.json").write_text(json.dumps({"spec": {}}))
    assert main(["verify", "--instance", str(tmp_path / "junk.json"), "--report", str(tmp_path / "r.json")]) == 2


def test_module_entry_point(p_instance, tmp_path):
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "riccideg", "oracle", "--instance", str(p_instance),
                           "--point", "0.1,0.5,0.05"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
