import copy
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from abconformal import __version__
from abconformal.checks import CheckReport
from abconformal.cli import (SCENARIO_SCHEMA_ID, ScenarioError, build_scenario, main, run_scenario,
                             validate_scenario)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
VALID = sorted(SCENARIOS.glob("*.json"))

FLAT = {
    "schema": SCENARIO_SCHEMA_ID,
    "name": "flat",
    "n": 3,
    "metric": {"kind": "euclidean"},
    "one_form": {"kind": "constant", "b": [0.3, 0.0, 0.0]},
    "vector_field": {"family": "thm2_i", "params": {"tau": 0.1, "e": [0.3, 0.0, 0.0],
                                                    "Q": [[0, 0, 0], [0, 0, 0.2], [0, -0.2, 0]]}},
    "phi": {"kind": "randers"},
    "checks": ["ab_system", "finsler", "flow"],
    "sampling": {"count": 50, "seed": 42},
}


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


@pytest.mark.parametrize("path", VALID, ids=lambda p: p.stem)
def test_shipped_scenarios_pass(capsys, path):
    code, out, err = run(capsys, "verify", str(path))
    report = json.loads(out)
    assert code == 0, err
    assert report["passed"] is True
    assert all(c["passed"] for c in report["checks"])
    assert report["version"] == __version__
    assert "overall: PASS" in err


def test_flat_scenario_passes(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", write(tmp_path, FLAT))
    assert code == 0
    assert [c["name"] for c in json.loads(out)["checks"]] == ["ab_system", "finsler", "flow"]


def test_constraint_violation_exits_2(capsys):
    code, out, err = run(capsys, "verify", str(SCENARIOS / "invalid" / "rotation_moves_e.json"))
    assert code == 2 and out == ""
    assert "Qe=0" in err and "vector_field.params" in err


@pytest.mark.parametrize("name,field", [("zero_sample_count", "sampling.count"), ("missing_phi", "phi")])
def test_shipped_invalid_scenarios_name_the_field(capsys, name, field):
    code, _, err = run(capsys, "verify", str(SCENARIOS / "invalid" / f"{name}.json"))
    assert code == 2 and err.startswith(f"error: {field}")


@pytest.mark.parametrize("mutate,where", [
    (lambda d: d.pop("n"), "n"),
    (lambda d: d["sampling"].update(count=0), "sampling.count"),
    (lambda d: d.update(tolerance=-1.0), "tolerance"),
    (lambda d: d["vector_field"].update(family="nope"), "vector_field.family"),
    (lambda d: d.update(checks=["no_such_check"]), "checks"),
    (lambda d: d["metric"].update(kind="spherical"), "metric.kind"),
    (lambda d: d.update(schema="other/2"), "schema"),
])
def test_invalid_documents_are_reported_with_path(capsys, tmp_path, mutate, where):
    doc = copy.deepcopy(FLAT)
    mutate(doc)
    with pytest.raises(ScenarioError) as err:
        build_scenario(validate_scenario(doc) or doc)
    assert err.value.path.startswith(where)
    code, _, msg = run(capsys, "verify", write(tmp_path, doc))
    assert code == 2 and where in msg


def test_unreadable_file_exits_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "verify", str(bad))[0] == 2
    assert run(capsys, "verify", str(tmp_path / "missing.json"))[0] == 2


def test_failing_check_exits_1(capsys, tmp_path):
    doc = copy.deepcopy(FLAT)
    doc["vector_field"]["params"]["tau"] = 0.1
    doc["one_form"]["b"] = [0.0, 0.3, 0.0]          # form no longer fixed by the rotation
    code, out, err = run(capsys, "verify", write(tmp_path, doc))
    assert code == 1
    report = json.loads(out)
    assert report["passed"] is False
    assert "overall: FAIL" in err


def test_domain_error_marks_check_failed_and_continues(capsys, tmp_path):
    doc = copy.deepcopy(FLAT)
    doc["vector_field"] = {"family": "closed_ii", "params": {"lambda": 0.3, "mu": 1.0, "e": [0.1, 0, 0]}}
    doc["metric"] = {"kind": "cc_conformal", "mu": 1.0}
    doc["checks"] = ["flow", "riemann"]
    code, out, _ = run(capsys, "verify", write(tmp_path, doc))
    report = json.loads(out)
    assert code == 1
    flow, riem = report["checks"]
    assert flow["passed"] is False and "error" in flow["details"]
    assert riem["passed"] is True


def test_runs_are_deterministic(capsys):
    path = str(SCENARIOS / "killing_projective_pair.json")
    _, out1, _ = run(capsys, "verify", path)
    _, out2, _ = run(capsys, "verify", path)
    r1, r2 = json.loads(out1), json.loads(out2)
    assert [c["residuals"] for c in r1["checks"]] == [c["residuals"] for c in r2["checks"]]


def test_flags_override_scenario(capsys, tmp_path):
    path = write(tmp_path, FLAT)
    _, out, _ = run(capsys, "verify", path, "--samples", "7", "--seed", "3", "--check", "finsler")
    report = json.loads(out)
    assert [c["name"] for c in report["checks"]] == ["finsler"]
    assert report["checks"][0]["sample_count"] == 7 and report["checks"][0]["seed"] == 3
    code, out, _ = run(capsys, "verify", path, "--tolerance", "1e-30", "--check", "finsler")
    assert code == 1 and json.loads(out)["checks"][0]["tolerance"] == 1e-30
    assert run(capsys, "verify", path, "--check", "kang")[0] == 2
    assert run(capsys, "verify", path, "--samples", "0")[0] == 2
    assert run(capsys, "verify", path, "--tolerance", "0")[0] == 2


def test_report_round_trips(capsys):
    _, out, _ = run(capsys, "verify", str(SCENARIOS / "projectively_flat_randers.json"))
    report = json.loads(out)
    assert json.loads(json.dumps(report)) == report
    for c in report["checks"]:
        assert CheckReport.from_dict(c).to_dict() == c
    assert report["passed"] == all(c["passed"] for c in report["checks"])
    assert report["schema"] == "abconformal.report/1"


def test_run_scenario_api():
    sc = build_scenario(copy.deepcopy(FLAT))
    report = run_scenario(sc)
    assert report["passed"] and report["scenario"]["name"] == "flat"


def test_catalog_table(capsys):
    code, out1, _ = run(capsys, "catalog")
    _, out2, _ = run(capsys, "catalog")
    assert code == 0 and out1 == out2
    rows = out1.strip().splitlines()[1:]
    assert len(rows) >= 10
    names = {r.split()[0] for r in rows}
    assert {"thm2_i", "thm2_ii", "prop52"} <= names


@pytest.mark.skipif(shutil.which("abconformal") is None, reason="console script not installed")
def test_console_script():
    done = subprocess.run(["abconformal", "catalog"], capture_output=True, text=True)
    assert done.returncode == 0 and "thm2_ii" in done.stdout
    done = subprocess.run([sys.executable, "-m", "abconformal.cli", "verify",
                           str(SCENARIOS / "invalid" / "rotation_moves_e.json")], capture_output=True, text=True)
    assert done.returncode == 2
