"""Command line surface: exit codes, file outputs, determinism."""

import json
from importlib import resources

import pytest
from click.testing import CliRunner

from obdgate.cli import main


def bundled(name: str) -> str:
    return str(resources.files("obdgate").joinpath(f"data/scenarios/{name}"))


@pytest.fixture
def runner():
    return CliRunner()


# --- run ---


def test_run_dos_scenario_passes(runner, tmp_path):
    out = tmp_path / "report.json"
    result = runner.invoke(main, ["run", "--scenario", bundled("dos.json"), "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["passed"] is True
    assert report["schema_version"] == 1
    forwarded = {r["metric"]: r["value"] for r in report["metrics"]}["gateway.atk-1.forwarded"]
    assert forwarded <= 61


def test_run_json_format_prints_report(runner):
    result = runner.invoke(
        main, ["run", "--scenario", bundled("pipeline_cost.json"), "--format", "json"]
    )
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["name"] == "pipeline_cost" and report["passed"]


def test_run_exit_1_on_failed_expectation(runner, tmp_path):
    doc = {
        "partition": {"placements": ["smartcore"]},
        "expectations": [{"metric": "partition.smartcore.dtr", "op": "<=", "value": 0.1}],
    }
    p = tmp_path / "fail.json"
    p.write_text(json.dumps(doc))
    result = runner.invoke(main, ["run", "--scenario", str(p)])
    assert result.exit_code == 1
    assert "FAIL" in result.output


def test_run_exit_2_on_missing_file_reference(runner, tmp_path):
    p = tmp_path / "refs.json"
    p.write_text(json.dumps({"gateway": {"trace": "gone.csv", "principals": []}}))
    result = runner.invoke(main, ["run", "--scenario", str(p)])
    assert result.exit_code == 2
    assert "gone.csv" in result.output


def test_run_exit_2_with_line_number_on_bad_json(runner, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "name": nope\n}')
    result = runner.invoke(main, ["run", "--scenario", str(p)])
    assert result.exit_code == 2
    assert "bad.json:2" in result.output


def test_run_writes_results_csv(runner, tmp_path):
    doc = {"attack": {"traces": 1, "seeds": 1, "algs": [{"alg": "identity"}]}}
    p = tmp_path / "atk.json"
    p.write_text(json.dumps(doc))
    csv_path = tmp_path / "rows.csv"
    result = runner.invoke(main, ["run", "--scenario", str(p), "--results", str(csv_path)])
    assert result.exit_code == 0, result.output
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "trace_id,alg,params,seed,error_ratio,utility_degradation"
    assert len(lines) == 2


def test_run_seed_override(runner, tmp_path):
    out = tmp_path / "r.json"
    result = runner.invoke(
        main,
        ["run", "--scenario", bundled("pipeline_cost.json"), "--seed", "42", "--out", str(out)],
    )
    assert result.exit_code == 0
    assert json.loads(out.read_text())["seed"] == 42


def test_run_reports_are_deterministic(runner, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        result = runner.invoke(main, ["run", "--scenario", bundled("dos.json"), "--out", str(out)])
        assert result.exit_code == 0
        doc = json.loads(out.read_text())
        doc.pop("generated_at")
        outs.append(json.dumps(doc, sort_keys=True))
    assert outs[0] == outs[1]


# --- calibrate ---


def test_calibrate_bundled_fixtures(runner, tmp_path):
    out = tmp_path / "model.json"
    result = runner.invoke(main, ["calibrate", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "calibration ok" in result.output
    doc = json.loads(out.read_text())
    assert doc["ok"] is True and doc["max_rel_error"] <= 0.05
    assert "model" in doc and "resources" in doc


def test_calibrate_refit_is_idempotent(runner, tmp_path):
    texts = []
    for name in ("m1.json", "m2.json"):
        out = tmp_path / name
        result = runner.invoke(main, ["calibrate", "--out", str(out)])
        assert result.exit_code == 0
        texts.append(out.read_text())
    assert texts[0] == texts[1]


def test_calibrate_missing_fixture_exits_2(runner):
    result = runner.invoke(main, ["calibrate", "--fixtures", "/no/such/file.json"])
    assert result.exit_code == 2


def test_calibrate_unattainable_fit_exits_1(runner, tmp_path):
    doc = {
        "scenario": {"fps": 1, "duration_s": 600, "t_appearance_s": 540},
        "observations": [
            {"kind": "dtr", "placement": "smartcore", "resolution": "720p", "cpu_mhz": 600, "value": 5.7},
            {"kind": "dtr", "placement": "smartcore", "resolution": "720p", "cpu_mhz": 600, "value": 50.0},
        ],
    }
    p = tmp_path / "fix.json"
    p.write_text(json.dumps(doc))
    result = runner.invoke(main, ["calibrate", "--fixtures", str(p)])
    assert result.exit_code == 1
    assert "over tolerance" in result.output


# --- policy ---


NEW_DOCS = [
    {
        "principal": "ins-1",
        "profile": "insurance",
        "policies": [
            {
                "id": "usr:ins-1:home-deny",
                "resource": ["0x0D"],
                "effect": "deny",
                "priority": 50,
                "context": {"location_class": "home"},
            }
        ],
    }
]


def test_policy_add_then_list(runner, tmp_path):
    docs = tmp_path / "new.json"
    docs.write_text(json.dumps(NEW_DOCS))
    store = tmp_path / "pol.json"
    result = runner.invoke(main, ["policy", "--file", str(store), "add", str(docs)])
    assert result.exit_code == 0, result.output
    result = runner.invoke(main, ["policy", "--file", str(store), "list"])
    rows = json.loads(result.output)
    assert [r["id"] for r in rows] == ["usr:ins-1:home-deny"]
    # the file itself round-trips the document format
    saved = json.loads(store.read_text())
    assert saved[0]["principal"] == "ins-1" and saved[0]["profile"] == "insurance"


def test_policy_list_empty_store(runner, tmp_path):
    result = runner.invoke(main, ["policy", "--file", str(tmp_path / "none.json"), "list"])
    assert result.exit_code == 0
    assert json.loads(result.output) == []


def test_policy_rm_predefined_refused(runner, tmp_path):
    docs = tmp_path / "new.json"
    docs.write_text(json.dumps(NEW_DOCS))
    store = tmp_path / "pol.json"
    runner.invoke(main, ["policy", "--file", str(store), "add", str(docs)])
    result = runner.invoke(main, ["policy", "--file", str(store), "rm", "pre:ins-1:0"])
    assert result.exit_code == 1
    assert "predefined" in result.output


def test_policy_rm_user_policy(runner, tmp_path):
    docs = tmp_path / "new.json"
    docs.write_text(json.dumps(NEW_DOCS))
    store = tmp_path / "pol.json"
    runner.invoke(main, ["policy", "--file", str(store), "add", str(docs)])
    result = runner.invoke(main, ["policy", "--file", str(store), "rm", "usr:ins-1:home-deny"])
    assert result.exit_code == 0, result.output
    result = runner.invoke(main, ["policy", "--file", str(store), "list"])
    assert json.loads(result.output) == []


def test_policy_duplicate_add_rejected(runner, tmp_path):
    docs = tmp_path / "new.json"
    docs.write_text(json.dumps(NEW_DOCS))
    store = tmp_path / "pol.json"
    assert runner.invoke(main, ["policy", "--file", str(store), "add", str(docs)]).exit_code == 0
    result = runner.invoke(main, ["policy", "--file", str(store), "add", str(docs)])
    assert result.exit_code == 1
    assert "duplicate" in result.output
