import json
import shutil
import subprocess
import sys

import pytest

from conftest import FIXTURES
from testmend.build import tree_hash
from testmend.cli import main

REPORTS = FIXTURES / "reports"


@pytest.fixture
def fx(tmp_path):
    """Private copy of the fixture tree so runs never touch the checked-in files."""
    root = tmp_path / "fx"
    shutil.copytree(FIXTURES, root, ignore=shutil.ignore_patterns("__pycache__", "*.py"))
    return root


def test_update_from_manifest(fx, tmp_path, capsys):
    out = tmp_path / "out"
    before = tree_hash(fx / "sniffy" / "post")
    code = main(["update", "--manifest", str(fx / "manifest.json"), "--replay-bundle", str(fx / "bundle"),
                 "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    rows = {r["id"]: r for r in summary["tasks"]}
    assert rows["sniffy"]["iterations_used"] == 3 and rows["wikidata"]["iterations_used"] == 2
    assert {r["terminated_by"] for r in rows.values()} == {"thresholds_met"}
    assert summary["metrics"]["tpr"] == 100.0
    assert json.loads((out / "sniffy.json").read_text())["status"] == "completed"
    assert tree_hash(fx / "sniffy" / "post") == before
    assert "2 task(s)" in capsys.readouterr().out


def test_parallel_jobs_give_same_traces(fx, tmp_path):
    args = ["update", "--manifest", str(fx / "manifest.json"), "--replay-bundle", str(fx / "bundle")]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for name in ("sniffy.json", "wikidata.json"):
        assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()


def test_missing_workspace_is_a_config_error(fx, tmp_path, capsys):
    manifest = json.loads((fx / "manifest.json").read_text())
    manifest["tasks"][0]["workspace"] = "nowhere"
    (fx / "manifest.json").write_text(json.dumps(manifest))
    code = main(["update", "--manifest", str(fx / "manifest.json"), "--replay-bundle", str(fx / "bundle"),
                 "--out", str(tmp_path / "out")])
    assert code == 2
    assert "tasks[0].workspace" in capsys.readouterr().err


def test_empty_manifest(fx, tmp_path):
    (fx / "empty.json").write_text('{"tasks": []}')
    out = tmp_path / "out"
    assert main(["update", "--manifest", str(fx / "empty.json"), "--replay-bundle", str(fx / "bundle"),
                 "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text()) == {"tasks": [], "metrics": None}


@pytest.mark.parametrize("config, key", [
    ({"session": {"max_iterations": 0}}, "session"),
    ({"sesion": {}}, "sesion"),
    ({"llm": {"backend": "http", "credential_env": "TESTMEND_NO_SUCH_VAR"}}, "llm.credential_env"),
])
def test_bad_config_exits_2(fx, tmp_path, capsys, config, key):
    manifest = json.loads((fx / "manifest.json").read_text())
    for t in manifest["tasks"]:
        t.pop("transcript")
    (fx / "manifest.json").write_text(json.dumps(manifest))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(config))
    code = main(["update", "--config", str(cfg), "--manifest", str(fx / "manifest.json"),
                 "--replay-bundle", str(fx / "bundle"), "--out", str(tmp_path / "o")])
    assert code == 2 and key in capsys.readouterr().err


def test_usage_error_exits_2():
    assert main(["update"]) == 2
    assert main(["frobnicate"]) == 2


def test_aborted_session_is_partial(fx, tmp_path):
    (fx / "sniffy" / "transcript.jsonl").write_text("")
    out = tmp_path / "out"
    code = main(["update", "--manifest", str(fx / "manifest.json"), "--replay-bundle", str(fx / "bundle"),
                 "--out", str(out)])
    assert code == 1
    assert json.loads((out / "sniffy.json").read_text())["status"] == "aborted"


def test_detect(fx, tmp_path):
    out = tmp_path / "verdicts.json"
    code = main(["detect", "--pre", str(fx / "sniffy" / "pre"), "--post", str(fx / "sniffy" / "merged"),
                 "--pre-snapshot", "pre", "--post-snapshot", "post", "--tests", str(fx / "detect" / "tests.json"),
                 "--replay-bundle", str(fx / "detect" / "test_failure"), "--out", str(out)])
    assert code == 0
    (v,) = json.loads(out.read_text())
    assert v["is_outdated"] is True and v["cause"] == "test_failure"


@pytest.mark.parametrize("mode, golden", [("coverage", "clamp_coverage.txt"), ("mutation", "clamp_mutation.txt")])
def test_annotate_matches_golden(capsys, mode, golden):
    report = REPORTS / ("jacoco_calculator.xml" if mode == "coverage" else "pit_calculator.xml")
    code = main(["annotate", "--report", str(report), "--source", str(REPORTS / "Calculator.java"),
                 "--method", "clamp", "--signature", "int,int", "--mode", mode])
    assert code == 0
    assert capsys.readouterr().out == (REPORTS / "golden" / golden).read_text()


def test_annotate_unknown_method(capsys):
    code = main(["annotate", "--report", str(REPORTS / "jacoco_calculator.xml"),
                 "--source", str(REPORTS / "Calculator.java"), "--method", "nope", "--mode", "coverage"])
    assert code == 2


def test_eval(fx, tmp_path, capsys):
    out = tmp_path / "out"
    main(["update", "--manifest", str(fx / "manifest.json"), "--replay-bundle", str(fx / "bundle"),
          "--out", str(out)])
    capsys.readouterr()
    assert main(["eval", "--traces", str(out), "--out", str(tmp_path / "m.json")]) == 0
    assert "CPR %" in capsys.readouterr().out
    assert json.loads((tmp_path / "m.json").read_text())["mutation_score"] == 100.0
    assert main(["eval", "--traces", str(tmp_path / "missing")]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "testmend", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "update" in proc.stdout
