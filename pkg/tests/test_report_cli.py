import json
import subprocess
import sys
from fractions import Fraction as F

import pytest

from sponge_iso.cli import main
from sponge_iso.report import EXIT_CONFIG, EXIT_OK, EXIT_TASK, TASKS, parse_rational, run


def _walk(obj):
    if isinstance(obj, dict):
        yield obj
        for v in obj.values():
            yield from _walk(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _walk(v)


def test_build_example():
    b = run({"sponge": {"d": 2, "n": [3], "k": 1}, "tasks": ["build"]})
    res = b.report["tasks"][0]["result"]
    assert b.exit_code == EXIT_OK
    assert res["occupied"] == 8
    assert res["measure"] == {"kind": "exact-rational", "value": "8/9"}


def test_check_sparse_example():
    b = run({"sponge": {"d": 2, "n": [3, 5]}, "tasks": ["build", "check-sparse"]})
    ds = b.report["tasks"][1]["result"]["delta_star"]
    assert parse_rational(ds) >= F(1, 3)


def test_malformed_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"sponge": {"d": 2, "n": [3]}, "tasks": ["build"], "bogus": 1}))
    code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "out"), "--quiet"])
    assert code == EXIT_CONFIG
    err = json.loads((tmp_path / "out" / "error.json").read_text())
    assert err["kind"] == "config-error" and "bogus" in err["field"]


def test_bad_field_value_is_named(tmp_path):
    code = main(["build", "--n", "3,x", "--d", "2", "--out", str(tmp_path), "--quiet"])
    assert code == EXIT_CONFIG
    assert json.loads((tmp_path / "error.json").read_text())["field"] == "sponge.n"
    b = run({"sponge": {"d": 2, "n": [3]}, "tasks": [{"name": "build"}], "precision": 3})
    assert b.exit_code == EXIT_CONFIG and b.error["field"] == "precision"


def test_task_failure_exit_code():
    b = run({"sponge": {"d": 2, "n": [3]}, "tasks": [{"name": "tau-scan", "params": {"tau": "3/4"}}]})
    assert b.exit_code == EXIT_TASK
    assert b.error["task"] == "tau-scan" and b.report["status"] == "task-error"


CONFIG = {
    "sponge": {"d": 2, "n": [3, 3]},
    "seed": 11,
    "tasks": ["build", "check-sparse", "check-projections", "summability", "measure", "slice", "theta",
              "ahlfors", "iso-ratio", {"name": "iso-search", "params": {"budget": 30}}, "tau-scan",
              "constants", "poincare", "render"],
}


def test_every_task_runs():
    b = run(CONFIG)
    assert b.exit_code == EXIT_OK, b.error
    assert [t["task"] for t in b.report["tasks"]] == list(TASKS)


def test_double_run_is_byte_identical(tmp_path):
    cfg = {**CONFIG, "tasks": CONFIG["tasks"] + [{"name": "theta", "params": {"set": {"type": "random"}}}]}
    a, b = run(cfg), run(cfg)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    for name in sorted(p.name for p in (tmp_path / "a").iterdir()):
        if name == "metadata.json":
            continue
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    assert "started" not in a.report_text()


def test_every_number_is_tagged_and_rationals_round_trip():
    b = run(CONFIG)
    kinds = set()
    for node in _walk(b.report):
        kind = node.get("kind")
        if kind == "exact-rational":
            v = F(node["value"])
            assert str(v) == node["value"]
            assert parse_rational(node) == v
        if kind in ("exact-rational", "certified-interval", "float-estimate"):
            kinds.add(kind)
    assert {"exact-rational", "certified-interval"} <= kinds


def test_cli_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sponge": {"d": 2, "n": [3, 5]}, "seed": 4,
                               "tasks": [{"name": "slice", "params": {"axis": 1, "offset": "1/3"}}]}))
    assert main(["slice", "--config", str(cfg), "--n", "3", "--param", "offset=\"1/2\"",
                 "--out", str(tmp_path / "o")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["config"]["sponge"]["n"] == [3]
    assert rep["config"]["seed"] == 4
    params = rep["config"]["tasks"][0]["params"]
    assert params == {"axis": 1, "offset": "1/2"}
    assert (tmp_path / "o" / "report.json").exists()


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "sponge_iso.cli", "build", "--d", "2", "--n", "3",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["tasks"][0]["result"]["occupied"] == 8
    assert (tmp_path / "sponge.txt").read_text().startswith("SPONGE v1")
