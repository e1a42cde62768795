import csv
import json

import pytest

from intercurv import cli, verify


def _cfg(tmp_path, data, name="cfg"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(data))
    return str(path)


ENGINE = {"family": "engine", "checks": ["engine_sphere"]}


def test_list(capsys):
    assert cli.main(["--list"]) == 0
    out = capsys.readouterr().out
    for fam in verify.FAMILIES:
        assert fam in out
    assert "default_suite" in out


def test_no_command_is_a_usage_error(capsys):
    assert cli.main([]) == 2


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", _cfg(tmp_path, ENGINE), "--out", str(out)]) == 0
    for name in ("report.json", "timing.json", "summary.md"):
        assert (out / name).is_file()
    doc = json.loads((out / "report.json").read_text())
    assert doc["summary"]["failed"] == [] and doc["summary"]["reports"] == 1
    assert "PASS engine_sphere" in capsys.readouterr().out
    assert "runtime" not in (out / "report.json").read_text()


def test_nonpositive_warp_is_a_config_error(tmp_path, capsys):
    cfg = {"family": "torus_sphere", "params": {"m": 3, "k": 5, "F": "0.5*sin(2*pi*x1)"}}
    assert cli.main(["run", _cfg(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "positiv" in capsys.readouterr().err


def test_unknown_keys_are_config_errors(tmp_path, capsys):
    assert cli.main(["run", _cfg(tmp_path, {"family": "engine", "colour": "blue"})]) == 2
    assert cli.main(["run", _cfg(tmp_path, {"family": "engine", "tolerances": {"nope": 1.0}})]) == 2
    assert cli.main(["run", _cfg(tmp_path, {"family": "nope"})]) == 2
    assert cli.main(["run", "no_such_config"]) == 2
    assert cli.main(["run", _cfg(tmp_path, ENGINE), "--check", "bogus"]) == 2


def test_check_filter(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "quick_suite", "--out", str(out), "--check", "dim_constants,cot_barrier"]) == 0
    doc = json.loads((out / "report.json").read_text())
    ids = [r["check_id"] for run in doc["runs"] for r in run["reports"]]
    assert ids == ["dim_constants", "cot_barrier"]


def test_failing_check_exits_one(tmp_path):
    cfg = {"family": "torus_sphere", "params": {"m": 3, "k": 5, "F": "2+0.5*cos(2*pi*x1)"}, "checks": ["ts_metric_variation"]}
    assert cli.main(["run", _cfg(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1


def test_internal_error_exits_three(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(verify, "check_family", boom)
    assert cli.main(["run", _cfg(tmp_path, ENGINE), "--out", str(tmp_path / "o")]) == 3


def test_scan_csv(tmp_path):
    cfg = {"family": "biricci_plane", "params": {"sphere_dim": 5}, "checks": ["br_scan"], "grid": "coarse", "starts": 8}
    out = tmp_path / "o"
    assert cli.main(["run", _cfg(tmp_path, cfg), "--out", str(out)]) == 0
    with (out / "scan_br_scan.csv").open() as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    assert header[:2] == ["t", "r"] and "min_cm" in header
    assert len(header) == 7 + 1 + 2 * 7
    assert len(rows) > 1
    assert "scan_br_scan.csv" in (out / "summary.md").read_text()


def test_reports_are_byte_identical(tmp_path):
    cfg = _cfg(tmp_path, {"family": "warped_cylinder", "params": {"n": 5, "beta": 1.0, "branch": "C2_zero"}, "grid": "coarse"})
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", cfg, "--out", str(a), "--seed", "5"]) == 0
    assert cli.main(["run", cfg, "--out", str(b), "--seed", "5"]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_seed_range_checked(tmp_path):
    assert cli.main(["run", _cfg(tmp_path, ENGINE), "--seed", str(2**64)]) == 2


def test_bundled_configs_parse():
    for name in cli.bundled_configs():
        _, cfg = cli.load_config(name)
        assert cfg is not None


def test_suite_overrides_seed_and_grid():
    _, cfg = cli.load_config("quick_suite")
    runs = cli._runs(cfg, 11, None)
    assert all(r.seed == 11 and r.grid == "coarse" for r in runs)


@pytest.mark.parametrize("bad", [{"family": "engine", "starts": 0}, {"family": "engine", "grid": "huge"}])
def test_schema_bounds(tmp_path, bad):
    assert cli.main(["run", _cfg(tmp_path, bad)]) == 2
