import json
from pathlib import Path

import pytest

from nlparabolic import acceptance, cli
from nlparabolic.acceptance import CriterionResult

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_shipped_barrier_config_passes(tmp_path):
    assert cli.main(["verify-barrier", "--config", str(CONFIGS / "verify_barrier_19.json"),
                     "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["passed"] and rep["provenance"]["kernel_hash"]
    assert (tmp_path / "resolved_config.json").exists()


def test_malformed_config_reports_field_path(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", {"problem": {"sigma": "abc"}})
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "problem.sigma" in capsys.readouterr().err


def test_unknown_field_rejected(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", {"barrier": {"sigma": 1.9, "colour": 1}})
    assert cli.main(["verify-barrier", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "barrier.colour" in capsys.readouterr().err


def test_include_cycle_detected(tmp_path, capsys):
    write(tmp_path, "a.json", {"$include": "b.json"})
    write(tmp_path, "b.json", {"$include": "a.json"})
    assert cli.main(["solve", "--config", str(tmp_path / "a.json"), "--out", str(tmp_path / "o")]) == 1
    assert "cycle" in capsys.readouterr().err.lower()


def test_include_merges_and_overrides(tmp_path):
    write(tmp_path, "base.json", {"sigma": 1.2, "lam": 0.5})
    cfg = cli.load_config(write(tmp_path, "top.json", {"problem": {"$include": "base.json", "lam": 0.7}}))
    assert cfg.problem.sigma == 1.2 and cfg.problem.lam == 0.7


def test_failed_search_exits_two(tmp_path):
    grid = {"alpha_scale": [1.0], "gamma": [1.0], "beta": [0.0], "delta": [0.5], "tau": [0.05]}
    cfg = write(tmp_path, "vb.json", {"barrier": {"sigma": 0.3, "h_x": 1 / 64, "confirm_h_x": None, "grid": grid}})
    assert cli.main(["verify-barrier", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert json.loads((tmp_path / "o" / "report.json").read_text())["failures"]


def test_empty_suite_passes(tmp_path):
    cfg = write(tmp_path, "s.json", {"matrix": []})
    assert cli.main(["suite", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "suite_report.json").read_text())
    assert rep["report"]["count"] == 0 and rep["passed"]


def test_failing_suite_item_propagates(tmp_path, monkeypatch):
    def failing(seed=0):
        return CriterionResult(1, "forced failure", False, {}, 1.0)

    monkeypatch.setitem(acceptance.CRITERIA, 1, failing)
    cfg = write(tmp_path, "s.json", {"matrix": [{"id": 1}]})
    assert cli.main(["suite", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_suite_rejects_unknown_parameters(tmp_path):
    cfg = write(tmp_path, "s.json", {"matrix": [{"id": 1, "bogus": 3}]})
    assert cli.main(["suite", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_solve_is_deterministic(tmp_path):
    cfg = write(tmp_path, "p.json", {"problem": {"sigma": 1.5, "h_x": 0.125, "T": 0.1,
                                                 "initial": {"type": "checkerboard", "width": 0.25}}})
    for d in ("a", "b"):
        assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    assert (tmp_path / "a" / "trajectory.bin").read_bytes() == (tmp_path / "b" / "trajectory.bin").read_bytes()


def test_seed_override_recorded(tmp_path):
    cfg = write(tmp_path, "c.json", {"cz": {"count": 5}})
    assert cli.main(["cz-demo", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "resolved_config.json").read_text())["seed"] == 7


def test_dumps_handles_non_finite():
    assert json.loads(cli.dumps({"a": float("inf")}))["a"] == "inf"


@pytest.mark.parametrize("name,command", [("cz_demo.json", "cz-demo"), ("envelope_oracle.json", "envelope"),
                                          ("weak_harnack_positive.json", "weak-harnack")])
def test_shipped_configs_run(tmp_path, name, command):
    assert cli.main([command, "--config", str(CONFIGS / name), "--out", str(tmp_path), "--svg"]) == 0
