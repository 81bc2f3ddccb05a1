import json
import os
from pathlib import Path

import pytest

from relustab.cli import main, run_experiment
from relustab.config import parse_config
from relustab.errors import ConfigError
from relustab.lipschitz_probe import DEFAULT_EPSILONS

CONFIGS = sorted((Path(__file__).parents[1] / "configs").glob("*.ini"))

MINIMAL = """
[experiment]
kind = lipschitz_sweep
x = 1
y = 1
"""


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.kind == "lipschitz_sweep" and cfg.layout.kind == "one_neuron"
    assert cfg.params["epsilons"] == DEFAULT_EPSILONS
    assert cfg.fmt == "both" and cfg.out is None


def test_zero_target_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL.replace("y = 1", "y = 0"))
    assert any("precondition" in m for m in info.value.problems)


def test_wrong_kind_key_rejected():
    text = MINIMAL + "[lipschitz_sweep]\nepsilons = 0.1, 0.01\nbetas = 10, 100\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert any("betas" in m for m in info.value.problems)


def test_all_problems_reported_together():
    text = """
[experiment]
kind = trajectory_perturb
colour = blue

[trajectory_perturb]
delta = -1
"""
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    msgs = "\n".join(info.value.problems)
    assert "colour" in msgs
    assert "x, y" in msgs
    assert "eta" in msgs
    assert "delta" in msgs


def test_unknown_kind_and_section():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("lipschitz_sweep", "grid_search"))
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "[surrogate_sweep]\nbetas = 10\n")
    assert any("surrogate_sweep" in m for m in info.value.problems)


def test_two_layer_layout_parsed():
    cfg = parse_config(
        "[experiment]\nkind = trajectory_perturb\nlayout = two_layer\nhidden = 3\nx = 1, 2\ny = 0.5\n"
        "[trajectory_perturb]\neta = 0.1\n"
    )
    assert cfg.layout.inputs == 2 and cfg.layout.hidden == 3
    assert cfg.datum.x == (1.0, 2.0)


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_validate_shipped_configs(path, capsys):
    assert main(["validate", "--config", str(path)]) == 0
    assert capsys.readouterr().out.startswith("ok:")


def test_validate_reports_problems(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text(MINIMAL.replace("y = 1", "y = 0"))
    assert main(["validate", "--config", str(bad)]) == 2
    assert "precondition" in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "missing.ini")]) == 2


def test_run_writes_expected_files(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    names = sorted(os.listdir(tmp_path / "o"))
    assert names == ["lipschitz_sweep.csv", "lipschitz_sweep.json", "summary.json"]
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["pass"] is True and summary["error"] is None
    assert abs(summary["headline"]["slope"] + 1) <= 0.01
    assert list(summary) == ["config", "pass", "checks", "headline", "error"]


def test_format_flag(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "csv"), "--format", "csv"])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "json"), "--format", "json"])
    assert sorted(os.listdir(tmp_path / "csv")) == ["lipschitz_sweep.csv", "summary.json"]
    assert sorted(os.listdir(tmp_path / "json")) == ["lipschitz_sweep.json", "summary.json"]


@pytest.mark.parametrize(
    "name, header",
    [
        ("lipschitz_sweep", "epsilon,numeric_ratio,analytic_ratio,eps_times_ratio"),
        ("surrogate_sweep", "beta,u_peak,sigma2_at_peak,residual,L_lower"),
    ],
)
def test_csv_headers(tmp_path, name, header):
    out = tmp_path / name
    assert main(["run", "--config", str(CONFIGS[0].parent / f"{name}.ini"), "--out", str(out)]) == 0
    text = (out / f"{name}.csv").read_text()
    assert text.split("\n", 1)[0] == header
    assert "\r" not in text and '"' not in text


def test_full_precision_floats(tmp_path):
    out = tmp_path / "o"
    main(["run", "--config", str(CONFIGS[0].parent / "surrogate_sweep.ini"), "--out", str(out)])
    row = (out / "surrogate_sweep.csv").read_text().splitlines()[1].split(",")
    assert float(row[4]) == pytest.approx(4.653426409720027, rel=1e-15)


def test_unwritable_output_leaves_nothing(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(MINIMAL)
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    out = blocker / "results"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) != 0
    assert not out.exists()
    assert "cannot write" in capsys.readouterr().err


def test_failed_write_cleans_staged_files(tmp_path, monkeypatch):
    import relustab._io as io_mod

    calls = {"n": 0}
    real = io_mod.os.fdopen

    def flaky(fd, *a, **k):
        calls["n"] += 1
        if calls["n"] == 2:
            os.close(fd)
            raise OSError("disk full")
        return real(fd, *a, **k)

    monkeypatch.setattr(io_mod.os, "fdopen", flaky)
    cfg = parse_config(MINIMAL)
    assert run_experiment(cfg, tmp_path / "o") == 2
    assert os.listdir(tmp_path / "o") == []


def test_module_error_lands_in_summary(tmp_path):
    # the curvature peak of softplus is at 0, outside this interval
    cfg = parse_config(
        "[experiment]\nkind = surrogate_sweep\nx = 1\ny = 1\n[surrogate_sweep]\nsearch_interval = 0.5, 2\n"
    )
    assert run_experiment(cfg, tmp_path) == 1
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["pass"] is False and summary["error"]["type"] == "SearchError"


def test_crossing_config_marks_bound_inapplicable(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(CONFIGS[0].parent / "crossing_obstruction.ini"), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["headline"]["bound_status"] == "inapplicable"
    assert summary["headline"]["step1_separation_ratio"] > 1


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_reruns_are_byte_identical(path, tmp_path):
    for run in ("a", "b"):
        main(["run", "--config", str(path), "--out", str(tmp_path / run)])
    files = sorted(os.listdir(tmp_path / "a"))
    assert files == sorted(os.listdir(tmp_path / "b"))
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
