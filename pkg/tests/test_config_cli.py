from __future__ import annotations

import json
import math
from pathlib import Path

import pytest
import yaml

from contmeas.cli import main
from contmeas.config import config_hash, load_config, validate
from contmeas.errors import ConfigError
from contmeas.report import Report, emit_report, render_csv

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))

SMALL = {
    "master": {"horizon": 0.2, "stride": 10, "grid": {"n_points": 64, "q_min": -8.0, "q_max": 8.0},
               "master": {"dt": 0.01}},
    "discrete": {"horizon": 0.2, "stride": 5, "trajectories": 6, "chunk_size": 2,
                 "discrete": {"delta_t": 0.02}},
    "sde": {"horizon": 0.05, "stride": 10, "trajectories": 5, "chunk_size": 2, "sde": {"dt": 0.001}},
    "converge": {"grid": {"n_points": 256}, "initial": {"cov_qp": 0.3},
                 "converge": {"delta_ts": [0.01, 0.001], "samples": 3000, "tolerance": 0.2}},
    "ensemble": {"horizon": 0.05, "stride": 25, "trajectories": 8, "chunk_size": 3, "sde": {"dt": 0.001}},
    "record-scaling": {"horizon": 0.1, "trajectories": 12, "chunk_size": 5, "sde": {"dt": 0.001},
                       "record_scaling": {"windows": [0.01, 0.02], "min_records": 10}},
}


def _write(tmp_path, name, cfg):
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_defaults_are_filled():
    cfg = validate({"experiment": "discrete"})
    assert cfg["seed"] == 0
    assert cfg["grid"] == {"n_points": 128, "q_min": -12.0, "q_max": 12.0}
    # alpha defaults to gamma * delta_t
    assert cfg["discrete"]["alpha"] == pytest.approx(0.01)


@pytest.mark.parametrize("raw,field", [
    ({"experiment": "master", "model": {"mas": 1.0}}, "model.mas"),
    ({"experiment": "master", "model": {"mass": -1.0}}, "model.mass"),
    ({"experiment": "master", "stride": 1.5}, "stride"),
    ({"experiment": "master", "colour": 1}, "colour"),
    ({"experiment": "tea"}, "experiment"),
    ({}, "experiment"),
    ({"experiment": "sde", "sde": {"kind": "mixed"}}, "sde.beta"),
    ({"experiment": "converge", "converge": {"delta_ts": [0.001, 0.01]}}, "converge.delta_ts"),
    ({"experiment": "converge", "converge": {"delta_ts": [0.01, "x"]}}, "converge.delta_ts[1]"),
    ({"experiment": "ensemble", "trajectories": 1}, "trajectories"),
    ({"experiment": "record-scaling", "model": {"gamma": 0.0}}, "model.gamma"),
    ({"experiment": "master", "grid": {"q_min": 1.0, "q_max": 0.0}}, "grid.q_max"),
    ({"experiment": "master", "output": {"figures": "yes"}}, "output.figures"),
])
def test_invalid_configs_name_the_field(raw, field):
    with pytest.raises(ConfigError) as info:
        validate(raw)
    assert info.value.field == field
    assert str(info.value).startswith(f"{field}: ")


def test_config_hash_ignores_output_only():
    a = validate({"experiment": "master"})
    b = validate({"experiment": "master", "output": {"dir": "elsewhere"}})
    c = validate({"experiment": "master", "seed": 1})
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert len(config_hash(a)) == 16


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_configs_validate(path):
    cfg = load_config(path)
    assert cfg["experiment"] in path.stem.replace("_", "-")


def test_load_config_rejects_bad_yaml(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: [master\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_render_csv_header_and_nan():
    rep = Report("master", "abc", 3)
    table = rep.table("series", ("t", "x"))
    table.add(0.0, math.nan)
    text = render_csv(rep, table)
    lines = text.splitlines()
    assert lines[0] == "# config_hash=abc seed=3 code_version=0.1.0"
    assert lines[1] == "t,x"
    assert lines[2] == "0.0,nan"
    with pytest.raises(ValueError):
        table.add(1.0)


def test_empty_report_is_written(tmp_path):
    rep = Report("master", "abc", 0)
    paths = emit_report(rep, tmp_path, figures=True)
    names = sorted(p.name for p in paths)
    assert names == ["summary.json", "summary.txt", "trajectories.jsonl"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["all_passed"] is True and summary["checks"] == []
    assert "(none)" in (tmp_path / "summary.txt").read_text()


def test_report_status_and_json_nan(tmp_path):
    rep = Report("converge", "abc", 0)
    rep.check("a", 1.0, 1.0, "exact", True)
    rep.check("b", math.nan, 0.0, "reported", None)
    rep.check("c", 2.0, 1.0, "exact", False)
    assert [c.status for c in rep.checks] == ["PASS", "REPORT", "FAIL"]
    assert not rep.all_passed
    emit_report(rep, tmp_path, figures=False)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["checks"][1]["measured"] is None


@pytest.mark.parametrize("experiment", list(SMALL))
def test_cli_runs_every_experiment(tmp_path, experiment, capsys):
    cfg = dict(SMALL[experiment], experiment=experiment)
    out = tmp_path / "out"
    code = main([experiment, "--config", str(_write(tmp_path, experiment, cfg)), "--out", str(out)])
    printed = capsys.readouterr().out
    assert code == 0, printed
    # the stochastic smoke runs are too small for their statistics to bind
    if experiment == "master":
        assert "FAIL" not in printed
    summary = json.loads((out / "summary.json").read_text())
    assert summary["experiment"] == experiment
    assert summary["checks"]
    for csv_path in out.glob("*.csv"):
        assert csv_path.read_text().startswith(f"# config_hash={summary['config_hash']} seed=")
    assert (out / "trajectories.jsonl").read_text().startswith('{"header": ')
    assert list((out / "figures").glob("*.png"))


def test_cli_defaults_without_config(tmp_path):
    assert main(["master", "--out", str(tmp_path), "--no-figures"]) == 0
    assert not (tmp_path / "figures").exists()


@pytest.mark.parametrize("experiment", ["discrete", "ensemble"])
def test_cli_outputs_independent_of_threads(tmp_path, experiment):
    cfg = dict(SMALL[experiment], experiment=experiment, seed=17)
    path = _write(tmp_path, experiment, cfg)
    outs = []
    for threads in (1, 4):
        out = tmp_path / f"t{threads}"
        assert main([experiment, "--config", str(path), "--out", str(out), "--threads", str(threads),
                     "--no-figures"]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert files == sorted(p.name for p in outs[1].iterdir())
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_seed_override_changes_results(tmp_path):
    path = _write(tmp_path, "d", dict(SMALL["discrete"], experiment="discrete"))
    for seed in (1, 2):
        assert main(["discrete", "--config", str(path), "--seed", str(seed), "--out", str(tmp_path / str(seed)),
                     "--no-figures"]) == 0
    a = (tmp_path / "1" / "trajectories.jsonl").read_text()
    b = (tmp_path / "2" / "trajectories.jsonl").read_text()
    assert a != b


def test_cli_config_errors_exit_1(tmp_path, capsys):
    path = _write(tmp_path, "bad", {"experiment": "master", "model": {"mass": 0.0}})
    assert main(["master", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "model.mass" in capsys.readouterr().err
    # subcommand and config disagree
    path = _write(tmp_path, "other", {"experiment": "sde"})
    assert main(["master", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert main(["master", "--config", str(tmp_path / "missing.yaml")]) == 1
    assert main(["master", "--threads", "0"]) == 1
    # horizon not a multiple of the step
    path = _write(tmp_path, "h", {"experiment": "master", "horizon": 0.013, "master": {"dt": 0.005}})
    assert main(["master", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "horizon" in capsys.readouterr().err


def test_cli_simulation_errors_exit_2(tmp_path, capsys):
    # a packet sitting next to the grid edge
    path = _write(tmp_path, "leak", {"experiment": "master", "initial": {"mean_q": 11.0}})
    assert main(["master", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "BoundaryLeak" in capsys.readouterr().err
    # too few records for the scaling fit
    path = _write(tmp_path, "few", {"experiment": "record-scaling", "horizon": 0.1, "sde": {"dt": 0.001}})
    assert main(["record-scaling", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "InsufficientSamples" in capsys.readouterr().err
