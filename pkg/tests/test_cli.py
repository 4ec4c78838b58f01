import csv

import pytest

from rqnn import cli
from rqnn.errors import InvalidArgument
from rqnn.experiments import (DEFAULTS, EXPERIMENTS, ExperimentConfig, make_config, parse_config_text,
                              run_experiment)


def test_config_parsing():
    vals = parse_config_text("""
    # comment
    trials = 5
    n_list = 8, 16,32
    R = mass   # trailing comment
    slack = 2.5
    """)
    assert vals == {"trials": 5, "n_list": [8, 16, 32], "R": "mass", "slack": 2.5}
    with pytest.raises(InvalidArgument):
        parse_config_text("no equals sign")


def test_config_validation():
    with pytest.raises(InvalidArgument):
        ExperimentConfig("nope")
    with pytest.raises(InvalidArgument):
        ExperimentConfig("rate-sweep")                      # seed is mandatory for sweeps
    with pytest.raises(InvalidArgument):
        ExperimentConfig("lemma1-memory", params={"bogus": 1})
    with pytest.raises(InvalidArgument):
        ExperimentConfig("rate-sweep", seed=0, params={"trials": 0})
    with pytest.raises(InvalidArgument):
        ExperimentConfig("rate-sweep", seed=0, params={"box_lo": 1.0, "box_hi": 1.0})
    assert ExperimentConfig("lemma1-memory").seed == 0
    assert set(DEFAULTS) == set(EXPERIMENTS)


def test_overrides_win_over_file_values():
    cfg = make_config("lemma1-memory", {"seed": 3, "histories": 4}, {"histories": 2, "seed": None})
    assert cfg.seed == 3 and cfg.params["histories"] == 2


def _body(path):
    return path.read_text().splitlines()[1:]


def test_memory_experiment_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    ra = run_experiment(make_config("lemma1-memory", {"histories": 5}, {"seed": 7, "out": str(a)}))
    run_experiment(make_config("lemma1-memory", {"histories": 5}, {"seed": 7, "out": str(b)}))
    assert ra.passed
    assert _body(a) == _body(b)
    assert a.read_text().startswith("# {")
    rows = list(csv.reader(_body(a)))
    assert rows[0] == ["history", "delta_old", "delta_recent", "init_spread"] and len(rows) == 6


def test_cli_exit_codes(tmp_path, capsys):
    conf = tmp_path / "c.txt"
    conf.write_text("configs = 10\ngrad_configs = 10\n")
    out = tmp_path / "p.csv"
    assert cli.main(["prop1-check", "--config", str(conf), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.count("PASS") == 6 and out.exists()
    # an impossible tolerance makes a claim fail
    assert cli.main(["prop1-check", "--config", str(conf), "--out", str(out), "--set", "tol_closed_form=0"]) == 1
    assert cli.main(["rate-sweep", "--out", str(out)]) == 2
    assert "requires a seed" in capsys.readouterr().err


def test_cli_seed_from_config(tmp_path):
    conf = tmp_path / "c.txt"
    conf.write_text("seed = 4\nS_list = 100, 400\ntrials = 1\nreps = 50\nruns = 5\nT = 5\nn = 16\n")
    out = tmp_path / "s.csv"
    assert cli.main(["shots-sweep", "--config", str(conf), "--out", str(out)]) in (0, 1)
    assert _body(out)[0] == "S,trial,rmse_prob,rmse_qnn,traj_err"


def test_unwritable_path(capsys):
    assert cli.main(["lemma1-memory", "--out", "/nonexistent/dir/x.csv", "--set", "histories=1"]) == 2
