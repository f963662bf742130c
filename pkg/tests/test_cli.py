import json

import numpy as np
import pytest

from fedsim.cli import main
from fedsim.config import config_from_dict
from fedsim.experiment import build_profiles, execute, run_experiment, slowdown_factors
from fedsim.metrics import read_csv

SMALL = {"dataset": "synth-blobs", "clients": 6, "synth.classes": 4, "synth.dim": 5, "synth.per_class": 30,
         "synth.test_per_class": 10, "distribution": "label-shards", "sgd.learning_rate": 0.1,
         "timing.heterogeneity": [1, 4], "timing.tau_base": 4, "budget.relative_slots": 5}


def config_file(tmp_path, **extra):
    values = {"algorithm": "csmaafl", **SMALL, **extra}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(values, indent=2))
    return path


def test_run_writes_csv_trace_and_plot(tmp_path, capsys):
    cfg = config_file(tmp_path)
    out, trace, plot = tmp_path / "m.csv", tmp_path / "t.tsv", tmp_path / "p.dat"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--trace", str(trace), "--plot-data", str(plot)]) == 0
    records = read_csv(out)
    assert [r.relative_time for r in records] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    summary = capsys.readouterr().out
    assert f"final_accuracy={records[-1].accuracy:.4f}" in summary
    assert trace.read_text().splitlines()[0].split("\t")[1] in {"UploadDone", "DownloadDone", "ComputeDone"}
    assert plot.read_text().startswith('# "csmaafl(gamma=0.2)')


def test_rerun_is_byte_identical(tmp_path):
    cfg = config_file(tmp_path, algorithm="sfl")
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a.csv")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    main(["run", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "c.csv")])
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_env_seed_override(tmp_path, monkeypatch):
    cfg = config_file(tmp_path, algorithm="sfl")
    main(["run", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "a.csv")])
    monkeypatch.setenv("FEDSIM_SEED", "4")
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = config_file(tmp_path, **{"csmaafl.gamma": -1})
    assert main(["run", "--config", str(cfg)]) == 1
    assert "csmaafl.gamma" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 1


def test_runtime_error_exit_code(tmp_path, capsys):
    a = tmp_path / "a.csv"
    a.write_text("x,y\n1,2\n")
    assert main(["compare", str(a), str(a), "--out", str(tmp_path / "r.txt")]) == 2
    assert "columns" in capsys.readouterr().err


def test_compare_command(tmp_path, capsys):
    cfg = config_file(tmp_path)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "c.csv")])
    cfg = config_file(tmp_path, algorithm="sfl")
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "s.csv")])
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "c.csv"), str(tmp_path / "s.csv"), "--out", str(tmp_path / "r.txt"),
                 "--plot-data", str(tmp_path / "p.dat")]) == 0
    out = capsys.readouterr().out
    assert "catch_up_time=" in out
    final = read_csv(tmp_path / "s.csv")[-1].accuracy
    assert f"final_accuracy={final:.4f}" in out
    assert main(["compare", str(tmp_path / "c.csv"), "--out", str(tmp_path / "r.txt")]) == 1


def test_solve_betas_command(capsys):
    assert main(["solve-betas", "--alphas", "0.2,0.3,0.5", "--schedule", "3,1,2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split("\t")[3] for line in lines[1:]] == ["0", "5/7", "7/10"]
    assert main(["solve-betas", "--alphas", "1/3,1/3,1/3"]) == 0
    assert capsys.readouterr().out.splitlines()[3].endswith("2/3")
    assert main(["solve-betas", "--alphas", "0.2,0.3,0.5", "--schedule", "1,1,2"]) == 1
    assert main(["solve-betas", "--alphas", "0.2,0.3"]) == 1


def test_timing_command(capsys):
    assert main(["timing", "--mode", "sfl", "--clients", "3", "--compute", "5", "--slowdown", "4",
                 "--upload", "2", "--download", "1"]) == 0
    assert capsys.readouterr().out == "sfl_round_time\t27\n"
    assert main(["timing", "--mode", "afl", "--clients", "3", "--compute", "5", "--slowdown", "4",
                 "--upload", "2", "--download", "1"]) == 0
    assert capsys.readouterr().out.splitlines() == ["afl_trunk_lower\t14", "afl_trunk_upper\t29",
                                                   "afl_aggregation_interval\t3"]
    assert main(["timing", "--mode", "afl", "--clients", "0", "--compute", "5", "--upload", "2",
                 "--download", "1"]) == 1


def test_fifty_slot_run_has_one_row_per_slot(tmp_path):
    cfg = config_from_dict({"algorithm": "csmaafl", **SMALL, "clients": 20, "synth.per_class": 50,
                            "budget.relative_slots": 50})
    path = run_experiment(cfg, out=tmp_path / "m.csv", echo=None)
    assert len(read_csv(path)) == 51  # t = 0 plus one per relative slot


def test_sfl_and_one_baseline_trunk_agree():
    common = {**SMALL, "distribution": "iid", "budget.max_rounds": 1, "budget.relative_slots": 10}
    sfl = execute(config_from_dict({"algorithm": "sfl", **common}))
    afl = execute(config_from_dict({"algorithm": "afl-baseline", **common}))
    assert np.max(np.abs(afl.model - sfl.model) / np.abs(sfl.model)) <= 1e-9


def test_profiles_from_config():
    cfg = config_from_dict({"algorithm": "sfl", **SMALL, "timing.factors": [1, 1.26, 2.5, 1, 1, 10]})
    assert [p.compute_time for p in build_profiles(cfg)] == [4, 5, 10, 4, 4, 40]
    drawn = slowdown_factors(config_from_dict({"algorithm": "sfl", **SMALL}))
    assert len(drawn) == 6 and all(1 <= a <= 4 for a in drawn)
