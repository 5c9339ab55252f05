import shutil
import subprocess
import sys

import pytest
import yaml

from jamdeceive.cli import main
from jamdeceive.config import load_run_config
from jamdeceive.env import ActionKind as A
from jamdeceive.io import read_csv
from jamdeceive.neural import load_snapshot, save_snapshot

SMALL_DQN = {"total_steps": 2_000, "flush_period": 500, "hidden": [16, 16], "eval_horizon": 500,
             "replay_capacity": 1_000, "eps_decay_steps": 1_000}


def write_config(path, **sections):
    base = {"evaluation": {"horizon": 2_000, "seeds": [0, 1]}}
    base.update(sections)
    path.write_text(yaml.safe_dump(base))
    return path


@pytest.fixture
def cfg(tmp_path):
    return write_config(tmp_path / "run.yaml", output_dir=str(tmp_path / "out"))


def test_oracle_writes_full_policy(cfg, tmp_path, capsys):
    assert main(["oracle", str(cfg)]) == 0
    out = tmp_path / "out"
    rows = read_csv(out / "policy.csv")
    assert len(rows) == 121
    assert len(read_csv(out / "qtable.csv")) == 411
    resid = read_csv(out / "residual.csv")[0]
    assert float(resid["max_residual"]) < 1e-9
    assert (out / "manifest_oracle.yaml").exists()
    assert "iterations" in capsys.readouterr().out


def test_oracle_without_jamming_never_deceives(cfg, tmp_path):
    assert main(["oracle", str(cfg), "--set", "env.p_attack=0"]) == 0
    actions = {r["action"] for r in read_csv(tmp_path / "out" / "policy.csv")}
    assert actions <= {A.PassiveHarvest.name, A.ActiveTransmit.name}


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.yaml"
    assert main(["oracle", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize("section", [
    {"env": {"p_atack": 0.5}},
    {"trainer": {"kind": "dqn", "params": {"learning_rte": 0.1}}},
    {"bogus": 1},
    {"env": {"p_attack": 1.2}},
])
def test_bad_config_writes_nothing(tmp_path, section, capsys):
    out = tmp_path / "out"
    path = write_config(tmp_path / "bad.yaml", output_dir=str(out), **section)
    assert main(["oracle", str(path)]) == 1
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_usage_errors_exit_one(cfg):
    with pytest.raises(SystemExit) as info:
        main(["sweep", str(cfg), "--figure", "both"])
    assert info.value.code == 1
    assert main(["oracle", str(cfg), "--set", "novalue"]) == 1


def test_train_with_zero_steps_is_refused(cfg, tmp_path, capsys):
    assert main(["train", str(cfg), "--trainer", "dqn", "--steps", "0"]) == 1
    assert "no training" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_train_dqn_weights_round_trip(tmp_path, capsys):
    path = write_config(tmp_path / "run.yaml", output_dir=str(tmp_path / "out"),
                        trainer={"kind": "dqn", "seed": 3, "params": SMALL_DQN})
    assert main(["train", str(path)]) == 0
    assert "evaluated throughput" in capsys.readouterr().out
    out = tmp_path / "out"
    net = load_snapshot(out / "weights.bin")
    assert net.widths == [2, 16, 16, 4]
    save_snapshot(net, tmp_path / "again.bin")
    assert (tmp_path / "again.bin").read_bytes() == (out / "weights.bin").read_bytes()
    assert len(read_csv(out / "train_log.csv")) == 4
    assert len(read_csv(out / "policy.csv")) == 121


def test_train_tabular_short_run(cfg, tmp_path):
    assert main(["train", str(cfg), "--trainer", "tabular", "--steps", "10000",
                 "--set", "trainer.params.log_every=2500"]) == 0
    log = read_csv(tmp_path / "out" / "train_log.csv")
    assert [int(r["step"]) for r in log] == [0, 2500, 5000, 7500, 10000]
    assert float(log[-1]["oracle_distance"]) > 0


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="default tabular schedule does not reach the oracle; "
                                       "see the tabular criterion in test_acceptance")
def test_train_tabular_default_reaches_oracle(cfg, tmp_path):
    assert main(["train", str(cfg), "--trainer", "tabular"]) == 0
    log = read_csv(tmp_path / "out" / "train_log.csv")
    assert float(log[-1]["oracle_distance"]) < 0.05


def test_evaluate_writes_metrics(cfg, tmp_path, capsys):
    assert main(["evaluate", str(cfg), "--strategy", "wd"]) == 0
    summary = read_csv(tmp_path / "out" / "summary.csv")[0]
    assert summary["strategy"] == "wd" and int(summary["seeds"]) == 2
    assert len(read_csv(tmp_path / "out" / "metrics.csv")) >= 2
    assert "wd: throughput" in capsys.readouterr().out


def test_jamming_sweep_layout(cfg, tmp_path):
    assert main(["sweep", str(cfg), "--figure", "jamming", "--set", "evaluation.horizon=500"]) == 0
    rows = read_csv(tmp_path / "out" / "sweep_jamming.csv")
    assert len(rows) == 9 * 4
    assert {r["strategy"] for r in rows} == {"proposed", "dh", "db", "wd"}
    assert len(read_csv(tmp_path / "out" / "summary_jamming.csv")) == 9


def test_arrival_sweep_pins_attack_probability(cfg, tmp_path):
    assert main(["sweep", str(cfg), "--figure", "arrival", "--set", "sweep.values=[0.1,0.5]",
                 "--set", "env.p_attack=0.2"]) == 0
    rows = read_csv(tmp_path / "out" / "sweep_arrival.csv")
    assert {r["param"] for r in rows} == {"p_arrival"}
    manifest = yaml.safe_load((tmp_path / "out" / "manifest_sweep.yaml").read_text())
    assert manifest["sweep"]["figure"] == "arrival"


def test_failed_sweep_point_is_reported(cfg, capsys, monkeypatch):
    import jamdeceive.harness as harness

    def diverging(kind, cfg, *args, **kw):
        if cfg.p_attack == 0.4:
            raise FloatingPointError("parameters became non-finite")
        return real(kind, cfg, *args, **kw)

    real = harness.build_strategy
    monkeypatch.setattr(harness, "build_strategy", diverging)
    code = main(["sweep", str(cfg), "--set", "sweep.values=[0.2,0.4]", "--set", "evaluation.horizon=100"])
    assert code == 2
    assert "p_attack=0.4" in capsys.readouterr().err


def test_kernel_dump(cfg, tmp_path):
    assert main(["kernel-dump", str(cfg)]) == 0
    rows = read_csv(tmp_path / "out" / "kernel.csv")
    assert list(rows[0]) == ["energy", "queue", "action", "prob", "next_energy", "next_queue",
                             "delivered", "dropped"]
    totals = {}
    for r in rows:
        key = (r["energy"], r["queue"], r["action"])
        totals[key] = totals.get(key, 0.0) + float(r["prob"])
    assert len(totals) == 411
    assert all(abs(t - 1) < 1e-12 for t in totals.values())


def test_output_dir_from_environment(cfg, tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("JAMDECEIVE_OUTPUT_DIR", str(target))
    assert main(["kernel-dump", str(cfg)]) == 0
    assert (target / "kernel.csv").exists()
    assert main(["kernel-dump", str(cfg), "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "kernel.csv").exists()


def test_flags_override_file(tmp_path):
    path = write_config(tmp_path / "run.yaml", env={"p_attack": 0.3})
    assert load_run_config(path, {"env.p_attack": 0.8}).env.p_attack == 0.8
    assert load_run_config(path).env.p_attack == 0.3


COMMANDS = [
    ["oracle"],
    ["kernel-dump"],
    ["evaluate", "--strategy", "dh"],
    ["train", "--trainer", "tabular", "--steps", "20000"],
    ["sweep", "--figure", "arrival", "--set", "sweep.values=[0.3]"],
]


def rerun_from_manifest(cfg, tmp_path, argv):
    out = tmp_path / "out"
    assert main([argv[0], str(cfg), *argv[1:]]) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    manifest = tmp_path / "manifest.yaml"
    shutil.copy(out / f"manifest_{argv[0]}.yaml", manifest)
    shutil.rmtree(out)
    assert main([argv[0], str(manifest)]) == 0
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    return first, second


@pytest.mark.parametrize("argv", COMMANDS, ids=[c[0] for c in COMMANDS])
def test_rerun_from_manifest_is_byte_identical(cfg, tmp_path, argv):
    first, second = rerun_from_manifest(cfg, tmp_path, argv)
    assert first == second


def test_dqn_rerun_from_manifest_is_byte_identical(tmp_path):
    path = write_config(tmp_path / "run.yaml", output_dir=str(tmp_path / "out"),
                        trainer={"kind": "dqn", "seed": 1, "params": SMALL_DQN})
    first, second = rerun_from_manifest(path, tmp_path, ["train"])
    assert first == second and "weights.bin" in first


def test_console_script_entry(cfg):
    proc = subprocess.run([sys.executable, "-m", "jamdeceive", "kernel-dump", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "jamdeceive", "--help"], capture_output=True, text=True)
    assert all(c in proc.stdout for c in ("oracle", "train", "evaluate", "sweep", "kernel-dump"))


def test_shipped_config_matches_defaults():
    from pathlib import Path

    from jamdeceive.config import RunConfig

    shipped = load_run_config(Path(__file__).parents[1] / "configs" / "default.yaml")
    assert shipped.to_dict() == RunConfig().to_dict()
