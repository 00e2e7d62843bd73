import numpy as np
import pytest

from neurotrack import cli
from neurotrack.config import ConfigFileError, RunConfig, load_config, parse_config
from neurotrack.control import PdGains
from neurotrack.harness import (BenchReport, ExperimentSpec, check_baseline, load_baseline, measure_latency,
                                run_adaptation, run_step, run_tracking)


def test_config_round_trip_defaults():
    c = RunConfig()
    assert parse_config(c.to_text()) == c


def test_config_overrides_and_errors(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# tuned\nloop.backend = snn\nplant.inertia = 0.05\ngains.kp = 40\n"
                 "adaptation.once_per_window = false\nhough.cleanup_radius = 3\n")
    c = load_config(f)
    assert c.loop.backend == "snn" and c.plant.inertia == 0.05
    assert c.loop.gains.kp == 40 and c.loop.gains.kd == pytest.approx(PdGains.per_radian(2000, 600).kd)
    assert not c.loop.adaptation.once_per_window and c.loop.hough.cleanup_radius == 3
    assert parse_config(c.to_text()) == c
    with pytest.raises(ConfigFileError, match="unknown key"):
        parse_config("plant.mass = 3")
    with pytest.raises(ConfigFileError, match=":1:"):
        parse_config("inertia 3")
    with pytest.raises(ConfigFileError):
        parse_config("plant.inertia = -1")


def test_experiment_validation():
    with pytest.raises(ValueError):
        ExperimentSpec("tracking", duration_s=2, analysis_s=3)
    with pytest.raises(ValueError):
        ExperimentSpec("dance")
    assert ExperimentSpec(backend="encoder-direct").backend == "encoder"


def test_zero_step_is_flat():
    m = run_step(ExperimentSpec("step", "encoder", profile="steps:0=0", duration_s=1.0, analysis_s=1.0))
    assert not m.failed and m.rmse < 0.2


def test_static_line_snn_holds_within_a_bin():
    m = run_tracking(ExperimentSpec("tracking", "snn", profile="constant:0:15", duration_s=1.0, analysis_s=0.5))
    assert not m.failed and m.rmse <= 2.0
    assert m.raw_estimate_rate_hz == 20 * m.estimate_rate_hz


def test_outputs_are_deterministic(tmp_path):
    def once(d):
        spec = ExperimentSpec("step", "cpu", profile="steps:0=0,0.1=10", duration_s=0.4, analysis_s=0.3,
                              seed=3, out_dir=str(d))
        run_step(spec)
        return {p.name: p.read_bytes() for p in sorted(d.iterdir())}

    a, b = once(tmp_path / "a"), once(tmp_path / "b")
    assert a == b
    assert {"manifest.txt", "metrics.csv", "step_cpu_estimates.csv", "step_cpu_control.csv",
            "step_cpu_ground_truth.csv"} <= set(a)
    assert a["step_cpu_estimates.csv"].startswith(b"time_us,theta_deg,valid,backend\n")
    assert b"sha256=" in a["manifest.txt"]


def test_seed_changes_outputs(tmp_path):
    outs = []
    for seed in (1, 2):
        d = tmp_path / str(seed)
        run_step(ExperimentSpec("step", "encoder", profile="steps:0=0,0.1=10", duration_s=0.3, analysis_s=0.2,
                                seed=seed, out_dir=str(d)))
        outs.append((d / "step_encoder_ground_truth.csv").read_bytes())
    assert outs[0] != outs[1]


def test_spike_trace_written(tmp_path):
    spec = ExperimentSpec("step", "snn", profile="steps:0=0,0.01=30", duration_s=0.05, analysis_s=0.05,
                          out_dir=str(tmp_path), record_spikes=("f",))
    run_step(spec)
    lines = (tmp_path / "step_snn_spikes.csv").read_text().splitlines()
    assert lines[0] == "timestep,population,neuron_index" and len(lines) > 100
    assert all(l.split(",")[1] == "f" for l in lines[1:])


def test_adaptation_table_shape():
    ms = run_adaptation(ExperimentSpec("adaptation", "encoder", "cpu-pd", duration_s=0.5, analysis_s=0.5,
                                       setpoints=(10.0, -10.0)), settle_s=0.2, return_s=0.2)
    assert [m.extra["setpoint"] for m in ms] == [10.0, -10.0]
    assert all(np.isfinite(m.rmse) for m in ms)


def test_latency_and_baseline_gate(tmp_path):
    assert measure_latency() == 5
    f = tmp_path / "b.txt"
    f.write_text("events_per_s = 1000  # reference machine\n")
    base = load_baseline(f)
    rep = BenchReport(1, 1, 1.0, 850.0, 1.0, 5, 250, 20, 1, 20.0)
    assert check_baseline(rep, base)[0]
    rep.events_per_s = 790.0
    assert not check_baseline(rep, base)[0]


def test_cli_config_and_step(tmp_path, capsys):
    assert cli.main(["config"]) == 0
    assert "plant.inertia" in capsys.readouterr().out
    rc = cli.main(["step", "--backend", "encoder", "--targets", "0", "--hold", "0.2", "--lead", "0.1",
                   "--out", str(tmp_path)])
    assert rc == 0 and (tmp_path / "manifest.txt").exists()
    bad = tmp_path / "bad.cfg"
    bad.write_text("nope\n")
    assert cli.main(["step", "--config", str(bad)]) == 2
