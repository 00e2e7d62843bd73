"""Experiment runners: tracking sweeps, steps, weight adaptation, benchmarks.

Every runner takes an :class:`ExperimentSpec` plus a :class:`RunConfig` and
returns metrics; when ``spec.out_dir`` is set it also writes per-run CSVs,
``metrics.csv`` and ``manifest.txt``.  Output is a pure function of the
spec, the config and the package version.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .control import CONTROL_TRACE_HEADER
from .events import SceneConfig, downsample, load_events, synthesize_events
from .hough import CpuHoughEstimator, SlidingAverage, SnnHoughEstimator
from .loop import ClosedLoop, Trace
from .metrics import delay_corrected_rmse, rmse, step_response, wrap
from .plant import GROUND_TRUTH_HEADER, PlantState, weight_torque
from .profiles import parse_profile

SCENARIOS = ("tracking", "step", "adaptation", "benchmark")
TRACKING_SPEEDS = (400.0, 800.0, 1200.0)
ADAPTATION_SETPOINTS = (20.0, -20.0, 30.0, -30.0, 40.0, -40.0)
WEIGHT_KG = 0.125
ADAPTATION_SETTLE_S = 10.0
ADAPTATION_RETURN_S = 3.0
DEFAULT_BASELINE = Path(__file__).parent / "data" / "bench_baseline.txt"


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: str = "tracking"
    backend: str = "snn"                 # snn | cpu | encoder
    controller: str = "cpu-pd"           # cpu-pd | snn-pd | snn-pd-adaptive
    profile: str = "constant:800"
    duration_s: float = 10.0
    analysis_s: float = 5.0              # trailing window scored by the metrics
    seed: int = 0
    out_dir: str | None = None
    weight: bool = False
    setpoints: tuple[float, ...] = ADAPTATION_SETPOINTS
    record_spikes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.backend == "encoder-direct":
            object.__setattr__(self, "backend", "encoder")
        if not 0 < self.analysis_s <= self.duration_s:
            raise ValueError("analysis window must lie within the run duration")
        parse_profile(self.profile)

    def to_text(self) -> str:
        out = []
        for k, v in asdict(self).items():
            if k == "out_dir":
                continue
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            out.append(f"run.{k} = {v}")
        return "\n".join(out) + "\n"


@dataclass
class RunMetrics:
    name: str
    backend: str
    controller: str
    profile: str
    rmse: float = float("nan")
    delay_ms: int = 0
    valid_delay: bool = True
    failed: bool = False
    diagnostic: str = ""
    estimate_rate_hz: float = 0.0
    raw_estimate_rate_hz: float = 0.0
    event_rate: float = 0.0
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "extra"}
        d.update(self.extra)
        return d


# --- output helpers ------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 6)) if math.isfinite(v) else str(v)
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def _write_rows(path: Path, header: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def write_trace(out: Path, name: str, trace: Trace, backend: str) -> list[Path]:
    """Estimates, controller trace, ground truth and (if recorded) spikes for one run."""
    out.mkdir(parents=True, exist_ok=True)
    t_us = [int(round(t * 1000)) for t in trace.time_ms]
    files = []
    if backend != "encoder":
        p = out / f"{name}_estimates.csv"
        theta = wrap(-trace.array("theta"), 180.0)
        _write_rows(p, "time_us,theta_deg,valid,backend", zip(t_us, theta.tolist(), trace.valid,
                                                                  [backend] * len(t_us)))
        files.append(p)
    p = out / f"{name}_control.csv"
    _write_rows(p, CONTROL_TRACE_HEADER, zip(trace.time_ms, trace.theta, trace.theta_dot, trace.u,
                                              trace.thrust_l, trace.thrust_r, trace.ff))
    files.append(p)
    p = out / f"{name}_ground_truth.csv"
    _write_rows(p, GROUND_TRUTH_HEADER, zip(t_us, trace.roll, trace.roll_rate, trace.target,
                                             trace.motor_l, trace.motor_r))
    files.append(p)
    if trace.spikes:
        p = out / f"{name}_spikes.csv"
        _write_rows(p, "timestep,population,neuron_index", trace.spikes)
        files.append(p)
    return files


def write_metrics(out: Path, metrics: list[RunMetrics]) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    rows = [m.row() for m in metrics]
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
    p = out / "metrics.csv"
    p.write_text(buf.getvalue())
    return p


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, spec: ExperimentSpec, config: RunConfig, files: list[Path]) -> Path:
    lines = [f"neurotrack {__version__}", f"config.sha256 = {config.digest()}", spec.to_text(), config.to_text()]
    for f in sorted(files):
        lines.append(f"output {f.name} sha256={_sha(f)}")
    p = out / "manifest.txt"
    p.write_text("\n".join(lines) + "\n")
    return p


def _finish(spec, config, metrics, files) -> list[RunMetrics]:
    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        files = files + [write_metrics(out, metrics)]
        write_manifest(out, spec, config, files)
    return metrics


def _run_loop(spec: ExperimentSpec, config: RunConfig, loop_kw: dict, target, initial, name: str,
              record_from_s: float = 0.0):
    cfg = replace(config.loop, backend=spec.backend, controller=spec.controller, seed=spec.seed, **loop_kw)
    loop = ClosedLoop(cfg, config.plant, target, initial, record_spikes=spec.record_spikes)
    trace = loop.run(spec.duration_s, record_from_s=record_from_s)
    files = write_trace(Path(spec.out_dir), name, trace, spec.backend) if spec.out_dir else []
    m = RunMetrics(name, spec.backend, spec.controller, target.describe() if target else "")
    m.failed, m.diagnostic = trace.failed, trace.diagnostic
    m.estimate_rate_hz = trace.estimates / spec.duration_s
    m.raw_estimate_rate_hz = trace.raw_estimates / spec.duration_s
    m.event_rate = trace.events / spec.duration_s
    return trace, m, files


# --- scenarios ---------------------------------------------------------------------------------

def _tracking(spec: ExperimentSpec, config: RunConfig) -> tuple[RunMetrics, list[Path]]:
    prof = parse_profile(spec.profile)
    initial = PlantState(roll=prof.angle(0.0), roll_rate=prof.rate(0.0), disk_angle=prof.angle(0.0))
    name = f"track_{spec.backend}_{prof.rate(0.0):g}"
    trace, m, files = _run_loop(spec, config, {}, prof, initial, name)
    m.extra["speed_dps"] = prof.rate(0.0)
    if not trace.failed:
        n = int(round(spec.analysis_s * 1000))
        fit = delay_corrected_rmse(trace.array("disk_enc")[-n:], trace.array("roll_enc")[-n:])
        m.rmse, m.delay_ms, m.valid_delay = fit.rmse, fit.delay_ms, fit.valid_delay
    return m, files


def run_tracking(spec: ExperimentSpec, config: RunConfig | None = None) -> RunMetrics:
    """Follow a spinning disk; RMSE of disk vs drone encoders over the trailing window.

    The drone starts co-rotating with the disk so the camera sees a slowly
    drifting line instead of a blur it has to catch up with.
    """
    config = config or RunConfig()
    m, files = _tracking(spec, config)
    _finish(spec, config, [m], files)
    return m


def run_tracking_sweep(spec: ExperimentSpec, config: RunConfig | None = None,
                       speeds=TRACKING_SPEEDS, backends=("snn", "cpu")) -> list[RunMetrics]:
    config = config or RunConfig()
    metrics, files = [], []
    for backend in backends:
        for w in speeds:
            m, f = _tracking(replace(spec, backend=backend, profile=f"constant:{w:g}"), config)
            metrics.append(m)
            files += f
    return _finish(spec, config, metrics, files)


def run_step(spec: ExperimentSpec, config: RunConfig | None = None) -> RunMetrics:
    """Disk (vision) or setpoint (encoder) steps; rise time and overshoot of the last step."""
    config = config or RunConfig()
    prof = parse_profile(spec.profile)
    name = f"step_{spec.backend}"
    trace, m, files = _run_loop(spec, config, {}, prof, PlantState(disk_angle=prof.angle(0.0)), name)
    if not trace.failed:
        t = trace.array("time_ms")
        tgt = trace.array("target")
        roll = trace.array("roll_enc")
        last_change = 0
        changes = np.flatnonzero(np.diff(tgt))
        if len(changes):
            last_change = int(changes[-1]) + 1
        resp = step_response(t[last_change:], tgt[-1], roll[last_change:])
        m.extra.update(resp)
        n = int(round(spec.analysis_s * 1000))
        m.rmse = rmse(wrap(roll[-n:] - tgt[-n:]))
        m.extra["final_error"] = float(wrap(roll[-1] - tgt[-1]))
    _finish(spec, config, [m], files)
    return m


def run_adaptation(spec: ExperimentSpec, config: RunConfig | None = None,
                   settle_s: float = ADAPTATION_SETTLE_S,
                   return_s: float = ADAPTATION_RETURN_S) -> list[RunMetrics]:
    """Setpoint holds driven straight from the drone encoder, with or without the weight.

    One session: an unscored hold at level, then for each setpoint a step
    from level held for ``spec.duration_s`` (scored, transient included)
    followed by an unscored return to level.  The controller, and any
    feed-forward it has learned, carries over from hold to hold.
    """
    config = config or RunConfig()
    torque = weight_torque(WEIGHT_KG, config.plant) if spec.weight else 0.0
    hold = spec.duration_s
    knots, starts, t = [(0.0, 0.0)], [], settle_s
    for sp in spec.setpoints:
        knots.append((t, sp))
        starts.append(t)
        t += hold
        if return_s > 0:
            knots.append((t, 0.0))
            t += return_s
    prof = parse_profile("steps:" + ",".join(f"{a:g}={b:g}" for a, b in knots))
    full = replace(spec, backend="encoder", duration_s=t, analysis_s=t)
    tag = "weight" if spec.weight else "noweight"
    name = f"adapt_{spec.controller}_{tag}"
    trace, _, files = _run_loop(full, config, {"disturbance_torque": torque}, prof, PlantState(), name)
    metrics = []
    err = trace.array("roll_enc") - trace.array("target")
    n = int(round(hold * 1000))
    for t0, sp in zip(starts, spec.setpoints):
        k0 = int(round(t0 * 1000))
        m = RunMetrics(f"{name}_{sp:+g}", "encoder", spec.controller, f"setpoint:{sp:g}")
        m.failed, m.diagnostic = trace.failed, trace.diagnostic
        seg = err[k0:k0 + n]
        if len(seg) == n:
            m.rmse = rmse(seg)
            m.extra["steady_error"] = float(np.mean(seg[-1000:]))
            m.extra["ff_final"] = float(trace.ff[k0 + n - 1])
        m.extra["setpoint"] = sp
        m.extra["weight"] = spec.weight
        m.estimate_rate_hz = 1000.0
        metrics.append(m)
    return _finish(spec, config, metrics, files)


# --- benchmark ------------------------------------------------------------------------------

@dataclass
class BenchReport:
    events: int
    timesteps: int
    wall_s: float
    events_per_s: float
    timesteps_per_s: float
    latency_steps: int
    latency_us: int
    snn_estimates: int
    cpu_estimates: int
    estimate_ratio: float

    def row(self) -> dict:
        return asdict(self)


def measure_latency() -> int:
    """Timesteps from one super-threshold volley into layer a to the first layer-f spike."""
    est = SnnHoughEstimator()
    g = est.grid
    ys, xs = np.divmod(np.arange(g.n_pixels), g.frame_width)
    keep = ys == g.frame_height // 2
    t0 = est.timestep
    res = est.step(xs[keep], ys[keep])
    while not res.valid and est.timestep < t0 + 50:
        res = est.step()
    return res.timestep - t0 if res.valid else -1


def benchmark_stream(events: np.ndarray, step_us: int = 50) -> BenchReport:
    """Push a stream through both estimators; time the spiking one."""
    ds = downsample(events) if len(events) else events
    t_end = int(ds["t"][-1]) + 1 if len(ds) else step_us
    n_steps = -(-t_end // step_us)
    cuts = np.searchsorted(ds["t"], np.arange(n_steps + 1) * step_us)
    snn = SnnHoughEstimator()
    smoother = SlidingAverage()
    smoothed = 0
    t0 = time.perf_counter()
    for k in range(n_steps):
        chunk = ds[cuts[k]:cuts[k + 1]]
        est = snn.step(chunk["x"], chunk["y"])
        smoothed += smoother.push(est.theta if est.theta is not None else 0.0) is not None
    wall = time.perf_counter() - t0
    cpu = CpuHoughEstimator()
    cpu_count = 0
    for k in range(n_steps):
        cpu.push(ds[cuts[k]:cuts[k + 1]])
        if (k + 1) * step_us % cpu.period_us == 0:
            cpu.estimate((k + 1) * step_us)
            cpu_count += 1
    lat = measure_latency()
    return BenchReport(len(events), n_steps, wall, len(events) / wall if wall else 0.0,
                       n_steps / wall if wall else 0.0, lat, lat * step_us, n_steps, cpu_count,
                       n_steps / cpu_count if cpu_count else float("nan"))


def synthetic_stream(duration_us: int = 1_000_000, speed: float = 800.0, seed: int = 0,
                     contrast_threshold: float | None = None) -> np.ndarray:
    c = contrast_threshold if contrast_threshold is not None else RunConfig().loop.contrast_threshold
    return synthesize_events(SceneConfig(trajectory=f"constant:{speed:g}", contrast_threshold=c, seed=seed),
                             duration_us)


def load_baseline(path) -> dict[str, float]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            k, _, v = line.partition("=")
            out[k.strip()] = float(v)
    return out


def check_baseline(report: BenchReport, baseline: dict[str, float], tolerance: float = 0.2) -> tuple[bool, str]:
    """Regression gate: throughput may not fall more than ``tolerance`` below the baseline."""
    ref = baseline["events_per_s"]
    ok = report.events_per_s >= (1 - tolerance) * ref
    return ok, f"{report.events_per_s:.0f} events/s vs baseline {ref:.0f} (floor {(1 - tolerance) * ref:.0f})"


def run_benchmark(spec: ExperimentSpec, events: str | None = None, config: RunConfig | None = None,
                  baseline: str | None = None) -> BenchReport:
    config = config or RunConfig()
    if events in (None, "synth"):
        prof = parse_profile(spec.profile)
        ev = synthetic_stream(int(spec.duration_s * 1e6), prof.rate(0.0), spec.seed, config.loop.contrast_threshold)
    else:
        ev = load_events(events)
    rep = benchmark_stream(ev)
    if spec.out_dir:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        m = RunMetrics("bench", "snn", "-", spec.profile, extra=rep.row())
        if baseline:
            ok, _ = check_baseline(rep, load_baseline(baseline))
            m.extra["baseline_ok"] = ok
        # wall-clock figures vary run to run, so metrics.csv is left out of the manifest hashes
        write_metrics(out, [m])
        write_manifest(out, spec, config, [])
    return rep
