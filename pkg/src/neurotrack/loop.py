"""Camera -> estimator -> controller -> plant, stepped in lockstep at 50 µs."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .control import (CPU_GAINS, VISION_SNN_GAINS, AdaptationConfig, CpuPdController, PdGains,
                      RateEstimator, SnnPdController, ThrustMap)
from .events import LineCamera, SceneConfig, downsample
from .hough import CpuHoughEstimator, SlidingAverage, SnnHoughEstimator, SnnHoughParams
from .plant import Encoder, Plant, PlantParams, PlantState, SimulationFault
from .profiles import Profile

STEP_US = 50
TICK_US = 1000
SUBSTEPS = TICK_US // STEP_US


@dataclass(frozen=True)
class LoopConfig:
    backend: str = "cpu"                  # snn | cpu | encoder
    controller: str = "cpu-pd"            # cpu-pd | snn-pd | snn-pd-adaptive
    gains: PdGains | None = None          # default depends on the backend
    contrast_threshold: float = 0.15
    cpu_window_us: int = 3000
    cpu_latency_ms: int = 3               # event transport + processing on the CPU path
    rate_span: int = 5
    disturbance_torque: float = 0.0
    seed: int = 0
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    hough: SnnHoughParams = field(default_factory=SnnHoughParams)
    max_rate_dps: float = 20000.0         # |roll rate| beyond this counts as divergence

    def __post_init__(self):
        if self.backend not in ("snn", "cpu", "encoder"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.controller not in ("cpu-pd", "snn-pd", "snn-pd-adaptive"):
            raise ValueError(f"unknown controller {self.controller!r}")

    @property
    def effective_gains(self) -> PdGains:
        if self.gains is not None:
            return self.gains
        return VISION_SNN_GAINS if self.backend == "snn" else CPU_GAINS


@dataclass
class Trace:
    """Per-tick (1 kHz) record of a closed-loop run."""

    time_ms: list = field(default_factory=list)
    target: list = field(default_factory=list)
    roll: list = field(default_factory=list)
    roll_enc: list = field(default_factory=list)
    disk_enc: list = field(default_factory=list)
    roll_rate: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    theta_dot: list = field(default_factory=list)
    u: list = field(default_factory=list)
    thrust_l: list = field(default_factory=list)
    thrust_r: list = field(default_factory=list)
    ff: list = field(default_factory=list)
    valid: list = field(default_factory=list)
    motor_l: list = field(default_factory=list)
    motor_r: list = field(default_factory=list)
    spikes: list = field(default_factory=list)   # (timestep, population, neuron) of the Hough network
    raw_estimates: int = 0
    estimates: int = 0
    events: int = 0
    failed: bool = False
    diagnostic: str = ""

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)


class ClosedLoop:
    """One experiment: the target is either the disk (vision) or a setpoint (encoder)."""

    def __init__(self, cfg: LoopConfig, params: PlantParams | None = None,
                 target: Profile | None = None, initial: PlantState | None = None,
                 record_spikes: tuple[str, ...] = ()):
        self.cfg = cfg
        self.record_spikes = record_spikes
        self._valid = cfg.backend == "encoder"
        self.target = target
        self.plant = Plant(params, initial or PlantState())
        self.plant.state.disturbance_torque = cfg.disturbance_torque
        self.roll_encoder = Encoder(seed=cfg.seed)
        self.disk_encoder = Encoder(seed=cfg.seed + 1_000_003)
        self.rate = RateEstimator(cfg.rate_span)
        tm = ThrustMap()
        gains = cfg.effective_gains
        if cfg.controller == "cpu-pd":
            self.controller = CpuPdController(gains, tm)
        else:
            self.controller = SnnPdController(gains, adaptive=cfg.controller == "snn-pd-adaptive",
                                              adaptation=cfg.adaptation, thrust_map=tm)
        self.camera = None
        if cfg.backend != "encoder":
            scene = SceneConfig(contrast_threshold=cfg.contrast_threshold, seed=cfg.seed)
            self.camera = LineCamera(scene, angle0=self._line_angle(0))
        self.snn = SnnHoughEstimator(params=cfg.hough) if cfg.backend == "snn" else None
        self.smoother = SlidingAverage() if cfg.backend == "snn" else None
        self.cpu = CpuHoughEstimator(window_us=cfg.cpu_window_us) if cfg.backend == "cpu" else None
        self._cpu_queue: deque[float] = deque()
        self._phi = 0.0        # latest line angle estimate in the camera frame
        self._smoothed = 0.0
        self.cmd = tm(0.0)
        self.plant.settle_thrust(*self.cmd)

    def _target_angle(self, t_us: int) -> float:
        return float(self.target.angle(t_us * 1e-6)) if self.target is not None else 0.0

    def _line_angle(self, t_us: int) -> float:
        """Orientation of the pattern's edge as seen by the camera on the drone."""
        return self._target_angle(t_us) - self.plant.state.roll

    def _vision_substep(self, t0: int, t1: int, trace: Trace) -> None:
        ev = self.camera.advance(self._line_angle(t1), t0, t1)
        trace.events += len(ev)
        ds = downsample(ev) if len(ev) else ev
        if self.snn is not None:
            est = self.snn.step(ds["x"], ds["y"])
            trace.raw_estimates += 1
            for pop in self.record_spikes:
                trace.spikes.extend((est.timestep, pop, int(i)) for i in self.snn.last_spikes.get(pop))
            raw = est.theta if est.theta is not None else self._phi
            self._phi = raw
            self._valid = self._valid or est.valid
            out = self.smoother.push(raw)
            if out is not None:
                self._smoothed = out
        else:
            self.cpu.push(ds)

    def _measure(self, t_us: int, trace: Trace) -> float:
        """Controller error ``roll - line`` available at the end of the tick."""
        if self.cfg.backend == "encoder":
            return self.roll_encoder.read(self.plant.state.roll) - self._target_angle(t_us)
        if self.snn is not None:
            trace.estimates += 1
            return -self._smoothed
        est = self.cpu.estimate(t_us)
        trace.estimates += 1
        self._valid = est.valid
        if est.theta is not None:
            self._phi = est.theta
        self._cpu_queue.append(self._phi)
        lag = self.cfg.cpu_latency_ms
        phi = self._cpu_queue.popleft() if len(self._cpu_queue) > lag else self._cpu_queue[0]
        return -phi

    def run(self, duration_s: float, record_from_s: float = 0.0) -> Trace:
        trace = Trace()
        s = self.plant.state
        n_ticks = int(round(duration_s * 1000))
        try:
            for k in range(n_ticks):
                t_tick = k * TICK_US
                for j in range(SUBSTEPS):
                    t0 = t_tick + j * STEP_US
                    t1 = t0 + STEP_US
                    if self.camera is not None:
                        self._vision_substep(t0, t1, trace)
                    self.plant.step(*self.cmd)
                    s.disk_angle = self._target_angle(t1)
                if abs(s.roll_rate) > self.cfg.max_rate_dps:
                    raise SimulationFault(f"roll rate {s.roll_rate:.0f} deg/s exceeds limit at t={t1} us")
                t_now = t_tick + TICK_US
                theta = self._measure(t_now, trace)
                theta = (theta + 90.0) % 180.0 - 90.0 if self.cfg.backend != "encoder" else theta
                theta_dot = self.rate.push(theta)
                sig = self.controller.update(theta, theta_dot)
                self.cmd = (sig.thrust_l, sig.thrust_r)
                if t_now >= record_from_s * 1e6:
                    trace.time_ms.append(t_now / 1000)
                    trace.target.append(s.disk_angle)
                    trace.roll.append(s.roll)
                    trace.roll_enc.append(self.roll_encoder.read(s.roll))
                    trace.disk_enc.append(self.disk_encoder.read(s.disk_angle))
                    trace.roll_rate.append(s.roll_rate)
                    trace.theta.append(theta)
                    trace.theta_dot.append(theta_dot)
                    trace.u.append(sig.u)
                    trace.thrust_l.append(sig.thrust_l)
                    trace.thrust_r.append(sig.thrust_r)
                    trace.ff.append(sig.ff_term)
                    trace.valid.append(self._valid)
                    trace.motor_l.append(s.thrust_l)
                    trace.motor_r.append(s.thrust_r)
        except SimulationFault as exc:
            trace.failed = True
            trace.diagnostic = str(exc)
        return trace
