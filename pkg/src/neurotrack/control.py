"""PD controllers: a reference CPU implementation and spiking position-coded versions.

Angles are in degrees and the error is ``theta = roll - line``; a positive
``u`` commands a negative roll torque.  Gains are expressed per degree, so
``PdGains.per_radian(3000, 900)`` is the rad-based parameterisation.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .engine import Engine, EngineConfig, Network, SpikeBatch

U_CLAMP = 3700.0
STEPS_PER_TICK = 20  # 50 us engine steps per 1 ms control tick


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class PdGains:
    kp: float  # thrust units per degree
    kd: float  # thrust units per degree/s

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0:
            raise ValueError("gains must be non-negative")

    @classmethod
    def per_radian(cls, kp: float, kd: float) -> "PdGains":
        return cls(kp * math.pi / 180.0, kd * math.pi / 180.0)


CPU_GAINS = PdGains.per_radian(3000, 900)
VISION_SNN_GAINS = PdGains.per_radian(2000, 600)


def cpu_pd(theta: float, theta_rate: float, gains: PdGains, clamp: float = U_CLAMP) -> float:
    u = gains.kp * theta + gains.kd * theta_rate
    return min(max(u, -clamp), clamp)


@dataclass(frozen=True)
class OutputDecode:
    n: int = 361
    t_min: float = -1850.0
    t_max: float = 1850.0

    def __post_init__(self):
        if self.n < 2 or not self.t_min < self.t_max:
            raise ValueError("need n >= 2 and t_min < t_max")

    @property
    def step(self) -> float:
        return (self.t_max - self.t_min) / self.n

    def decode(self, idx: int) -> float:
        if not 0 <= idx < self.n:
            raise DecodeError(f"output index {idx} outside [0, {self.n - 1}]")
        return idx / self.n * (self.t_max - self.t_min) + self.t_min

    def encode(self, u: float) -> int:
        """Nearest output index for ``u`` (saturating)."""
        return int(min(max(round((u - self.t_min) / self.step), 0), self.n - 1))


@dataclass(frozen=True)
class ThrustMap:
    c_t: float = 2880.0
    b_t: float = 170.0
    u_clamp: float = U_CLAMP
    plus_side: str = "left"

    def __call__(self, u: float) -> tuple[float, float]:
        u = min(max(u, -self.u_clamp), self.u_clamp)
        plus = self.c_t + (u / 2 + self.b_t)
        minus = self.c_t - (u / 2 + self.b_t)
        return (plus, minus) if self.plus_side == "left" else (minus, plus)


@dataclass(frozen=True)
class PositionCode:
    """Scalar <-> neuron index over ``n`` evenly spaced values on [lo, hi]."""

    n: int
    lo: float
    hi: float

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    def index(self, value: float) -> int:
        return int(min(max(round((value - self.lo) / self.step), 0), self.n - 1))

    def value(self, idx):
        return self.lo + np.asarray(idx) * self.step


ERROR_CODE = PositionCode(361, -90.0, 90.0)
RATE_CODE = PositionCode(361, -1500.0, 1500.0)


@dataclass
class ControlSignal:
    theta: float
    theta_rate: float
    u: float
    thrust_l: float
    thrust_r: float
    ff_term: float = 0.0


CONTROL_TRACE_HEADER = "time_ms,theta,theta_dot,u,thrust_l,thrust_r,ff_term"


class RateEstimator:
    """Backward difference over ``span`` samples of a 1 kHz angle, wrapped to +-90 deg."""

    def __init__(self, span: int = 5, dt_ms: float = 1.0):
        self.span = span
        self.dt = dt_ms / 1000.0
        self._hist: deque[float] = deque(maxlen=span + 1)

    def push(self, angle: float) -> float:
        self._hist.append(angle)
        if len(self._hist) < 2:
            return 0.0
        d = (self._hist[-1] - self._hist[0] + 90.0) % 180.0 - 90.0
        return d / ((len(self._hist) - 1) * self.dt)


class CpuPdController:
    def __init__(self, gains: PdGains = CPU_GAINS, thrust_map: ThrustMap | None = None):
        self.gains = gains
        self.thrust_map = thrust_map or ThrustMap()

    def update(self, theta: float, theta_rate: float) -> ControlSignal:
        u = cpu_pd(theta, theta_rate, self.gains, self.thrust_map.u_clamp)
        return ControlSignal(theta, theta_rate, u, *self.thrust_map(u))


# --- spiking PD -------------------------------------------------------------------

def pd_index_table(gains: PdGains, err: PositionCode, rate: PositionCode, out: OutputDecode) -> np.ndarray:
    """Output neuron for every (error index, rate index) pair, saturating at the edges."""
    gp = gains.kp * err.step / out.step
    gd = gains.kd * rate.step / out.step
    ci = (err.n - 1) / 2
    cj = (rate.n - 1) / 2
    centre = (out.n - 1) // 2
    i = np.arange(err.n)[:, None] - ci
    j = np.arange(rate.n)[None, :] - cj
    return np.clip(np.round(centre + gp * i + gd * j), 0, out.n - 1).astype(np.int64)


def snn_pd_build(gains: PdGains, err: PositionCode = ERROR_CODE, rate: PositionCode = RATE_CODE,
                 out: OutputDecode = OutputDecode()) -> Network:
    """Inputs ``theta`` and ``theta_dot`` -> conjunction layer ``pair`` -> output ``u``.

    ``pair[i, j]`` needs both of its inputs in the same step; it projects to the
    output neuron given by :func:`pd_index_table`.
    """
    table = pd_index_table(gains, err, rate, out)
    ne, nr = err.n, rate.n
    net = Network()
    net.add_input("theta", ne)
    net.add_input("theta_dot", nr)
    net.add_population("pair", ne * nr, threshold=2, decay_tau=1.0)
    net.add_population("u", out.n, threshold=1, decay_tau=1.0, winner_take_all=True)
    pair = np.arange(ne * nr).reshape(ne, nr)
    rows = np.repeat(np.arange(ne), nr)
    net.connect("theta", "pair", sparse.csr_matrix((np.ones(ne * nr, dtype=np.int64), (rows, pair.ravel())),
                                                   shape=(ne, ne * nr)), generator="row_fanout")
    rows = np.tile(np.arange(nr), ne)
    net.connect("theta_dot", "pair", sparse.csr_matrix((np.ones(ne * nr, dtype=np.int64), (rows, pair.ravel())),
                                                       shape=(nr, ne * nr)), generator="column_fanout")
    net.connect("pair", "u", sparse.csr_matrix((np.ones(ne * nr, dtype=np.int64), (pair.ravel(), table.ravel())),
                                               shape=(ne * nr, out.n)), generator="pd_shift")
    return net


@dataclass(frozen=True)
class AdaptationConfig:
    window_ms: int = 500
    epsilon: float = 25.0            # deg^2
    b_size: int = 64
    ff_increment: float = 50.0       # thrust units per active B neuron above baseline
    err_scale: float = 1.0           # weight units per deg^2
    once_per_window: bool = True     # R+/R- stay refractory until the next window reset

    def __post_init__(self):
        if self.window_ms <= 0 or self.epsilon <= 0 or self.b_size < 2:
            raise ValueError("invalid adaptation config")

    @property
    def baseline(self) -> int:
        return self.b_size // 2

    @property
    def r_threshold(self) -> float:
        return self.window_ms * self.epsilon * self.err_scale


def adaptation_trigger_check(err, epsilon: float) -> bool:
    """Reference test: does the window's mean squared error reach ``epsilon``?"""
    err = np.asarray(err, dtype=float)
    return bool(len(err)) and float(np.mean(err ** 2)) >= epsilon


def adaptation_build(net: Network, cfg: AdaptationConfig = AdaptationConfig(),
                     err: PositionCode = ERROR_CODE) -> Network:
    """Add R+/R-, the FF relays and population B to a network with a ``theta`` input.

    R+ integrates the squared value of positive errors, R- of negative ones,
    without leak; the controller clears both at every window boundary.  Each
    R spike moves every FF->B synapse by one unit.  B neuron ``k`` has
    threshold ``k + 1`` and a fixed drive of ``baseline``, so its active count
    minus ``baseline`` equals the net FF weight.
    """
    vals = err.value(np.arange(err.n))
    sq = np.round(cfg.err_scale * vals ** 2).astype(np.int64)
    refr = cfg.window_ms * STEPS_PER_TICK if cfg.once_per_window else 0
    net.add_population("R+", 1, threshold=cfg.r_threshold, decay_tau=math.inf, refractory=refr)
    net.add_population("R-", 1, threshold=cfg.r_threshold, decay_tau=math.inf, refractory=refr)
    net.connect("theta", "R+", np.where(vals > 0, sq, 0)[:, None], generator="squared_error")
    net.connect("theta", "R-", np.where(vals < 0, sq, 0)[:, None], generator="squared_error")
    net.add_input("ff", 3)  # 0: FF+, 1: FF-, 2: baseline drive
    net.add_population("B", cfg.b_size, threshold=np.arange(1, cfg.b_size + 1, dtype=float), decay_tau=1.0)
    half = cfg.baseline
    net.connect("ff", "B", np.vstack([np.zeros((2, cfg.b_size), dtype=np.int64),
                                      np.full((1, cfg.b_size), half)]), name="bias->B")
    plus = np.zeros((3, cfg.b_size), dtype=np.int64)
    mask = np.zeros((3, cfg.b_size), dtype=bool)
    mask[0] = True
    net.connect("ff", "B", plus, name="FF+->B", plastic=True, reinforcement=("R+", 0), adapt_sign=1,
                w_min=0, w_max=cfg.b_size - half, mask=mask)
    mask = np.zeros((3, cfg.b_size), dtype=bool)
    mask[1] = True
    net.connect("ff", "B", plus.copy(), name="FF-->B", sign="inhibitory", plastic=True,
                reinforcement=("R-", 0), adapt_sign=-1, w_min=-half, w_max=0, mask=mask)
    return net


class SnnPdController:
    """Spiking PD, optionally with the plasticity-driven feed-forward pathway.

    Each 1 ms tick injects one spike into ``theta`` and ``theta_dot`` and runs
    the engine for ``STEPS_PER_TICK`` steps; ``u`` fires two steps later.
    """

    def __init__(self, gains: PdGains = CPU_GAINS, adaptive: bool = False,
                 adaptation: AdaptationConfig | None = None, err: PositionCode = ERROR_CODE,
                 rate: PositionCode = RATE_CODE, out: OutputDecode = OutputDecode(),
                 thrust_map: ThrustMap | None = None, config: EngineConfig | None = None):
        self.gains = gains
        self.err, self.rate, self.out = err, rate, out
        self.thrust_map = thrust_map or ThrustMap()
        self.adaptive = adaptive
        self.cfg = adaptation or AdaptationConfig()
        self.network = snn_pd_build(gains, err, rate, out)
        if adaptive:
            adaptation_build(self.network, self.cfg, err)
        self.engine = Engine(self.network, config)
        self.tick = 0
        self.r_events: list[tuple[int, str]] = []
        self._last_u = out.decode((out.n - 1) // 2)
        self._ff_count = self.cfg.baseline

    @property
    def ff_weight(self) -> int:
        if not self.adaptive:
            return 0
        syn = self.network.synapses
        return int(syn["FF+->B"].weights[0, 0] + syn["FF-->B"].weights[1, 0])

    def update(self, theta: float, theta_rate: float) -> ControlSignal:
        if self.adaptive and self.tick and self.tick % self.cfg.window_ms == 0:
            self.engine.reset("R+")
            self.engine.reset("R-")
        spikes = {"theta": np.array([self.err.index(theta)]),
                  "theta_dot": np.array([self.rate.index(theta_rate)])}
        if self.adaptive:
            spikes["ff"] = np.array([0, 1, 2])
        u_idx = None
        b_count = None
        for k in range(STEPS_PER_TICK):
            fired = self.engine.step(SpikeBatch(self.engine.t, spikes) if k == 0 else None)
            if self.adaptive:
                for r in ("R+", "R-"):
                    if len(fired.get(r)):
                        self.r_events.append((self.tick, r))
                self.engine.apply_plasticity(fired)
                if k == 1:
                    b_count = len(fired.get("B"))
            out = fired.get("u")
            if len(out) and u_idx is None:
                u_idx = int(out[0])
        if u_idx is not None:
            self._last_u = self.out.decode(u_idx)
        ff = 0.0
        if self.adaptive and b_count is not None:
            ff = (b_count - self.cfg.baseline) * self.cfg.ff_increment
        self.tick += 1
        u = min(max(self._last_u + ff, -self.thrust_map.u_clamp), self.thrust_map.u_clamp)
        return ControlSignal(theta, theta_rate, u, *self.thrust_map(u), ff_term=ff)


def r_neurons_fire(err_trace, cfg: AdaptationConfig = AdaptationConfig(),
                   err: PositionCode = ERROR_CODE) -> bool:
    """Run R+/R- alone over one window of 1 kHz error samples; True if either fires."""
    net = Network()
    net.add_input("theta", err.n)
    adaptation_build(net, cfg, err)
    eng = Engine(net)
    for e in err_trace:
        fired = eng.step(SpikeBatch(eng.t, {"theta": np.array([err.index(e)])}))
        if len(fired.get("R+")) or len(fired.get("R-")):
            return True
    fired = eng.step()
    return bool(len(fired.get("R+")) or len(fired.get("R-")))
