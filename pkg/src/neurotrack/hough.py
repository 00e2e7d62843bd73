"""Line-orientation estimation: dense CPU Hough and the spiking Hough network.

Coordinates
-----------
Hough coordinates are centre-origin with ``hx`` pointing up the image and
``hy`` pointing left, so that ``r = hx*cos(theta) + hy*sin(theta)`` is the
signed distance to a line whose orientation (counter-clockwise from the
image horizontal) is ``theta``.  The estimated angle therefore *is* the Hough
``theta``; a level line reads 0°.

Downsampled pixel ``(x, y)`` of the 60x45 frame sits at
``hx = scale*(22 - y)``, ``hy = -scale*(x - 29.5)``.  With ``scale = 4`` the
radial bins are measured in sensor pixels.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .engine import Engine, EngineConfig, Network, SpikeBatch

MIN_VOTES = 20


@dataclass(frozen=True)
class HoughGrid:
    n_theta: int = 90
    r_min: float = -200.0
    r_max: float = 200.0
    r_bin: float = 10.0
    frame_width: int = 60
    frame_height: int = 45
    coordinate_scale: float = 4.0

    def __post_init__(self):
        if self.n_theta < 1 or self.r_bin <= 0 or self.r_max <= self.r_min:
            raise ValueError("invalid Hough grid")

    @property
    def theta_step(self) -> float:
        return 180.0 / self.n_theta

    @property
    def n_r(self) -> int:
        return int(round((self.r_max - self.r_min) / self.r_bin)) + 1

    @property
    def size(self) -> int:
        return self.n_theta * self.n_r

    @property
    def n_pixels(self) -> int:
        return self.frame_width * self.frame_height

    def theta_centers(self) -> np.ndarray:
        return -90.0 + self.theta_step * (np.arange(self.n_theta) + 0.5)

    def r_centers(self) -> np.ndarray:
        return self.r_min + self.r_bin * np.arange(self.n_r)

    def decode(self, index):
        """Angle (deg) represented by theta neuron ``index``."""
        return -90.0 + self.theta_step * index + self.theta_step / 2.0

    def encode(self, theta):
        """Theta neuron whose bin contains ``theta`` (wrapped into [-90, 90))."""
        wrapped = (np.asarray(theta, dtype=float) + 90.0) % 180.0
        idx = np.floor(wrapped / self.theta_step).astype(np.int64)
        return np.minimum(idx, self.n_theta - 1) if np.ndim(idx) else int(min(idx, self.n_theta - 1))

    def r_index(self, r):
        """Radial bin containing ``r``; bins are centred on ``r_min + k*r_bin``."""
        j = np.floor((np.asarray(r) - self.r_min) / self.r_bin + 0.5).astype(np.int64)
        return j

    def pixel_coords(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        cx = (self.frame_width - 1) / 2.0
        cy = (self.frame_height - 1) / 2.0
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.coordinate_scale * (cy - y), -self.coordinate_scale * (x - cx)

    def pixel_index(self, x, y):
        return np.asarray(y, dtype=np.int64) * self.frame_width + np.asarray(x, dtype=np.int64)


def wrap180(a):
    """Wrap an angle into [-90, 90)."""
    return (np.asarray(a) + 90.0) % 180.0 - 90.0 if np.ndim(a) else (a + 90.0) % 180.0 - 90.0


def hough_r(hx, hy, theta_deg):
    th = np.radians(theta_deg)
    return hx * np.cos(th) + hy * np.sin(th)


def build_hough_connectivity(grid: HoughGrid) -> sparse.csr_matrix:
    """Binary pixel -> (theta, r) matrix; Hough neuron index = i_theta * n_r + j_r."""
    ys, xs = np.divmod(np.arange(grid.n_pixels), grid.frame_width)
    hx, hy = grid.pixel_coords(xs, ys)
    theta = grid.theta_centers()
    r = hx[:, None] * np.cos(np.radians(theta))[None, :] + hy[:, None] * np.sin(np.radians(theta))[None, :]
    j = grid.r_index(r)
    if j.min() < 0 or j.max() >= grid.n_r:
        raise AssertionError("pixel maps outside the radial range of the Hough grid")
    cols = (np.arange(grid.n_theta)[None, :] * grid.n_r + j).ravel()
    rows = np.repeat(np.arange(grid.n_pixels), grid.n_theta)
    data = np.ones(len(cols), dtype=np.int64)
    return sparse.csr_matrix((data, (rows, cols)), shape=(grid.n_pixels, grid.size))


@dataclass
class AngleEstimate:
    theta: float | None
    timestep: int
    valid: bool


# --- CPU reference ------------------------------------------------------------

def accumulate(grid: HoughGrid, x, y) -> np.ndarray:
    """Dense vote counts, shape (n_theta, n_r), computed straight from the formula."""
    hx, hy = grid.pixel_coords(x, y)
    theta = grid.theta_centers()
    acc = np.zeros((grid.n_theta, grid.n_r), dtype=np.int64)
    for i, th in enumerate(theta):
        j = grid.r_index(hough_r(hx, hy, th))
        np.add.at(acc[i], j, 1)
    return acc


def cpu_estimate(grid: HoughGrid, x, y, timestep: int = 0, min_votes: int = MIN_VOTES) -> AngleEstimate:
    """Angle of the max-vote cell; ties go to smaller |theta|, then smaller theta."""
    if len(np.atleast_1d(x)) < min_votes:
        return AngleEstimate(None, timestep, False)
    acc = accumulate(grid, x, y)
    best = acc.max(axis=1)
    top = best.max()
    if top < min_votes:
        return AngleEstimate(None, timestep, False)
    cands = grid.decode(np.flatnonzero(best == top))
    theta = float(sorted(cands, key=lambda a: (abs(a), a))[0])
    return AngleEstimate(theta, timestep, True)


class CpuHoughEstimator:
    """Sliding-window estimator evaluated every ``period_us`` of stream time."""

    def __init__(self, grid: HoughGrid | None = None, window_us: int = 3000, period_us: int = 1000,
                 min_votes: int = MIN_VOTES):
        self.grid = grid or HoughGrid()
        self.window_us = window_us
        self.period_us = period_us
        self.min_votes = min_votes
        self._buf: deque[np.ndarray] = deque()
        self.last: AngleEstimate = AngleEstimate(None, 0, False)
        self.last_spikes = SpikeBatch(0, {})

    def push(self, events: np.ndarray) -> None:
        """Add downsampled events (in time order)."""
        if len(events):
            self._buf.append(events)

    def estimate(self, now_us: int) -> AngleEstimate:
        lo = now_us - self.window_us
        while self._buf and self._buf[0]["t"][-1] < lo:
            self._buf.popleft()
        if self._buf:
            ev = np.concatenate(self._buf)
            ev = ev[(ev["t"] >= lo) & (ev["t"] < now_us)]
        else:
            ev = np.zeros(0, dtype=[("x", "u2"), ("y", "u2")])
        est = cpu_estimate(self.grid, ev["x"], ev["y"], now_us // self.period_us, self.min_votes)
        if est.valid:
            self.last = est
        else:
            est = AngleEstimate(self.last.theta, est.timestep, False)
        return est


# --- spiking Hough network ------------------------------------------------------

@dataclass(frozen=True)
class SnnHoughParams:
    hough_threshold: int = MIN_VOTES
    hough_decay_tau: float = 3.0
    weight: int = 1
    cleanup_radius: int = 6
    cleanup_inhibition: int = 2
    memory_inhibition: int = 3


def cleanup_kernel(n: int, radius: int) -> np.ndarray:
    """Triangular d -> e weights, circular in theta (-89 and +89 are neighbours).

    When a band of adjacent angles is active, the centre of the band collects
    the largest drive and wins the clean-up competition.
    """
    k = np.zeros((n, n), dtype=np.int64)
    idx = np.arange(n)
    for off in range(-radius, radius + 1):
        k[idx, (idx + off) % n] += radius + 1 - abs(off)
    return k


def build_hough_network(grid: HoughGrid | None = None, params: SnnHoughParams | None = None) -> Network:
    """Layers: a (event input) -> b (pixels) -> c (Hough) -> d (angle readout)
    -> e (clean-up) -> f (memory)."""
    grid = grid or HoughGrid()
    p = params or SnnHoughParams()
    W = p.weight
    n = grid.n_theta
    net = Network()
    net.add_input("a", grid.n_pixels)
    net.add_population("b", grid.n_pixels, threshold=W, decay_tau=1.0)
    net.add_population("c", grid.size, threshold=p.hough_threshold * W, decay_tau=p.hough_decay_tau)
    net.add_population("d", n, threshold=W, decay_tau=1.0)
    net.add_population("e", n, threshold=W, decay_tau=1.0, winner_take_all=True)
    net.add_population("f", n, threshold=W, decay_tau=1.0, self_excitation=W)
    net.connect("a", "b", sparse.identity(grid.n_pixels, dtype=np.int64, format="csr") * W, generator="identity")
    net.connect("b", "c", build_hough_connectivity(grid) * W, generator="hough")
    col = sparse.csr_matrix((np.full(grid.size, W), (np.arange(grid.size), np.arange(grid.size) // grid.n_r)),
                            shape=(grid.size, n))
    net.connect("c", "d", col, generator="theta_columns")
    net.connect("d", "e", cleanup_kernel(n, p.cleanup_radius) * W, generator="cleanup_kernel")
    lateral = -(np.ones((n, n), dtype=np.int64) - np.eye(n, dtype=np.int64)) * p.cleanup_inhibition * W
    net.connect("e", "e", lateral, sign="inhibitory", generator="all_but_self")
    net.connect("e", "f", np.eye(n, dtype=np.int64) * W, name="e->f", generator="identity")
    overwrite = -(np.ones((n, n), dtype=np.int64) - np.eye(n, dtype=np.int64)) * p.memory_inhibition * W
    net.connect("e", "f", overwrite, name="e-|f", sign="inhibitory", generator="all_but_self")
    return net


class SnnHoughEstimator:
    """Steps the spiking Hough network once per 50 µs and decodes layer f."""

    def __init__(self, grid: HoughGrid | None = None, params: SnnHoughParams | None = None,
                 config: EngineConfig | None = None):
        self.grid = grid or HoughGrid()
        self.network = build_hough_network(self.grid, params)
        self.engine = Engine(self.network, config)
        self.last: AngleEstimate = AngleEstimate(None, 0, False)
        self.last_spikes = SpikeBatch(0, {})

    @property
    def timestep(self) -> int:
        return self.engine.t

    def step(self, x=(), y=()) -> AngleEstimate:
        """Inject the downsampled events of this step and return the raw estimate."""
        t = self.engine.t
        batch = SpikeBatch(t, {"a": np.unique(self.grid.pixel_index(x, y))} if len(x) else {})
        out = self.engine.step(batch)
        self.last_spikes = out
        active = out.get("f")
        if len(active):
            est = AngleEstimate(float(self.grid.decode(int(active[0]))), t, True)
            self.last = est
            return est
        return AngleEstimate(self.last.theta, t, False)


# --- smoothing ------------------------------------------------------------------

def sliding_average(raw, window: int = 200, decimation: int = 20) -> np.ndarray:
    """Output k = mean(raw[k*decimation - window + 1 : k*decimation + 1]); partial at startup.

    Angles are averaged relative to the newest sample so that values either
    side of the +-90 degree seam do not cancel.
    """
    raw = np.asarray(raw, dtype=float)
    ends = np.arange(0, len(raw), decimation)
    out = np.empty(len(ends))
    for k, e in enumerate(ends):
        seg = raw[max(0, e - window + 1):e + 1]
        ref = seg[-1]
        out[k] = ref + np.mean(wrap180(seg - ref))
    return out


class SlidingAverage:
    """Streaming form of :func:`sliding_average`."""

    def __init__(self, window: int = 200, decimation: int = 20):
        self.window = window
        self.decimation = decimation
        self._buf: deque[float] = deque(maxlen=window)
        self._n = 0

    def push(self, value: float) -> float | None:
        """Add one raw sample; returns an output sample on every ``decimation``-th input."""
        self._buf.append(value)
        emit = self._n % self.decimation == 0
        self._n += 1
        if not emit:
            return None
        seg = np.fromiter(self._buf, dtype=float)
        ref = seg[-1]
        return float(ref + np.mean(wrap180(seg - ref)))
