"""DVS event streams: data model, file I/O, a synthetic camera, downsampling.

Streams are numpy structured arrays with fields ``t`` (µs), ``x``, ``y`` and
``p`` (1 = on, 0 = off), sorted by ``t``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .profiles import Profile, parse_profile

SENSOR_WIDTH = 240
SENSOR_HEIGHT = 180

EVENT_DTYPE = np.dtype([("t", "<i8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
_BIN_MAGIC = b"NTEV0001"
_BIN_RECORD = np.dtype([("t", "<u4"), ("x", "u1"), ("y", "u1"), ("flags", "u1")])


class EventParseError(ValueError):
    pass


class EventOrderError(ValueError):
    pass


class DvsEvent(NamedTuple):
    t: int
    x: int
    y: int
    polarity: bool


def empty_events() -> np.ndarray:
    return np.zeros(0, dtype=EVENT_DTYPE)


def make_events(t, x, y, p) -> np.ndarray:
    ev = np.empty(len(t), dtype=EVENT_DTYPE)
    ev["t"], ev["x"], ev["y"], ev["p"] = t, x, y, p
    return ev


def as_tuples(events: np.ndarray) -> list[DvsEvent]:
    return [DvsEvent(int(e["t"]), int(e["x"]), int(e["y"]), bool(e["p"])) for e in events]


def _check_order(events: np.ndarray, on_unsorted: str) -> np.ndarray:
    if len(events) > 1 and np.any(np.diff(events["t"]) < 0):
        if on_unsorted == "sort":
            return events[np.argsort(events["t"], kind="stable")]
        bad = int(np.flatnonzero(np.diff(events["t"]) < 0)[0]) + 1
        raise EventOrderError(f"timestamps decrease at record {bad}")
    return events


def load_events(path, on_unsorted: str = "reject", width: int = SENSOR_WIDTH,
                height: int = SENSOR_HEIGHT) -> np.ndarray:
    """Read a CSV (``t_us,x,y,polarity``) or packed binary event file."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(_BIN_MAGIC))
    if head == _BIN_MAGIC:
        events = _load_binary(path)
        bad = np.flatnonzero((events["x"] >= width) | (events["y"] >= height))
        if len(bad):
            raise EventParseError(f"{path}: record {bad[0]} out of sensor range")
    else:
        events = _load_csv(path, width, height)
    return _check_order(events, on_unsorted)


def _load_csv(path: Path, width: int, height: int) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if lineno == 1 and not parts[0].lstrip("-").isdigit():
                continue  # header
            if len(parts) != 4:
                raise EventParseError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                t, x, y, p = (int(v) for v in parts)
            except ValueError:
                raise EventParseError(f"{path}:{lineno}: non-integer field in {line!r}") from None
            if t < 0:
                raise EventParseError(f"{path}:{lineno}: negative timestamp")
            if not (0 <= x < width and 0 <= y < height):
                raise EventParseError(f"{path}:{lineno}: pixel ({x},{y}) outside {width}x{height} sensor")
            if p not in (0, 1):
                raise EventParseError(f"{path}:{lineno}: polarity must be 0 or 1")
            rows.append((t, x, y, p))
    if not rows:
        return empty_events()
    return np.array(rows, dtype=EVENT_DTYPE)


def _load_binary(path: Path) -> np.ndarray:
    raw = path.read_bytes()[len(_BIN_MAGIC):]
    if len(raw) % _BIN_RECORD.itemsize:
        raise EventParseError(f"{path}: truncated record at byte offset "
                              f"{len(_BIN_MAGIC) + len(raw) // _BIN_RECORD.itemsize * _BIN_RECORD.itemsize}")
    rec = np.frombuffer(raw, dtype=_BIN_RECORD)
    return make_events(rec["t"], rec["x"], rec["y"], rec["flags"] & 1)


def save_events(events: np.ndarray, path, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        if len(events) and events["t"].max() >= 2**32:
            raise ValueError("binary format holds timestamps below 2**32 µs")
        rec = np.empty(len(events), dtype=_BIN_RECORD)
        rec["t"], rec["x"], rec["y"], rec["flags"] = events["t"], events["x"], events["y"], events["p"]
        path.write_bytes(_BIN_MAGIC + rec.tobytes())
        return
    with open(path, "w") as fh:
        fh.write("t_us,x,y,polarity\n")
        for e in events:
            fh.write(f"{e['t']},{e['x']},{e['y']},{e['p']}\n")


def downsample(events: np.ndarray, factor: int = 4) -> np.ndarray:
    """Integer-divide pixel addresses by ``factor`` (a bit shift)."""
    if factor <= 0 or factor & (factor - 1):
        raise ValueError("downsampling factor must be a power of two")
    shift = factor.bit_length() - 1
    out = events.copy()
    out["x"] >>= shift
    out["y"] >>= shift
    return out


# --- synthetic camera -------------------------------------------------------

@dataclass(frozen=True)
class SceneConfig:
    """Half-plane black/white pattern split by a line through the image centre.

    ``trajectory`` gives the line orientation (degrees, counter-clockwise
    from the image horizontal) as seen by the camera.
    """

    trajectory: str = "constant:360"
    contrast_threshold: float = 0.15
    log_contrast: float = math.log(10.0)
    refractory_us: int = 0
    width: int = SENSOR_WIDTH
    height: int = SENSOR_HEIGHT
    seed: int = 0

    def __post_init__(self):
        if self.contrast_threshold <= 0:
            raise ValueError("contrast_threshold must be positive")
        if self.refractory_us < 0:
            raise ValueError("refractory_us must be >= 0")
        parse_profile(self.trajectory)

    @property
    def profile(self) -> Profile:
        return parse_profile(self.trajectory)

    def to_text(self) -> str:
        return "".join(f"{k} = {getattr(self, k)}\n" for k in self.__dataclass_fields__)

    @classmethod
    def from_text(cls, text: str) -> "SceneConfig":
        kw = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            field_type = cls.__dataclass_fields__[key].type
            kw[key] = val if field_type == "str" else (int(val) if field_type == "int" else float(val))
        return cls(**kw)


class LineCamera:
    """Event camera watching the rotating half-plane pattern.

    Each pixel keeps the log intensity at its last event; whenever the
    current log intensity moves a full ``contrast_threshold`` away from that
    reference an event is emitted, timestamped by linear interpolation of the
    log intensity across the integration interval.  The boundary is
    anti-aliased over one pixel.
    """

    CORE_RADIUS = 6.0

    def __init__(self, scene: SceneConfig, angle0: float = 0.0):
        self.scene = scene
        w, h = scene.width, scene.height
        yy, xx = np.mgrid[0:h, 0:w]
        self._px = xx.ravel().astype(np.uint16)
        self._py = yy.ravel().astype(np.uint16)
        self._u = xx.ravel() - (w - 1) / 2.0
        self._v = (h - 1) / 2.0 - yy.ravel()
        rho = np.hypot(self._u, self._v)
        alpha = np.degrees(np.arctan2(self._v, self._u)) % 180.0
        core = rho <= self.CORE_RADIUS
        self._core = np.flatnonzero(core)
        outer = np.flatnonzero(~core)
        order = np.argsort(alpha[outer], kind="stable")
        self._outer = outer[order]
        self._outer_alpha = alpha[outer][order]
        # widest angular half-band at which an outer pixel can touch the edge
        self._band = math.degrees(math.asin(min(1.0, 0.75 / self.CORE_RADIUS)))
        self._lo = -scene.log_contrast / 2.0
        self.ref = self._log_intensity(np.arange(len(self._u)), angle0)
        self.last_t = np.full(len(self._u), -(10**12), dtype=np.int64)
        self.angle = angle0

    def _log_intensity(self, idx: np.ndarray, angle: float) -> np.ndarray:
        a = math.radians(angle)
        d = -self._u[idx] * math.sin(a) + self._v[idx] * math.cos(a)
        frac = np.clip(d + 0.5, 0.0, 1.0)
        # log(I_black + (I_white - I_black) * frac) with I_black = 1
        return np.log1p((math.exp(self.scene.log_contrast) - 1.0) * frac) + self._lo

    def _candidates(self, a0: float, a1: float) -> np.ndarray:
        lo, hi = min(a0, a1) - self._band, max(a0, a1) + self._band
        if hi - lo >= 180.0:
            return np.arange(len(self._u))
        lo %= 180.0
        hi = lo + (max(a0, a1) - min(a0, a1) + 2 * self._band)
        al = self._outer_alpha
        if hi <= 180.0:
            sel = self._outer[np.searchsorted(al, lo):np.searchsorted(al, hi, side="right")]
        else:
            sel = np.concatenate([self._outer[np.searchsorted(al, lo):],
                                  self._outer[:np.searchsorted(al, hi - 180.0, side="right")]])
        return np.concatenate([self._core, sel])

    def advance(self, angle1: float, t0: int, t1: int) -> np.ndarray:
        """Move the pattern from the current angle to ``angle1`` over [t0, t1) µs."""
        a0 = self.angle
        self.angle = angle1
        if a0 == angle1:
            return empty_events()
        idx = self._candidates(a0, angle1)
        L1 = self._log_intensity(idx, angle1)
        ref = self.ref[idx]
        C = self.scene.contrast_threshold
        n = np.floor(np.abs(L1 - ref) / C).astype(np.int64)
        hit = n > 0
        if not hit.any():
            return empty_events()
        idx, L1, ref, n = idx[hit], L1[hit], ref[hit], n[hit]
        L0 = self._log_intensity(idx, a0)
        sgn = np.sign(L1 - ref)
        pix = np.repeat(np.arange(len(idx)), n)
        k = np.arange(len(pix)) - np.repeat(np.cumsum(n) - n, n) + 1
        level = ref[pix] + sgn[pix] * k * C
        span = L1[pix] - L0[pix]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(span != 0, (level - L0[pix]) / span, 0.0)
        ts = t0 + np.floor(np.clip(frac, 0.0, 1.0) * (t1 - t0 - 1e-9)).astype(np.int64)
        keep = np.ones(len(pix), dtype=bool)
        refr = self.scene.refractory_us
        last = self.last_t[idx]
        if refr > 0:
            for j in range(len(pix)):
                p = pix[j]
                if ts[j] - last[p] < refr:
                    keep[j] = False
                else:
                    last[p] = ts[j]
            emitted_levels = np.where(keep, level, np.nan)
            new_ref = ref.copy()
            for j in np.flatnonzero(keep):
                new_ref[pix[j]] = emitted_levels[j]
            self.ref[idx] = new_ref
            self.last_t[idx] = last
        else:
            self.ref[idx] = ref + sgn * n * C
            self.last_t[idx] = t1 - 1
        pix, ts = pix[keep], ts[keep]
        gidx = idx[pix]
        ev = make_events(ts, self._px[gidx], self._py[gidx], (sgn[pix] > 0).astype(np.uint8))
        return ev[np.argsort(ev["t"], kind="stable")]


def synthesize_events(scene: SceneConfig, duration_us: int, step_us: int = 50) -> np.ndarray:
    """Render the scene's trajectory over ``[0, duration_us)`` into events."""
    prof = scene.profile
    cam = LineCamera(scene, angle0=float(prof.angle(0.0)))
    chunks = []
    for t0 in range(0, duration_us, step_us):
        t1 = min(t0 + step_us, duration_us)
        ev = cam.advance(float(prof.angle(t1 * 1e-6)), t0, t1)
        if len(ev):
            chunks.append(ev)
    return np.concatenate(chunks) if chunks else empty_events()
