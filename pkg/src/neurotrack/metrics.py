"""Tracking metrics shared by every backend."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def wrap(a, period: float = 360.0):
    """Wrap into [-period/2, period/2)."""
    return (np.asarray(a, dtype=float) + period / 2) % period - period / 2


@dataclass
class DelayFit:
    rmse: float
    delay_ms: int
    valid_delay: bool


def delay_corrected_rmse(reference, follower, max_delay_ms: int = 300, period: float = 360.0,
                         valid_range: tuple[int, int] = (50, 300)) -> DelayFit:
    """RMSE of ``follower[k] - reference[k - d]`` minimised over d in [0, max_delay_ms].

    Both traces are sampled at 1 kHz and cover the same instants.  Each shift
    compares the overlapping part only.
    """
    ref = np.asarray(reference, dtype=float)
    fol = np.asarray(follower, dtype=float)
    if ref.shape != fol.shape:
        raise ValueError("traces must have equal length")
    n = len(ref)
    max_delay_ms = min(max_delay_ms, n - 1)
    best = (np.inf, 0)
    for d in range(max_delay_ms + 1):
        e = wrap(fol[d:] - ref[:n - d], period)
        r = float(np.sqrt(np.mean(e ** 2)))
        if r < best[0]:
            best = (r, d)
    return DelayFit(best[0], best[1], valid_range[0] <= best[1] <= valid_range[1])


def rmse(err) -> float:
    err = np.asarray(err, dtype=float)
    return float(np.sqrt(np.mean(err ** 2))) if len(err) else 0.0


def step_response(t_ms, target, angle, tol: float = 2.0) -> dict[str, float]:
    """Rise time (10-90 %), overshoot (%) and settle time to +-tol for one step."""
    t = np.asarray(t_ms, dtype=float)
    y = np.asarray(angle, dtype=float)
    y0, y1 = y[0], float(target)
    span = y1 - y0
    out = {"rise_ms": float("nan"), "overshoot_pct": 0.0, "settle_ms": float("nan")}
    if span == 0:
        return out
    z = (y - y0) / span
    i10 = np.flatnonzero(z >= 0.1)
    i90 = np.flatnonzero(z >= 0.9)
    if len(i10) and len(i90):
        out["rise_ms"] = float(t[i90[0]] - t[i10[0]])
    out["overshoot_pct"] = float(max(0.0, (z.max() - 1.0) * 100.0))
    outside = np.flatnonzero(np.abs(y - y1) > tol)
    if len(outside) < len(y):
        out["settle_ms"] = float(t[outside[-1] + 1] - t[0]) if len(outside) and outside[-1] + 1 < len(t) else (
            0.0 if not len(outside) else float("nan"))
    return out
