"""Disk angle trajectories.

Profiles are described by short strings so they can live in plain-text
configs and run manifests:

``constant:<deg_per_s>[:<start_deg>]``
    exact ``start + omega * t``.
``steps:<t0>=<a0>,<t1>=<a1>,...``
    piecewise-constant angle; times in seconds, ``a0`` holds before ``t0``.
``ramps:<t0>=<a0>,<t1>=<a1>,...``
    piecewise-linear interpolation between the knots (a manual turn).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Profile:
    kind: str
    omega: float = 0.0
    start: float = 0.0
    knots: tuple[tuple[float, float], ...] = ()

    def angle(self, t_s):
        """Unwrapped disk angle in degrees at time ``t_s`` (scalar or array)."""
        if self.kind == "constant":
            if np.ndim(t_s):
                t_s = np.asarray(t_s, dtype=float)
            return self.start + self.omega * t_s
        times = np.array([k[0] for k in self.knots])
        values = np.array([k[1] for k in self.knots])
        if self.kind == "ramps":
            out = np.interp(t_s, times, values)
        else:
            i = np.searchsorted(times, t_s, side="right") - 1
            out = values[np.clip(i, 0, len(values) - 1)]
        return float(out) if np.ndim(out) == 0 else out

    def rate(self, t_s: float) -> float:
        if self.kind == "constant":
            return self.omega
        if self.kind == "ramps":
            times = [k[0] for k in self.knots]
            i = int(np.searchsorted(times, t_s, side="right")) - 1
            if 0 <= i < len(times) - 1:
                (t0, a0), (t1, a1) = self.knots[i], self.knots[i + 1]
                return (a1 - a0) / (t1 - t0)
        return 0.0

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.omega:g}:{self.start:g}"
        return f"{self.kind}:" + ",".join(f"{t:g}={a:g}" for t, a in self.knots)


def constant(omega: float, start: float = 0.0) -> Profile:
    return Profile("constant", omega=float(omega), start=float(start))


def parse_profile(text: str) -> Profile:
    kind, _, rest = text.strip().partition(":")
    if kind == "constant":
        parts = rest.split(":")
        if not parts[0]:
            raise ValueError(f"bad profile {text!r}")
        return constant(float(parts[0]), float(parts[1]) if len(parts) > 1 else 0.0)
    if kind in ("steps", "ramps"):
        knots = []
        for item in rest.split(","):
            t, _, a = item.partition("=")
            knots.append((float(t), float(a)))
        if not knots or any(b[0] <= a[0] for a, b in zip(knots, knots[1:])):
            raise ValueError(f"profile knots must be non-empty and strictly increasing in time: {text!r}")
        return Profile(kind, knots=tuple(knots))
    raise ValueError(f"unknown profile kind {kind!r}")
