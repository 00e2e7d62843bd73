"""1-DoF dual-copter on a roll joint, its motors, the actuated disk and the encoders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .profiles import Profile

G = 9.81
DEFAULT_ARM = 0.15
DEFAULT_THRUST_COEFF = 1.17e-3
DEFAULT_BIAS_UNITS = 170


class SimulationFault(RuntimeError):
    """Raised when the plant state becomes non-finite."""


@dataclass(frozen=True)
class PlantParams:
    inertia: float = 0.03                      # kg m^2
    arm_length: float = DEFAULT_ARM            # m
    thrust_coefficient: float = DEFAULT_THRUST_COEFF  # N per thrust unit
    viscous_friction: float = 0.012            # N m s
    motor_time_constant_ms: float = 120.0
    motor_delay_ms: float = 0.0                # optional pure transport delay
    encoder_quantum: float = 0.1               # deg
    encoder_noise_sd: float = 0.2 / 3          # deg
    # torque (N m) from motor mismatch; by default exactly offset by the thrust-map bias
    rig_bias_torque: float = 2 * DEFAULT_BIAS_UNITS * DEFAULT_ARM * DEFAULT_THRUST_COEFF
    # centre-of-mass offset: torque = -imbalance * sin(roll - imbalance_phase)
    imbalance: float = 0.0                     # N m
    imbalance_phase: float = 0.0               # deg

    def __post_init__(self):
        for name in ("inertia", "arm_length", "thrust_coefficient", "viscous_friction",
                     "motor_time_constant_ms", "encoder_quantum"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.encoder_noise_sd < 0 or self.motor_delay_ms < 0 or self.imbalance < 0:
            raise ValueError("noise, delay and imbalance must be non-negative")

    @property
    def torque_per_unit(self) -> float:
        """Roll torque (N m) per unit of right-minus-left thrust."""
        return self.arm_length * self.thrust_coefficient

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def weight_torque(mass_kg: float = 0.125, params: PlantParams | None = None) -> float:
    """Torque of a mass hung at the end of one arm (taken constant over the roll range)."""
    arm = (params or PlantParams()).arm_length
    return mass_kg * G * arm


@dataclass
class PlantState:
    roll: float = 0.0              # deg, unwrapped
    roll_rate: float = 0.0         # deg/s
    thrust_l: float = 0.0          # lagged motor thrust, units
    thrust_r: float = 0.0
    disk_angle: float = 0.0        # deg
    disturbance_torque: float = 0.0
    time_us: int = 0


class Plant:
    """Semi-implicit Euler integration of the roll joint at a fixed step."""

    def __init__(self, params: PlantParams | None = None, state: PlantState | None = None,
                 dt_us: int = 50):
        self.params = params or PlantParams()
        self.state = state or PlantState()
        self.dt_us = dt_us
        self._alpha = 1.0 - math.exp(-dt_us / (self.params.motor_time_constant_ms * 1000.0))
        n_delay = int(round(self.params.motor_delay_ms * 1000.0 / dt_us))
        self._queue: list[tuple[float, float]] | None = [] if n_delay else None
        self._n_delay = n_delay

    def settle_thrust(self, thrust_l: float, thrust_r: float) -> None:
        """Start with the motors already at the given thrusts."""
        self.state.thrust_l = thrust_l
        self.state.thrust_r = thrust_r
        if self._queue is not None:
            self._queue = [(thrust_l, thrust_r)] * self._n_delay

    def step(self, cmd_l: float, cmd_r: float) -> PlantState:
        p, s = self.params, self.state
        if self._queue is not None:
            self._queue.append((cmd_l, cmd_r))
            cmd_l, cmd_r = self._queue.pop(0) if len(self._queue) > self._n_delay else (s.thrust_l, s.thrust_r)
        s.thrust_l += self._alpha * (cmd_l - s.thrust_l)
        s.thrust_r += self._alpha * (cmd_r - s.thrust_r)
        omega = math.radians(s.roll_rate)
        torque = (p.torque_per_unit * (s.thrust_r - s.thrust_l) + p.rig_bias_torque
                  - p.viscous_friction * omega + s.disturbance_torque)
        if p.imbalance:
            torque -= p.imbalance * math.sin(math.radians(s.roll - p.imbalance_phase))
        dt = self.dt_us * 1e-6
        omega += torque / p.inertia * dt
        s.roll_rate = math.degrees(omega)
        s.roll += s.roll_rate * dt
        s.time_us += self.dt_us
        if not (math.isfinite(s.roll) and math.isfinite(s.roll_rate)):
            raise SimulationFault(f"non-finite plant state at t={s.time_us} us: roll={s.roll}, rate={s.roll_rate}")
        return s


class Encoder:
    """Quantized angle sensor with seeded Gaussian read noise."""

    def __init__(self, quantum: float = 0.1, noise_sd: float = 0.2 / 3, seed: int = 0):
        self.quantum = quantum
        self.noise_sd = noise_sd
        self.rng = np.random.default_rng(seed)

    def read(self, angle: float) -> float:
        q = round(angle / self.quantum) * self.quantum
        if self.noise_sd:
            q += self.rng.normal(0.0, self.noise_sd)
        return q


def disk_drive(profile: Profile, t_s):
    """Disk angle in degrees (unwrapped) at time ``t_s``."""
    return profile.angle(t_s)


def steady_state_error(torque: float, kp_per_deg: float, params: PlantParams | None = None) -> float:
    """Static roll error (deg) for a constant torque under proportional gain ``kp_per_deg``."""
    p = params or PlantParams()
    return torque / (p.torque_per_unit * kp_per_deg)


def calibrate_thrust_coefficient(target_error_deg: float, torque: float, kp_per_deg: float,
                                 arm_length: float = DEFAULT_ARM) -> float:
    """Thrust coefficient giving ``target_error_deg`` static error for ``torque``."""
    return torque / (arm_length * kp_per_deg * target_error_deg)


GROUND_TRUTH_HEADER = "time_us,roll_deg,roll_rate,disk_deg,thrust_l,thrust_r"
