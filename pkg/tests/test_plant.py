import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neurotrack.control import CPU_GAINS, ThrustMap
from neurotrack.plant import (
    Encoder,
    Plant,
    PlantParams,
    PlantState,
    SimulationFault,
    calibrate_thrust_coefficient,
    disk_drive,
    steady_state_error,
    weight_torque,
)
from neurotrack.profiles import constant, parse_profile

BALANCED = PlantParams(rig_bias_torque=0.0)


def test_equal_thrusts_hold_roll():
    p = Plant(BALANCED, PlantState(roll=12.0))
    p.settle_thrust(3000, 3000)
    for _ in range(2000):
        s = p.step(3000, 3000)
    assert s.roll == 12.0 and s.roll_rate == 0.0


def test_motor_lag_reaches_63_percent_at_tau():
    p = Plant(BALANCED)
    p.settle_thrust(0, 0)
    n = int(BALANCED.motor_time_constant_ms * 1000 / 50)
    for _ in range(n):
        s = p.step(0, 1000)
    assert s.thrust_r == pytest.approx(1000 * (1 - math.exp(-1)), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-500, 500), min_size=5, max_size=40), st.floats(-3, 3))
def test_motor_lag_is_linear(cmds, k):
    def response(seq):
        p = Plant(BALANCED)
        p.settle_thrust(0, 0)
        return np.array([p.step(0, c).thrust_r for c in seq])

    a = np.array(cmds)
    b = np.roll(a, 3)
    np.testing.assert_allclose(response(a + k * b), response(a) + k * response(b), atol=1e-6)


def test_friction_dissipates_spin():
    p = Plant(BALANCED, PlantState(roll_rate=300.0))
    p.settle_thrust(2000, 2000)
    rates = [p.step(2000, 2000).roll_rate for _ in range(20000 * 30)][::20000]
    assert all(b < a for a, b in zip(rates, rates[1:]))
    assert rates[-1] < 0.01 * 300


def test_default_rig_bias_cancels_thrust_map_bias():
    tm = ThrustMap()
    p = Plant(PlantParams())
    p.settle_thrust(*tm(0.0))
    for _ in range(4000):
        s = p.step(*tm(0.0))
    assert abs(s.roll) < 1e-9


def test_non_finite_state_faults():
    p = Plant(BALANCED, PlantState(roll_rate=float("inf")))
    with pytest.raises(SimulationFault):
        p.step(0, 0)


def test_weight_calibration_statics():
    tau = weight_torque(0.125)
    assert tau == pytest.approx(0.125 * 9.81 * 0.15)
    assert steady_state_error(tau, CPU_GAINS.kp) == pytest.approx(20.0, abs=0.1)
    c = calibrate_thrust_coefficient(20.0, tau, CPU_GAINS.kp)
    assert steady_state_error(tau, CPU_GAINS.kp, PlantParams(thrust_coefficient=c)) == pytest.approx(20.0)


def test_encoder_quantizes():
    e = Encoder(noise_sd=0.0)
    assert e.read(12.34) == pytest.approx(12.3)
    assert e.read(-0.04) == 0.0


def test_encoder_noise_unbiased_and_bounded():
    e = Encoder(seed=4)
    reads = np.array([e.read(0.0) for _ in range(10_000)])
    assert abs(reads.mean()) < 0.005
    assert reads.std() == pytest.approx(0.2 / 3, rel=0.05)
    e = Encoder(seed=5)
    a = np.array([e.read(7.77) for _ in range(2000)])
    assert np.abs(np.diff(a)).max() <= 0.1 + 4 * (0.2 / 3) * math.sqrt(2)


def test_disk_drive():
    prof = constant(1200)
    assert disk_drive(prof, 1.0) == 1200.0 and disk_drive(prof, 1.0) % 360 == 120
    assert disk_drive(constant(0, 15), 3.0) == 15
    steps = parse_profile("steps:0=0,0.5=40,1.5=-20")
    assert [disk_drive(steps, t) for t in (0.2, 0.6, 2.0)] == [0, 40, -20]
    ramps = parse_profile("ramps:0=0,1=40")
    assert disk_drive(ramps, 0.25) == pytest.approx(10)


def test_params_validation():
    with pytest.raises(ValueError):
        PlantParams(inertia=0)
    with pytest.raises(ValueError):
        PlantParams(encoder_noise_sd=-1)


def test_pure_delay_shifts_motor_response():
    base = Plant(BALANCED)
    late = Plant(PlantParams(rig_bias_torque=0.0, motor_delay_ms=5))
    for p in (base, late):
        p.settle_thrust(0, 0)
    a = [base.step(0, 1000).thrust_r for _ in range(400)]
    b = [late.step(0, 1000).thrust_r for _ in range(400)]
    np.testing.assert_allclose(b[100:], a[:300])
