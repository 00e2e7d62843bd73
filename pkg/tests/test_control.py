import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neurotrack.control import (
    CPU_GAINS,
    ERROR_CODE,
    RATE_CODE,
    AdaptationConfig,
    CpuPdController,
    DecodeError,
    OutputDecode,
    PdGains,
    PositionCode,
    RateEstimator,
    SnnPdController,
    ThrustMap,
    adaptation_trigger_check,
    cpu_pd,
    pd_index_table,
    r_neurons_fire,
)

DEC = OutputDecode()


def test_cpu_pd_examples():
    g = PdGains(3000, 900)
    assert cpu_pd(0, 0, g) == 0
    assert cpu_pd(1, 0, g) == 3000
    assert cpu_pd(2, 0, g) == 3700
    assert cpu_pd(-2, 0, g) == -3700


def test_per_radian_gains():
    g = PdGains.per_radian(3000, 900)
    assert g.kp == pytest.approx(52.3599, abs=1e-4)
    assert cpu_pd(math.degrees(0.01), 0, g) == pytest.approx(30.0)
    with pytest.raises(ValueError):
        PdGains(-1, 0)


def test_decode_examples():
    assert DEC.decode(0) == -1850
    assert DEC.decode(360) == pytest.approx(360 / 361 * 3700 - 1850)
    assert DEC.decode(360) == pytest.approx(1839.75, abs=0.01)
    assert DEC.decode(180) == pytest.approx(-5.12, abs=0.01)
    with pytest.raises(DecodeError):
        DEC.decode(361)
    with pytest.raises(DecodeError):
        DEC.decode(-1)


def test_decode_monotone_and_round_trip():
    vals = [DEC.decode(i) for i in range(361)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert all(DEC.encode(DEC.decode(i)) == i for i in range(361))


def test_thrust_map_examples():
    m = ThrustMap()
    assert m(0) == (3050, 2710)
    assert m(3700) == (4900, 860)
    assert m(-340) == (2880, 2880)
    assert ThrustMap(plus_side="right")(0) == (2710, 3050)


@given(st.floats(-3700, 3700))
def test_thrusts_stay_positive(u):
    left, right = ThrustMap()(u)
    assert left > 0 and right > 0
    assert left - right == pytest.approx(u + 340)


def test_position_code_clamps():
    c = PositionCode(361, -90, 90)
    assert c.index(0) == 180 and c.index(90) == 360 and c.index(500) == 360 and c.index(-500) == 0
    assert c.value(180) == 0


def test_rate_estimator_five_sample_difference():
    r = RateEstimator(5)
    out = [r.push(0.002 * 1000 * k) for k in range(10)]  # 2 deg per ms
    assert out[-1] == pytest.approx(2000.0)
    r = RateEstimator(5)
    for a in (88.0, 89.0, -90.0, -89.0, -88.0, -87.0):
        v = r.push(a)
    assert v == pytest.approx(1000.0)  # wrap-aware


# --- spiking PD --------------------------------------------------------------------------

def test_snn_pd_centre_and_edge():
    c = SnnPdController(CPU_GAINS)
    assert c.update(0.0, 0.0).u == pytest.approx(DEC.decode(180))
    c = SnnPdController(CPU_GAINS)
    assert c.update(90.0, 0.0).u == pytest.approx(DEC.decode(360))


def test_index_table_saturates():
    t = pd_index_table(CPU_GAINS, ERROR_CODE, RATE_CODE, DEC)
    assert t.min() == 0 and t.max() == 360
    assert t[180, 180] == 180


def test_snn_pd_matches_cpu_pd_sweep():
    rng = np.random.default_rng(5)
    c = SnnPdController(CPU_GAINS)
    for _ in range(100):
        th, rt = rng.uniform(-30, 30), rng.uniform(-120, 120)
        th_q = ERROR_CODE.value(ERROR_CODE.index(th))
        rt_q = RATE_CODE.value(RATE_CODE.index(rt))
        expected = cpu_pd(th_q, rt_q, CPU_GAINS, clamp=1850)
        got = c.update(th, rt).u
        assert abs(got - expected) <= DEC.step + abs(DEC.decode(180)) + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 360), st.integers(0, 360))
def test_index_table_vs_cpu_grid(i, j):
    t = pd_index_table(CPU_GAINS, ERROR_CODE, RATE_CODE, DEC)
    u = cpu_pd(ERROR_CODE.value(i), RATE_CODE.value(j), CPU_GAINS, clamp=1850)
    decoded = DEC.decode(int(t[i, j]))
    if -1850 + DEC.step < u < DEC.decode(360):
        assert abs(decoded - u) <= DEC.step + abs(DEC.decode(180))


# --- adaptation --------------------------------------------------------------------------

def test_trigger_oracle_examples():
    eps = 25.0
    assert not adaptation_trigger_check(np.zeros(500), eps)
    assert adaptation_trigger_check(np.full(500, math.sqrt(2 * eps)), eps)
    assert not adaptation_trigger_check(np.full(500, math.sqrt(0.5 * eps)), eps)


def test_r_neurons_against_oracle_examples():
    cfg = AdaptationConfig()
    assert not r_neurons_fire(np.zeros(500), cfg)
    assert r_neurons_fire(np.full(500, 7.5), cfg)       # 56.25 deg^2
    assert not r_neurons_fire(np.full(500, 3.5), cfg)   # 12.25 deg^2
    assert r_neurons_fire(np.full(500, -7.5), cfg)


def test_sustained_error_raises_feed_forward():
    c = SnnPdController(CPU_GAINS, adaptive=True)
    ffs = [c.update(10.0, 0.0).ff_term for _ in range(1500)]
    assert c.ff_weight > 0
    assert all(b >= a for a, b in zip(ffs, ffs[1:]))
    # B reads the weights one tick after they change
    assert c.update(0.0, 0.0).ff_term == pytest.approx(c.ff_weight * c.cfg.ff_increment)
    assert all(r == "R+" for _, r in c.r_events)


def test_one_weight_step_per_window():
    c = SnnPdController(CPU_GAINS, adaptive=True)
    for _ in range(3 * c.cfg.window_ms):
        c.update(30.0, 0.0)
    assert c.ff_weight == 3 and len(c.r_events) == 3


def test_zero_error_leaves_weights_alone():
    c = SnnPdController(CPU_GAINS, adaptive=True)
    for _ in range(2000):
        s = c.update(0.0, 0.0)
    assert c.ff_weight == 0 and s.ff_term == 0 and not c.r_events


def test_oscillating_error_has_no_net_drift():
    c = SnnPdController(CPU_GAINS, adaptive=True)
    for k in range(2000):
        c.update(12.0 if (k // 10) % 2 == 0 else -12.0, 0.0)
    kinds = [r for _, r in c.r_events]
    assert kinds.count("R+") > 0 and kinds.count("R-") > 0
    assert abs(c.ff_weight) <= 1


def test_feed_forward_saturates_at_span():
    cfg = AdaptationConfig(window_ms=50)
    c = SnnPdController(CPU_GAINS, adaptive=True, adaptation=cfg)
    for _ in range(50 * (cfg.b_size - cfg.baseline + 4)):
        s = c.update(60.0, 0.0)
    assert c.ff_weight == cfg.b_size - cfg.baseline
    assert s.ff_term == pytest.approx((cfg.b_size - cfg.baseline) * cfg.ff_increment)


def test_cpu_controller_signal():
    s = CpuPdController(PdGains(10, 1)).update(2.0, 5.0)
    assert s.u == 25.0 and (s.thrust_l, s.thrust_r) == ThrustMap()(25.0)
