import numpy as np
import pytest

from clocksync.clock import ClockParams
from clocksync.pairwise import (
    LOG_SKEW,
    OFFSET,
    DegenerateExchange,
    DelayModel,
    ExchangeRecord,
    estimate_relative,
    exchange_stamps,
    measurement_initiator,
    run_exchange,
    to_difference,
    true_relative,
)

ZERO = DelayModel()


def test_identity_clocks_zero_delay():
    rec = run_exchange(ClockParams(1, 0), ClockParams(1, 0), 3.0, ZERO, np.random.default_rng(0))
    assert np.array_equal(rec.u[[0, 2]], rec.v[[0, 2]])
    assert np.array_equal(rec.u[[1, 3]], rec.v[[1, 3]])
    assert estimate_relative(rec) == (1.0, 0.0)


def test_zero_delay_event_algebra():
    u, v = ClockParams(1.00002, 0.004), ClockParams(0.99999, -0.006)
    rec = run_exchange(u, v, 10.0, ZERO, np.random.default_rng(0))
    t_send = (rec.u[0] - u.offset) / u.skew
    assert rec.v[0] == pytest.approx(v.skew * t_send + v.offset, abs=1e-12)
    assert np.all(np.diff(rec.u) > 0) and np.all(np.diff(rec.v) > 0)


def test_closed_form_relative_parameters():
    u, v = ClockParams(1.00002, 0.004), ClockParams(0.99999, -0.006)
    skew, off = estimate_relative(run_exchange(u, v, 10.0, ZERO, np.random.default_rng(0)))
    ratio = 1.00002 / 0.99999
    assert skew == pytest.approx(ratio, rel=1e-12)
    assert off == pytest.approx(0.004 + 0.006 * ratio, abs=1e-12)
    assert (skew, off) == pytest.approx(true_relative(u, v), rel=1e-9)


def test_gaussian_delay_shifts_reception():
    rng = np.random.default_rng(1)
    model = DelayModel.gaussian(150e-6, 10e-6)
    d = model.sample(rng, (4, 10_000))
    zero = exchange_stamps(0.99999, 0.001, 1.00001, -0.002, 5.0, np.zeros((4, 1)))
    rec = exchange_stamps(0.99999, 0.001, 1.00001, -0.002, 5.0, d)
    lag = (rec.v[0] - zero.v[0]) / 1.00001
    assert np.allclose(lag, d[0], atol=1e-12)
    assert lag.mean() == pytest.approx(150e-6, abs=1e-6)
    assert lag.std() == pytest.approx(10e-6, rel=0.05)


def test_delay_model_config_and_clamp():
    m = DelayModel.from_config({"type": "gaussian", "mean_us": 150, "std_us": 10})
    assert (m.mean, m.std) == pytest.approx((150e-6, 10e-6))
    assert DelayModel.from_config({}).kind == "none"
    heavy = DelayModel.gaussian(0.0, 1.0)
    assert heavy.sample(np.random.default_rng(0), 1000).min() >= 0
    with pytest.raises(ValueError):
        DelayModel("gaussian", -1.0, 0.0)


def test_degenerate_exchange_rejected():
    rec = ExchangeRecord(np.array([0.0, 1.0, 2.0, 3.0]), np.array([1.0, 1.0, 1.0, 1.0]))
    with pytest.raises(DegenerateExchange):
        estimate_relative(rec)


def test_to_difference_and_antisymmetry():
    s, o = to_difference(1.0, 0.0, 2, 1, 0)
    assert (s.value, o.value) == (0.0, 0.0)
    s, o = to_difference(1.00003, 0.01, 4, 2, 7)
    assert s.channel == LOG_SKEW and o.channel == OFFSET
    r = o.reversed()
    assert (r.u, r.v, r.value) == (2, 4, -0.01)
    assert r.reversed() == o
    with pytest.raises(ValueError):
        to_difference(0.0, 0.0, 1, 0, 0)


def test_offset_bias_with_zero_delay():
    u, v = ClockParams(1.00002, 0.004), ClockParams(0.99999, -0.006)
    _, off = estimate_relative(run_exchange(u, v, 10.0, ZERO, np.random.default_rng(0)))
    noise = off - (u.offset - v.offset)
    assert noise == pytest.approx(v.offset * (1 - u.skew / v.skew), rel=1e-6)
    assert noise != 0


def test_initiator_rule():
    assert measurement_initiator(3, 7) == 7
    assert measurement_initiator(7, 3) == 7
    assert measurement_initiator(1, 2) == 2


def test_noise_magnitude_with_paper_delays():
    rng = np.random.default_rng(4)
    n = 10_000
    su, sv = rng.uniform(1 - 2e-5, 1 + 2e-5, (2, n))
    ou, ov = rng.uniform(-1e-2, 1e-2, (2, n))
    d = DelayModel.gaussian(150e-6, 10e-6).sample(rng, (4, n))
    skew, off = estimate_relative(exchange_stamps(su, ou, sv, ov, 1.0, d))
    assert np.std(off - (ou - ov * su / sv)) < 1e-3
    assert np.std(np.log(skew) - np.log(su / sv)) < 1e-4
