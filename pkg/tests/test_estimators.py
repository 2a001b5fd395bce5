import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clocksync.estimators import (
    ALGORITHMS,
    AlgorithmConfig,
    StepSize,
    average_distance_batch,
    average_distance_step,
    disync_i_update,
    disync_step,
    disync_update,
    initial_distance,
    jat_step,
    pause_resume,
    recover_clock_estimate,
    step_gain,
    unified_step,
)


def test_step_gain_examples():
    assert step_gain(StepSize(1.5, 1), 0) == 1.5
    assert step_gain(StepSize(1, 3), 0) == pytest.approx(1 / 3)
    assert step_gain(StepSize(1, 3), 97) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        StepSize(0, 1)


def test_disync_update_examples():
    assert disync_update(0.7, [], 0.5) == 0.7
    # exact neighbour and noiseless measurement with unit gain lands on the truth
    assert disync_update(0.0, [(2.0, 1.5 - 2.0)], 1.0) == 1.5


def test_average_distance_examples():
    assert average_distance_step(2.0, []) == 2.25
    assert average_distance_step(3.0, [1.0, 3.0]) == 2.0
    assert average_distance_step(math.inf, [0.0]) == 0.0
    assert average_distance_step(math.inf, [math.inf]) == math.inf
    assert average_distance_step(1.0, [2.0, math.inf]) == 1.25


def test_config_rules():
    with pytest.raises(ValueError):
        AlgorithmConfig(k_h=10, k_H=20)
    jat = AlgorithmConfig.named("jat")
    assert (jat.k_h, jat.k_H) == (math.inf, 0)
    assert AlgorithmConfig.named("disync-i", switch=40).k_h == 40
    with pytest.raises(ValueError):
        AlgorithmConfig.named("nope")


def test_named_corners_reproduce_jat():
    cfg = AlgorithmConfig.named("jat")
    nb = [(1.0, 0.2, 5.0), (-1.0, 0.1, 0.0)]
    got = disync_i_update(0.5, 3.0, nb, 7, cfg)
    assert got == disync_update(0.5, [(1.0, 0.2), (-1.0, 0.1)], 1 / 3)


def test_switch_at_forty():
    cfg = AlgorithmConfig(40, 40, StepSize(1, 3))
    nb = [(1.0, 0.0, 0.0), (3.0, 0.0, 5.0)]
    # at k=39 only the closer neighbour counts and the averaging gain applies
    assert disync_i_update(0.0, 1.0, nb, 39, cfg) == disync_update(0.0, [(1.0, 0.0)], 0.5)
    assert disync_i_update(0.0, 1.0, nb, 40, cfg) == disync_update(0.0, [(1.0, 0.0), (3.0, 0.0)], 1 / 3)
    # no closer neighbour before k_H: no update
    assert disync_i_update(0.0, 0.0, [(3.0, 0.0, 5.0)], 10, cfg) == 0.0


def test_pause_resume_examples():
    assert pause_resume(500, (400, 600), 40) is None
    assert pause_resume(601, (400, 600), 40) == 361
    assert pause_resume(123, None, 0) == 123
    cfg = AlgorithmConfig(40, 40, StepSize(1, 3), (400, 600))
    assert disync_i_update(0.3, 1.0, [(1.0, 0.0, 0.0)], 500, cfg) == 0.3


def test_recover_clock_estimate():
    assert recover_clock_estimate(0.0, 0.0) == (1.0, 0.0)
    s, o = recover_clock_estimate(math.log(1.00002), -0.004)
    assert s == pytest.approx(1.00002, rel=1e-15) and o == -0.004


def _random_instance(rng, n=6, n_b=5, trials=3):
    adj = rng.random((trials, n, n)) < 0.4
    adj = np.triu(adj, 1)
    adj = adj | np.swapaxes(adj, -1, -2)
    z = rng.normal(size=(trials, n, n))
    z = np.triu(z, 1)
    z = z - np.swapaxes(z, -1, -2)
    x = rng.normal(size=(trials, n))
    x[:, n_b:] = 0
    return x, adj, z


@pytest.mark.parametrize("name", ALGORITHMS)
def test_batched_law_matches_node_law(name):
    rng = np.random.default_rng(8)
    n, n_b = 6, 5
    cfg = AlgorithmConfig.named(name, StepSize(1, 3), switch=3, pause=(6, 7))
    x, _, _ = _random_instance(rng, n, n_b, trials=2)
    y = initial_distance((2, n), n_b)
    for k in range(12):
        _, adj, z = _random_instance(rng, n, n_b, trials=2)
        new_x, new_y = unified_step(x, y, adj, z, k, cfg, n_b)
        for t in range(2):
            for u in range(n_b):
                nb = [(x[t, v], z[t, u, v], y[t, v]) for v in range(n) if adj[t, u, v]]
                assert new_x[t, u] == pytest.approx(disync_i_update(x[t, u], y[t, u], nb, k, cfg), abs=1e-13)
                if k < cfg.k_H and not 6 <= k <= 7:
                    assert new_y[t, u] == average_distance_step(y[t, u], [y[t, v] for v in range(n) if adj[t, u, v]])
        x, y = new_x, new_y
        assert np.all(x[:, n_b:] == 0)


def test_table_corners_bit_identical_to_dedicated_paths():
    rng = np.random.default_rng(21)
    n, n_b = 6, 4
    step = StepSize(1, 3)
    pause = (5, 8)
    x0, _, _ = _random_instance(rng, n, n_b)
    traces = [_random_instance(rng, n, n_b)[1:] for _ in range(20)]
    xd, xj = x0.copy(), x0.copy()
    xu_d, xu_j = x0.copy(), x0.copy()
    yd = yj = initial_distance(x0.shape, n_b)
    for k, (adj, z) in enumerate(traces):
        xd = disync_step(xd, adj, z, k, step, n_b, pause)
        xj = jat_step(xj, adj, z, k, n_b, pause)
        xu_d, yd = unified_step(xu_d, yd, adj, z, k, AlgorithmConfig.named("disync", step, pause=pause), n_b)
        xu_j, yj = unified_step(xu_j, yj, adj, z, k, AlgorithmConfig.named("jat", step, pause=pause), n_b)
    assert np.array_equal(xd, xu_d)
    assert np.array_equal(xj, xu_j)


@pytest.mark.parametrize("name", ALGORITHMS)
def test_noiseless_fixed_point(name):
    rng = np.random.default_rng(2)
    n, n_b = 6, 5
    x, adj, _ = _random_instance(rng, n, n_b)
    z = x[:, :, None] - x[:, None, :]
    y = np.zeros((3, n))
    new, _ = unified_step(x, y, adj, z, 50, AlgorithmConfig.named(name), n_b)
    assert np.allclose(new, x, atol=1e-14)


def test_distance_becomes_finite_near_reference():
    n, n_b = 4, 3
    adj = np.zeros((n, n), dtype=bool)
    for u, v in [(0, 3), (0, 1), (1, 2)]:
        adj[u, v] = adj[v, u] = True
    y = initial_distance((n,), n_b)
    for _ in range(10):
        y = average_distance_batch(y, adj, n_b)
    assert np.all(np.isfinite(y)) and y[3] == 0
    assert y.max() < 5


@settings(max_examples=100)
@given(
    st.floats(0, 10),
    st.lists(st.one_of(st.floats(0, 10), st.just(math.inf)), max_size=6),
)
def test_average_distance_never_increases_with_closer_neighbours(y_u, ys):
    new = average_distance_step(y_u, ys)
    if any(y <= y_u for y in ys):
        assert new <= y_u
    else:
        assert new == y_u + 0.25
