import dataclasses
import json

import numpy as np
import pytest

from clocksync.harness import (
    AggregateStats,
    build_environment,
    run_experiment,
    run_trial,
    simulate_batch,
)
from clocksync.scenario import ScenarioError, audit, load_scenario, parse_scenario
from clocksync.topology import all_pairs

from .conftest import SCENARIOS


def small_rwp(iterations=60, **kw):
    sc = load_scenario(SCENARIOS / "rwp10.json")
    return dataclasses.replace(sc, iterations=iterations, **kw)


def static_pairwise(edges, step):
    doc = {
        "nodes": 4,
        "references": [4],
        "topology": {"type": "deterministic", "graphs": [edges]},
        "measurement": {"type": "pairwise", "delay": {"type": "none"}},
        "algorithm": {"step": step},
        "iterations": 400,
    }
    return parse_scenario(doc)


def test_noiseless_static_graph_converges():
    rec = run_trial(static_pairwise([[1, 4], [2, 4], [3, 4]], {"c1": 1, "c2": 1}), "disync", seed=4)
    te = rec.metrics["time_error"]
    assert np.abs(te[0]).max() > 1e-4
    # what is left is the offset-channel term beta_v (1 - alpha_u / alpha_v), a few 1e-7 s
    assert np.abs(te[-1]).max() < 1e-6
    assert np.abs(rec.metrics["log_skew_error"][-1]).max() < 1e-12


def test_noiseless_ring_error_shrinks():
    rec = run_trial(static_pairwise([[1, 2], [2, 3], [3, 4], [1, 4]], {"c1": 1, "c2": 3}), "disync", seed=4)
    te = np.abs(rec.metrics["time_error"]).max(axis=-1)
    assert te[-1] < 0.05 * te[0]
    assert np.all(np.diff(te[50:]) <= 1e-12)


def test_same_seed_bit_identical():
    sc = small_rwp()
    a = run_trial(sc, "disync-i", 9, trial=2)
    b = run_trial(sc, "disync-i", 9, trial=2)
    for k in a.metrics:
        assert np.array_equal(a.metrics[k], b.metrics[k])
    assert (a.seed, a.trial, a.algorithm) == (9, 2, "disync-i")


@pytest.mark.parametrize("algo", ["disync", "jat-i", "ats"])
def test_batch_matches_single_trial(algo):
    sc = small_rwp()
    batch = simulate_batch(sc, algo, 5, range(4))
    single = run_trial(sc, algo, 5, trial=3)
    for k, v in single.metrics.items():
        assert np.array_equal(batch[k][3], v)


def test_common_random_numbers():
    sc = small_rwp()
    env_a = build_environment(sc, 3, 1)
    env_b = build_environment(sc, 3, 1)
    assert np.array_equal(env_a.zeta, env_b.zeta)
    assert np.array_equal(env_a.adjacency, env_b.adjacency)
    d = simulate_batch(sc, "disync", 3, [1])
    j = simulate_batch(sc, "jat", 3, [1])
    # both start from x_hat = 0, so the first recorded errors coincide
    assert np.array_equal(d["time_error"][:, 0], j["time_error"][:, 0])


def test_metrics_finite_and_shaped():
    sc = small_rwp()
    out = simulate_batch(sc, "disync-i", 1, range(2))
    assert out["log_skew_error"].shape == (2, 61, 9)
    assert out["max_sync_error"].shape == (2, 61)
    assert all(np.all(np.isfinite(v)) for v in out.values())
    assert np.all(out["max_sync_error"] >= 0)


def test_antisymmetric_pair_storage():
    sc = small_rwp()
    env = build_environment(sc, 0, 0)
    assert env.zeta.shape == (2, 60, len(all_pairs(10)))
    assert np.all(env.variables[:, 9] == 0)


def test_one_trial_stats():
    sc = small_rwp()
    res = run_experiment(sc, ["disync"], trials=1, seed=2)
    single = run_trial(sc, "disync", 2, trial=0)
    agg = res.stats["disync"]
    for k, v in single.metrics.items():
        assert np.array_equal(agg.mean[k], v)
        assert not agg.variance[k].any()


def test_aggregation_order_independent():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(37, 5, 3)) * 1e3
    parts = [data[i : i + 5] for i in range(0, 37, 5)]
    a = AggregateStats()
    for p in parts:
        a = a.merge(AggregateStats.from_batch({"m": p}))
    b = AggregateStats()
    for i in rng.permutation(len(parts)):
        b = AggregateStats.from_batch({"m": parts[i]}).merge(b)
    assert a.count == b.count == 37
    assert np.allclose(a.mean["m"], b.mean["m"], rtol=0, atol=1e-12 * 1e3)
    assert np.allclose(a.variance["m"], data.var(axis=0), rtol=1e-12)
    assert np.all(a.variance["m"] >= 0)


def test_chunking_does_not_change_statistics_beyond_rounding():
    sc = small_rwp(iterations=20)
    a = run_experiment(sc, ["jat"], trials=6, seed=1, chunk=6).stats["jat"]
    b = run_experiment(sc, ["jat"], trials=6, seed=1, chunk=2).stats["jat"]
    for k in a.mean:
        assert np.allclose(a.mean[k], b.mean[k], rtol=1e-12, atol=1e-18)


def test_jat_skew_variance_plateaus_while_disync_decays():
    sc = small_rwp(iterations=400, pause=None)
    d = simulate_batch(sc, "disync", 11, range(20))["log_skew_error"]
    j = simulate_batch(sc, "jat", 11, range(20))["log_skew_error"]
    dv = d.var(axis=0).mean(axis=-1)
    jv = j.var(axis=0).mean(axis=-1)
    assert dv[400] < 0.3 * dv[100]
    assert 0.3 < jv[400] / jv[200] < 3
    assert dv[400] < 0.1 * jv[400]


def test_synthetic_report_mean_heads_to_prediction():
    sc = dataclasses.replace(load_scenario(SCENARIOS / "report_deterministic.json"), iterations=2000)
    res = run_experiment(sc, ["disync"], trials=200, seed=5)
    tail = res.stats["disync"].mean["error"][-200:].mean(axis=0)
    assert tail == pytest.approx(res.predicted_bias, abs=0.25)


def test_ats_rejects_synthetic_scenario():
    sc = load_scenario(SCENARIOS / "report_deterministic.json")
    with pytest.raises(ScenarioError):
        simulate_batch(dataclasses.replace(sc, iterations=5), "ats", 0, [0])


def test_scenario_errors():
    with pytest.raises(ScenarioError):
        parse_scenario({"nodes": 3, "references": [1]})
    with pytest.raises(ScenarioError):
        parse_scenario({"nodes": 3, "references": []})
    with pytest.raises(ScenarioError):
        parse_scenario({"nodes": 3, "schema_version": 9})
    with pytest.raises(ScenarioError):
        parse_scenario({"nodes": 3, "topology": {"type": "markov", "graphs": [[[1, 2]]], "transition": [[0.5]]}})
    with pytest.raises(ScenarioError):
        parse_scenario({"nodes": 3, "topology": {"type": "mobility"}, "algorithms": ["nope"]})


def test_audit_flags_invariant_problems():
    good = load_scenario(SCENARIOS / "report_markov.json")
    assert audit(good) == []
    doc = json.loads((SCENARIOS / "report_markov.json").read_text())
    doc["topology"]["graphs"] = [[[1, 2]], [[3, 4]], [[1, 2]]]
    doc["topology"]["transition"] = [[0, 1, 0], [0, 0, 1], [1, 0, 0]]
    problems = audit(parse_scenario(doc))
    assert any("not connected" in p for p in problems)
    assert any("aperiodic" in p for p in problems)
    rwp = json.loads((SCENARIOS / "rwp10.json").read_text())
    rwp["clocks"]["bounds"] = {"skew_lo": 1.0, "skew_hi": 1.00001, "offset_lo": -0.01, "offset_hi": 0.01}
    assert any("skew range" in p for p in audit(parse_scenario(rwp)))
