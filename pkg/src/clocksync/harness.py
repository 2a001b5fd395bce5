"""Monte Carlo engine: per-trial environments, batched algorithm runs, aggregation.

Seed splitting
--------------
Trial ``i`` of an experiment with master seed ``S`` draws every random
quantity from ``SeedSequence(S, spawn_key=(i, stream))``.  The environment
streams (clocks, topology, measurements, node variables) do not depend on
the algorithm, so all algorithms in one experiment see the same clocks,
graphs and measurement noise (common random numbers).  Randomness private
to an algorithm (only the one-way messages of ``ats``) uses a stream keyed
by the algorithm's id, so adding algorithms never perturbs existing ones.

Metrics are taken at ``t_k = k * dwell`` for ``k = 0..K`` from the state
before update ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ats import ats_relative_skew, ats_update, virtual_time
from .oracle import ensemble_bias
from .pairwise import estimate_relative, exchange_stamps
from .scenario import ALL_ALGORITHMS, Scenario, ScenarioError
from .topology import DeterministicSwitching, MarkovSwitching, RandomWaypoint, all_pairs
from .estimators import initial_distance, unified_step

STREAM_CLOCKS = 0
STREAM_TOPOLOGY = 1
STREAM_MEASUREMENT = 2
STREAM_VARIABLES = 3
STREAM_ALGORITHM = 16

ALGORITHM_IDS = {name: i for i, name in enumerate(ALL_ALGORITHMS)}
DEFAULT_CHUNK = 250


def stream(master: int, trial: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=(trial, index)))


def metric_names(scenario: Scenario, algorithm: str) -> tuple[str, ...]:
    if algorithm == "ats":
        return ("max_sync_error",)
    if scenario.measurement.kind == "synthetic":
        return ("error",)
    return ("log_skew_error", "offset_error", "time_error", "max_sync_error")


@dataclass
class Environment:
    """Everything an algorithm sees in one trial.

    ``variables`` holds the true node variables per channel ``(C, n)``;
    ``adjacency[k, p]`` says whether pair ``p`` (in :func:`all_pairs` order)
    is linked in iteration ``k``; ``zeta[c, k, p]`` is the measurement of
    ``x_a - x_b`` for pair ``p = (a, b)``, ``a < b``.
    """

    variables: np.ndarray
    adjacency: np.ndarray
    zeta: np.ndarray
    skew: np.ndarray | None = None
    offset: np.ndarray | None = None


def _topology_trace(scenario: Scenario, rng: np.random.Generator, K: int) -> np.ndarray:
    pairs = all_pairs(scenario.n)
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    topo = scenario.topology
    if topo.kind == "mobility":
        walk = RandomWaypoint(
            scenario.n, scenario.n_ref, rng, topo.field_size, topo.comm_range, topo.speed, scenario.period
        )
        out = np.empty((K, len(pairs)), dtype=bool)
        for k in range(K):
            pos = walk.positions_at(k)
            gap = pos[a] - pos[b]
            out[k] = np.hypot(gap[:, 0], gap[:, 1]) < topo.comm_range
        return out
    if topo.kind == "deterministic":
        states = DeterministicSwitching(topo.cycle, topo.prefix).states(K)
    else:
        states = MarkovSwitching(topo.transition, topo.initial, rng).states(K)
    table = np.array([[g.adjacency()[u, v] > 0 for u, v in pairs] for g in topo.ensemble.states])
    return table[states]


def _pair_means(scenario: Scenario) -> np.ndarray:
    table = scenario.measurement.pair_bias
    out = []
    for a, b in all_pairs(scenario.n):
        if (a, b) in table:
            out.append(table[(a, b)])
        elif (b, a) in table:
            out.append(-table[(b, a)])
        else:
            out.append(0.0)
    return np.array(out)


def build_environment(scenario: Scenario, master: int, trial: int) -> Environment:
    K = scenario.iterations
    n, n_b = scenario.n, scenario.n_b
    adjacency = _topology_trace(scenario, stream(master, trial, STREAM_TOPOLOGY), K)
    pairs = all_pairs(n)
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    meas = scenario.measurement
    if meas.kind == "synthetic":
        x = np.zeros((1, n))
        lo, hi = meas.variable_range
        x[0, :n_b] = stream(master, trial, STREAM_VARIABLES).uniform(lo, hi, size=n_b)
        rng = stream(master, trial, STREAM_MEASUREMENT)
        noise = rng.normal(0.0, 1.0, size=(1, K, len(pairs))) * meas.noise_std + _pair_means(scenario)
        zeta = (x[:, a] - x[:, b])[:, None, :] + noise
        return Environment(x, adjacency, zeta)

    rng = stream(master, trial, STREAM_CLOCKS)
    skew = np.ones(n)
    offset = np.zeros(n)
    skew[:n_b] = rng.uniform(*scenario.skew_range, size=n_b)
    offset[:n_b] = rng.uniform(*scenario.offset_range, size=n_b)
    delays = meas.delay.sample(stream(master, trial, STREAM_MEASUREMENT), (4, K, len(pairs)))
    t0 = (np.arange(K) * scenario.period)[:, None]
    # the higher-indexed node initiates, so the exchange measures x_b - x_a
    rec = exchange_stamps(skew[b], offset[b], skew[a], offset[a], t0, delays, scenario.period)
    skew_rel, offset_rel = estimate_relative(rec)
    zeta = -np.stack([np.log(skew_rel), offset_rel])
    return Environment(np.stack([np.log(skew), offset]), adjacency, zeta, skew, offset)


def _stack(envs: Sequence[Environment]) -> Environment:
    first = envs[0]
    return Environment(
        np.stack([e.variables for e in envs]),
        np.stack([e.adjacency for e in envs]),
        np.stack([e.zeta for e in envs]),
        None if first.skew is None else np.stack([e.skew for e in envs]),
        None if first.offset is None else np.stack([e.offset for e in envs]),
    )


class _Expander:
    """Turns per-pair arrays into dense ``(..., n, n)`` matrices."""

    def __init__(self, n: int) -> None:
        pairs = all_pairs(n)
        self.n = n
        self.a = np.array([p[0] for p in pairs], dtype=int)
        self.b = np.array([p[1] for p in pairs], dtype=int)

    def adjacency(self, adj: np.ndarray) -> np.ndarray:
        out = np.zeros(adj.shape[:-1] + (self.n, self.n), dtype=bool)
        out[..., self.a, self.b] = adj
        out[..., self.b, self.a] = adj
        return out

    def antisymmetric(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros(z.shape[:-1] + (self.n, self.n))
        out[..., self.a, self.b] = z
        out[..., self.b, self.a] = -z
        return out


def _estimator_metrics(scenario: Scenario, env: Environment, hist: np.ndarray) -> dict[str, np.ndarray]:
    n_b = scenario.n_b
    err = hist - env.variables[:, None, :, :]
    if scenario.measurement.kind == "synthetic":
        return {"error": err[:, :, 0, :n_b]}
    K = hist.shape[1] - 1
    t = (np.arange(K + 1) * scenario.period)[None, :, None]
    tau = env.skew[:, None, :] * t + env.offset[:, None, :]
    that = (tau - hist[:, :, 1, :]) / np.exp(hist[:, :, 0, :])
    return {
        "log_skew_error": err[:, :, 0, :n_b],
        "offset_error": err[:, :, 1, :n_b],
        "time_error": (that - t)[:, :, :n_b],
        "max_sync_error": that.max(axis=-1) - that.min(axis=-1),
    }


def _run_estimator(scenario: Scenario, algorithm: str, env: Environment) -> dict[str, np.ndarray]:
    cfg = scenario.config(algorithm)
    n_b = scenario.n_b
    T, C, n = env.variables.shape
    K = scenario.iterations
    ex = _Expander(n)
    xhat = np.zeros((T, C, n))
    y = initial_distance((T, 1, n), n_b)
    hist = np.empty((T, K + 1, C, n))
    for k in range(K):
        hist[:, k] = xhat
        adj = ex.adjacency(env.adjacency[:, k])[:, None]
        zeta = ex.antisymmetric(env.zeta[:, :, k])
        xhat, y = unified_step(xhat, y, adj, zeta, k, cfg, n_b)
    hist[:, K] = xhat
    return _estimator_metrics(scenario, env, hist)


def _run_ats(scenario: Scenario, env: Environment, master: int, trials: Sequence[int]) -> dict[str, np.ndarray]:
    if env.skew is None:
        raise ScenarioError("ats needs clock exchanges; the scenario uses synthetic measurements")
    T, n = env.skew.shape
    K = scenario.iterations
    dwell = scenario.period
    rho = scenario.ats_rho
    ex = _Expander(n)
    rngs = [stream(master, i, STREAM_ALGORITHM + ALGORITHM_IDS["ats"]) for i in trials]
    skew, off = env.skew, env.offset
    varrho = np.ones((T, n))
    o = np.zeros((T, n))
    alpha = np.ones((T, n, n))
    out = np.empty((T, K + 1))

    def spread(k):
        tau = skew * (k * dwell) + off
        that = virtual_time(varrho, o, tau)
        return that.max(axis=-1) - that.min(axis=-1)

    for k in range(K):
        out[:, k] = spread(k)
        if scenario.pause is not None and scenario.pause[0] <= k <= scenario.pause[1]:
            continue
        t = k * dwell
        adj = ex.adjacency(env.adjacency[:, k])
        d = np.stack([scenario.measurement.delay.sample(g, (2, n, n)) for g in rngs], axis=1)
        # v broadcasts at t and half an iteration later on its own clock
        tau_v1 = (skew * t + off)[:, None, :]
        tau_v2 = tau_v1 + dwell / 2.0
        t_v2 = (tau_v2 - off[:, None, :]) / skew[:, None, :]
        su, ou = skew[:, :, None], off[:, :, None]
        tau_u1 = su * (t + d[0]) + ou
        tau_u2 = su * (t_v2 + d[1]) + ou
        new_alpha = ats_relative_skew(alpha, (tau_v2, tau_v1), (tau_u2, tau_u1), rho)
        alpha = np.where(adj, new_alpha, alpha)
        that_v = virtual_time(varrho, o, tau_v1[:, 0, :])[:, None, :]
        seen = virtual_time(varrho[:, :, None], o[:, :, None], tau_u1)
        tau_now = skew * t + off
        varrho, o = ats_update(
            varrho, o, tau_now, varrho[:, None, :], that_v, seen, alpha, adj, rho, rho
        )
    out[:, K] = spread(K)
    return {"max_sync_error": out}


def simulate_batch(
    scenario: Scenario, algorithm: str, seed: int, trials: Iterable[int]
) -> dict[str, np.ndarray]:
    """Run ``algorithm`` on the given trial indices; arrays have a leading trial axis."""
    if algorithm not in ALL_ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    trials = list(trials)
    env = _stack([build_environment(scenario, seed, i) for i in trials])
    if algorithm == "ats":
        return _run_ats(scenario, env, seed, trials)
    return _run_estimator(scenario, algorithm, env)


@dataclass
class TrialRecord:
    seed: int
    trial: int
    algorithm: str
    metrics: dict[str, np.ndarray]


def run_trial(scenario: Scenario, algorithm: str, seed: int, trial: int = 0) -> TrialRecord:
    batch = simulate_batch(scenario, algorithm, seed, [trial])
    return TrialRecord(seed, trial, algorithm, {k: v[0] for k, v in batch.items()})


@dataclass
class AggregateStats:
    """Per-iteration trial mean and population variance of each metric.

    Batches are merged with the pairwise (Chan et al.) update, so merging
    is commutative up to rounding.
    """

    count: int = 0
    mean: dict[str, np.ndarray] = field(default_factory=dict)
    m2: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_batch(cls, batch: dict[str, np.ndarray]) -> AggregateStats:
        counts = {v.shape[0] for v in batch.values()}
        if len(counts) > 1:
            raise ValueError("metric arrays disagree on the number of trials")
        count = counts.pop() if counts else 0
        if count == 0:
            return cls()
        mean = {k: v.mean(axis=0) for k, v in batch.items()}
        m2 = {k: ((v - mean[k]) ** 2).sum(axis=0) for k, v in batch.items()}
        return cls(count, mean, m2)

    def merge(self, other: AggregateStats) -> AggregateStats:
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        mean, m2 = {}, {}
        for k in self.mean:
            delta = other.mean[k] - self.mean[k]
            mean[k] = self.mean[k] + delta * (other.count / n)
            m2[k] = self.m2[k] + other.m2[k] + delta**2 * (self.count * other.count / n)
        return AggregateStats(n, mean, m2)

    @property
    def variance(self) -> dict[str, np.ndarray]:
        if self.count == 0:
            return {}
        return {k: v / self.count for k, v in self.m2.items()}


@dataclass
class ExperimentResult:
    scenario: Scenario
    seed: int
    trials: int
    algorithms: tuple[str, ...]
    stats: dict[str, AggregateStats]
    trace: dict[str, dict[str, np.ndarray]]
    predicted_bias: np.ndarray | None = None


def prediction(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Occupancy and steady-state bias for a synthetic scenario on a finite ensemble."""
    topo = scenario.topology
    if topo.ensemble is None:
        raise ScenarioError("bias prediction needs a finite graph ensemble")
    if scenario.measurement.kind != "synthetic":
        raise ScenarioError("bias prediction needs a synthetic measurement model with a bias table")
    pi = topo.occupancy()
    return pi, ensemble_bias(topo.ensemble, pi, scenario.measurement.pair_bias)


def run_experiment(
    scenario: Scenario,
    algorithms: Sequence[str] | None = None,
    trials: int | None = None,
    seed: int | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> ExperimentResult:
    algorithms = tuple(algorithms or scenario.algorithms)
    trials = scenario.trials if trials is None else trials
    seed = scenario.seed if seed is None else seed
    if trials < 1:
        raise ValueError("need at least one trial")
    stats, trace = {}, {}
    for algo in algorithms:
        acc = AggregateStats()
        for start in range(0, trials, chunk):
            batch = simulate_batch(scenario, algo, seed, range(start, min(start + chunk, trials)))
            if start == 0:
                trace[algo] = {k: v[0].copy() for k, v in batch.items()}
            acc = acc.merge(AggregateStats.from_batch(batch))
        stats[algo] = acc
    bias = None
    if scenario.topology.ensemble is not None and scenario.measurement.kind == "synthetic":
        bias = prediction(scenario)[1]
    return ExperimentResult(scenario, seed, trials, algorithms, stats, trace, bias)
