"""Scenario files: parsing, defaults, and the invariant audit.

A scenario is a JSON document.  Node labels in the file are 1-based and the
reference nodes must be the highest labels.  Example::

    {
      "schema_version": 1,
      "name": "rwp-10",
      "nodes": 10,
      "references": [10],
      "clocks": {"skew": [0.99998, 1.00002], "offset": [-0.01, 0.01]},
      "topology": {"type": "mobility", "field_size": 10, "comm_range": 5},
      "measurement": {"type": "pairwise",
                      "delay": {"type": "gaussian", "mean_us": 150, "std_us": 10}},
      "algorithm": {"step": {"c1": 1, "c2": 3}, "switch": 40, "pause": [400, 600]},
      "iterations": 800, "trials": 100, "seed": 1
    }

``topology.type`` is one of ``deterministic`` (``graphs`` plus ``cycle`` and
optional ``prefix`` of 0-based state indices), ``markov`` (``graphs``,
``transition``, optional ``initial``) or ``mobility``.
``measurement.type`` is ``pairwise`` (simulated time-stamp exchanges between
clocks) or ``synthetic`` (``x_u - x_v`` plus Gaussian noise whose mean comes
from ``bias``, a table keyed ``"u,v"``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .clock import ClockBounds, IterationSchedule
from .estimators import ALGORITHMS, AlgorithmConfig, StepSize
from .pairwise import DelayModel
from .topology import (
    ChainError,
    DeterministicSwitching,
    GraphEnsemble,
    check_transition,
    ensemble_from_labels,
    ergodicity_problems,
    stationary_distribution,
    union_connected,
)

SCHEMA_VERSION = 1
ALL_ALGORITHMS = ALGORITHMS + ("ats",)


class ScenarioError(ValueError):
    """The scenario document is malformed or violates a construction invariant."""


@dataclass(frozen=True)
class TopologySpec:
    kind: str
    ensemble: GraphEnsemble | None = None
    cycle: tuple[int, ...] = ()
    prefix: tuple[int, ...] = ()
    transition: np.ndarray | None = None
    initial: np.ndarray | None = None
    field_size: float = 10.0
    comm_range: float = 5.0
    speed: tuple[float, float] = (0.1, 1.0)

    def occupancy(self) -> np.ndarray | None:
        """Long-run fraction of time in each ensemble state, if defined."""
        if self.kind == "deterministic":
            return DeterministicSwitching(self.cycle, self.prefix).limiting_occupancy(self.ensemble.N)
        if self.kind == "markov":
            return stationary_distribution(self.transition)
        return None


@dataclass(frozen=True)
class MeasurementSpec:
    kind: str
    delay: DelayModel = DelayModel()
    noise_std: float = 1.0
    pair_bias: dict[tuple[int, int], float] = field(default_factory=dict)
    variable_range: tuple[float, float] = (-1.0, 1.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    n: int
    n_ref: int
    topology: TopologySpec
    measurement: MeasurementSpec
    skew_range: tuple[float, float] = (1 - 2e-5, 1 + 2e-5)
    offset_range: tuple[float, float] = (-1e-2, 1e-2)
    bounds: ClockBounds | None = None
    schedule_start: float = 1.0
    schedule_horizon: int = 1000
    period: float = 1.0
    step: StepSize = StepSize()
    switch: int = 40
    pause: tuple[int, int] | None = None
    increment: float = 0.25
    ats_rho: float = 0.2
    algorithms: tuple[str, ...] = ALGORITHMS
    iterations: int = 800
    trials: int = 100
    seed: int = 0

    @property
    def n_b(self) -> int:
        return self.n - self.n_ref

    @property
    def channels(self) -> tuple[str, ...]:
        if self.measurement.kind == "pairwise":
            return ("log_skew", "offset")
        return ("value",)

    def config(self, algorithm: str) -> AlgorithmConfig:
        return AlgorithmConfig.named(algorithm, self.step, self.switch, self.pause, self.increment)

    def clock_bounds(self) -> ClockBounds:
        """Declared bounds, or the tightest box over sampled and reference clocks."""
        if self.bounds is not None:
            return self.bounds
        return ClockBounds(
            min(self.skew_range[0], 1.0),
            max(self.skew_range[1], 1.0),
            min(self.offset_range[0], 0.0),
            max(self.offset_range[1], 0.0),
        )

    def schedule(self) -> IterationSchedule:
        return IterationSchedule(self.schedule_start, self.period, self.clock_bounds(), self.schedule_horizon)


def _pair(value, what: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in value)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{what} must be a [lo, hi] pair") from exc
    if lo > hi:
        raise ScenarioError(f"{what} has lo > hi")
    return lo, hi


def _bias_table(raw: dict[str, Any], n: int) -> dict[tuple[int, int], float]:
    table = {}
    for key, value in raw.items():
        try:
            u, v = (int(s) for s in str(key).split(","))
        except ValueError as exc:
            raise ScenarioError(f"bias key {key!r} is not 'u,v'") from exc
        if u == v or not (1 <= u <= n and 1 <= v <= n):
            raise ScenarioError(f"bias key {key!r} is not a pair of distinct node labels")
        if (v - 1, u - 1) in table:
            raise ScenarioError(f"bias given for both ({u},{v}) and ({v},{u})")
        table[(u - 1, v - 1)] = float(value)
    return table


def _topology(doc: dict[str, Any], n: int, n_ref: int) -> TopologySpec:
    kind = doc.get("type")
    if kind == "mobility":
        spec = TopologySpec(
            "mobility",
            field_size=float(doc.get("field_size", 10.0)),
            comm_range=float(doc.get("comm_range", 5.0)),
            speed=_pair(doc.get("speed", [0.1, 1.0]), "topology.speed"),
        )
        if not spec.comm_range > 0 or not spec.field_size > 0:
            raise ScenarioError("mobility needs positive field_size and comm_range")
        if not spec.speed[0] > 0:
            raise ScenarioError("mobility needs a positive minimum speed")
        return spec
    if kind not in ("deterministic", "markov"):
        raise ScenarioError(f"unknown topology type {kind!r}")
    try:
        ensemble = ensemble_from_labels(doc["graphs"], n, n_ref)
    except KeyError as exc:
        raise ScenarioError("topology.graphs is required") from exc
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad topology.graphs: {exc}") from exc
    N = ensemble.N
    if kind == "deterministic":
        cycle = tuple(int(i) for i in doc.get("cycle", range(N)))
        prefix = tuple(int(i) for i in doc.get("prefix", ()))
        if not cycle or any(not 0 <= i < N for i in cycle + prefix):
            raise ScenarioError("deterministic cycle/prefix must index the graphs")
        return TopologySpec("deterministic", ensemble, cycle=cycle, prefix=prefix)
    try:
        transition = check_transition(doc["transition"])
    except KeyError as exc:
        raise ScenarioError("markov topology needs a transition matrix") from exc
    except ChainError as exc:
        raise ScenarioError(str(exc)) from exc
    if transition.shape[0] != N:
        raise ScenarioError("transition matrix size does not match the number of graphs")
    initial = np.asarray(doc.get("initial", [1.0 / N] * N), dtype=float)
    if initial.shape != (N,) or np.any(initial < 0) or abs(initial.sum() - 1) > 1e-12:
        raise ScenarioError("markov initial must be a probability vector")
    return TopologySpec("markov", ensemble, transition=transition, initial=initial)


def _measurement(doc: dict[str, Any], n: int) -> MeasurementSpec:
    kind = doc.get("type", "pairwise")
    if kind == "pairwise":
        try:
            delay = DelayModel.from_config(doc.get("delay", {}))
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc
        return MeasurementSpec("pairwise", delay=delay)
    if kind == "synthetic":
        std = float(doc.get("noise_std", 1.0))
        if std < 0:
            raise ScenarioError("noise_std must be non-negative")
        return MeasurementSpec(
            "synthetic",
            noise_std=std,
            pair_bias=_bias_table(doc.get("bias", {}), n),
            variable_range=_pair(doc.get("variables", [-1.0, 1.0]), "measurement.variables"),
        )
    raise ScenarioError(f"unknown measurement type {kind!r}")


def parse_scenario(doc: dict[str, Any]) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version}")
    try:
        n = int(doc["nodes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError("'nodes' must be an integer") from exc
    refs = sorted(int(r) for r in doc.get("references", [n]))
    if not refs:
        raise ScenarioError("at least one reference node is required")
    n_ref = len(refs)
    if refs != list(range(n - n_ref + 1, n + 1)):
        raise ScenarioError("reference nodes must carry the highest labels")
    if n_ref >= n:
        raise ScenarioError("need at least one non-reference node")

    clocks = doc.get("clocks", {})
    skew_range = _pair(clocks.get("skew", [1 - 2e-5, 1 + 2e-5]), "clocks.skew")
    offset_range = _pair(clocks.get("offset", [-1e-2, 1e-2]), "clocks.offset")
    if not skew_range[0] > 0:
        raise ScenarioError("clock skews must be positive")
    bounds = None
    if "bounds" in clocks:
        b = clocks["bounds"]
        try:
            bounds = ClockBounds(
                float(b["skew_lo"]), float(b["skew_hi"]), float(b["offset_lo"]), float(b["offset_hi"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"bad clocks.bounds: {exc}") from exc

    sched = doc.get("schedule", {})
    algo = doc.get("algorithm", {})
    step = algo.get("step", {})
    pause = algo.get("pause")
    names = doc.get("algorithms", list(ALGORITHMS))
    for name in names:
        if name not in ALL_ALGORITHMS:
            raise ScenarioError(f"unknown algorithm {name!r}")
    try:
        scenario = Scenario(
            name=str(doc.get("name", "scenario")),
            n=n,
            n_ref=n_ref,
            topology=_topology(doc.get("topology", {}), n, n_ref),
            measurement=_measurement(doc.get("measurement", {}), n),
            skew_range=skew_range,
            offset_range=offset_range,
            bounds=bounds,
            schedule_start=float(sched.get("start", 1.0)),
            schedule_horizon=int(sched.get("horizon", 1000)),
            period=float(sched.get("dwell", doc.get("period", 1.0))),
            step=StepSize(float(step.get("c1", 1.0)), float(step.get("c2", 3.0))),
            switch=int(algo.get("switch", 40)),
            pause=None if pause is None else (int(pause[0]), int(pause[1])),
            increment=float(algo.get("increment", 0.25)),
            ats_rho=float(algo.get("ats_rho", 0.2)),
            algorithms=tuple(names),
            iterations=int(doc.get("iterations", 800)),
            trials=int(doc.get("trials", 100)),
            seed=int(doc.get("seed", 0)),
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc
    if scenario.iterations < 1 or scenario.trials < 1:
        raise ScenarioError("iterations and trials must be positive")
    if not 0 < scenario.ats_rho < 1:
        raise ScenarioError("ats_rho must lie in (0, 1)")
    if scenario.period <= 0:
        raise ScenarioError("dwell must be positive")
    if scenario.pause is not None and scenario.pause[1] < scenario.pause[0]:
        raise ScenarioError("pause window is reversed")
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path} is not valid JSON: {exc}") from exc
    return parse_scenario(doc)


def audit(scenario: Scenario) -> list[str]:
    """Invariant problems that do not stop parsing but make results meaningless."""
    problems = []
    b = scenario.clock_bounds()
    if scenario.measurement.kind == "pairwise":
        lo, hi = scenario.skew_range
        if lo < b.skew_lo or hi > b.skew_hi:
            problems.append("clock skew range escapes the schedule bounds")
        lo, hi = scenario.offset_range
        if lo < b.offset_lo or hi > b.offset_hi:
            problems.append("clock offset range escapes the schedule bounds")
        if not (b.skew_lo <= 1.0 <= b.skew_hi and b.offset_lo <= 0.0 <= b.offset_hi):
            problems.append("reference clock lies outside the schedule bounds")
    if not scenario.schedule_start > b.offset_hi:
        problems.append("schedule start does not exceed the upper offset bound")
    topo = scenario.topology
    if topo.ensemble is not None and not union_connected(topo.ensemble):
        problems.append("union of the topology graphs is not connected")
    if topo.kind == "markov":
        problems.extend(f"markov chain {p}" for p in ergodicity_problems(topo.transition))
    table = scenario.measurement.pair_bias
    if table and topo.ensemble is not None:
        for u, v in sorted(topo.ensemble.union().edges):
            if (u, v) not in table and (v, u) not in table:
                problems.append(f"bias table has no entry for linked pair ({u + 1},{v + 1})")
    return problems
