"""Writing and reading experiment results.

Schema version 1.  ``--format csv`` writes

``stats.csv``
    ``algorithm,metric,iteration,node,count,mean,variance``: one row per
    algorithm, metric, iteration and node.  ``node`` is the 1-based label,
    or ``network`` for network-wide metrics.  Variance is the population
    variance across trials.
``trace.csv``
    ``algorithm,metric,iteration,node,value``: the first trial, unaveraged.
``summary.json``
    Run metadata, the predicted bias when one exists, and the final-iteration
    mean and variance of every metric.

``--format json`` writes ``results.json`` (stats and trace as nested lists)
next to the same ``summary.json``.  Floats are written with ``repr`` so a
reload is exact, and nothing time- or host-dependent is recorded, so the
same scenario and seed give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .harness import AggregateStats, ExperimentResult

SCHEMA_VERSION = 1
STATS_HEADER = ["algorithm", "metric", "iteration", "node", "count", "mean", "variance"]
TRACE_HEADER = ["algorithm", "metric", "iteration", "node", "value"]
NETWORK = "network"


def _rows(values: np.ndarray):
    """Yield ``(iteration, node, index)`` for a ``(K+1,)`` or ``(K+1, n_b)`` array."""
    if values.ndim == 1:
        for k in range(values.shape[0]):
            yield k, NETWORK, (k,)
    else:
        for k in range(values.shape[0]):
            for u in range(values.shape[1]):
                yield k, str(u + 1), (k, u)


def write_stats_csv(stats: dict[str, AggregateStats], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for algo, agg in stats.items():
            var = agg.variance
            for metric, mean in agg.mean.items():
                for k, node, idx in _rows(mean):
                    w.writerow([algo, metric, k, node, agg.count, repr(float(mean[idx])), repr(float(var[metric][idx]))])


def write_trace_csv(trace: dict[str, dict[str, np.ndarray]], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for algo, metrics in trace.items():
            for metric, values in metrics.items():
                for k, node, idx in _rows(values):
                    w.writerow([algo, metric, k, node, repr(float(values[idx]))])


def summary(result: ExperimentResult, fmt: str) -> dict:
    final = {}
    for algo, agg in result.stats.items():
        var = agg.variance
        final[algo] = {
            m: {"mean": np.atleast_1d(v[-1]).tolist(), "variance": np.atleast_1d(var[m][-1]).tolist()}
            for m, v in agg.mean.items()
        }
    sc = result.scenario
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": sc.name,
        "seed": result.seed,
        "trials": result.trials,
        "iterations": sc.iterations,
        "nodes": sc.n,
        "references": list(range(sc.n_b + 1, sc.n + 1)),
        "algorithms": list(result.algorithms),
        "format": fmt,
        "files": ["stats.csv", "trace.csv"] if fmt == "csv" else ["results.json"],
        "predicted_bias": None if result.predicted_bias is None else result.predicted_bias.tolist(),
        "final": final,
    }


def emit_results(result: ExperimentResult, out_dir: str | Path, fmt: str = "csv") -> list[Path]:
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt == "csv":
        write_stats_csv(result.stats, out / "stats.csv")
        write_trace_csv(result.trace, out / "trace.csv")
        written += [out / "stats.csv", out / "trace.csv"]
    else:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "stats": {
                algo: {
                    m: {"count": agg.count, "mean": agg.mean[m].tolist(), "variance": agg.variance[m].tolist()}
                    for m in agg.mean
                }
                for algo, agg in result.stats.items()
            },
            "trace": {algo: {m: v.tolist() for m, v in ms.items()} for algo, ms in result.trace.items()},
        }
        (out / "results.json").write_text(json.dumps(doc, indent=1) + "\n")
        written.append(out / "results.json")
    (out / "summary.json").write_text(json.dumps(summary(result, fmt), indent=2) + "\n")
    written.append(out / "summary.json")
    return written


def _assemble(cells: dict[tuple[str, str], dict[tuple[int, str], float]]) -> dict[str, dict[str, np.ndarray]]:
    out: dict[str, dict[str, np.ndarray]] = {}
    for (algo, metric), values in cells.items():
        K = max(k for k, _ in values) + 1
        nodes = sorted({node for _, node in values})
        if nodes == [NETWORK]:
            arr = np.array([values[(k, NETWORK)] for k in range(K)])
        else:
            labels = sorted(int(x) for x in nodes)
            arr = np.array([[values[(k, str(u))] for u in labels] for k in range(K)])
        out.setdefault(algo, {})[metric] = arr
    return out


def read_stats_csv(path: str | Path) -> dict[str, dict[str, dict]]:
    means: dict = {}
    variances: dict = {}
    counts: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != STATS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            key = (row["algorithm"], row["metric"])
            cell = (int(row["iteration"]), row["node"])
            means.setdefault(key, {})[cell] = float(row["mean"])
            variances.setdefault(key, {})[cell] = float(row["variance"])
            counts[key] = int(row["count"])
    mean, var = _assemble(means), _assemble(variances)
    return {
        algo: {m: {"count": counts[(algo, m)], "mean": mean[algo][m], "variance": var[algo][m]} for m in mean[algo]}
        for algo in mean
    }


def read_trace_csv(path: str | Path) -> dict[str, dict[str, np.ndarray]]:
    cells: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            cells.setdefault((row["algorithm"], row["metric"]), {})[(int(row["iteration"]), row["node"])] = float(
                row["value"]
            )
    return _assemble(cells)


def load_results(out_dir: str | Path) -> dict:
    """Reload a results directory into ``{"summary", "stats", "trace"}``."""
    out = Path(out_dir)
    meta = json.loads((out / "summary.json").read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported results schema {meta.get('schema_version')}")
    if meta["format"] == "csv":
        stats = read_stats_csv(out / "stats.csv")
        trace = read_trace_csv(out / "trace.csv")
    else:
        doc = json.loads((out / "results.json").read_text())
        stats = {
            algo: {
                m: {"count": d["count"], "mean": np.array(d["mean"]), "variance": np.array(d["variance"])}
                for m, d in ms.items()
            }
            for algo, ms in doc["stats"].items()
        }
        trace = {algo: {m: np.array(v) for m, v in ms.items()} for algo, ms in doc["trace"].items()}
    return {"summary": meta, "stats": stats, "trace": trace}
