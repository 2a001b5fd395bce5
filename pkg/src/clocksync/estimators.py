"""Distributed update laws for node variables from difference measurements.

One unified law covers four algorithms.  With ``k_h`` and ``k_H`` the two
switch-over iterations:

    ========  =====  =====
    name      k_h    k_H
    ========  =====  =====
    disync    0      0
    disync-i  K      K        (any finite K)
    jat       inf    0
    jat-i     inf    K
    ========  =====  =====

Before ``k_h`` the gain is ``1 / (1 + |H_u|)``; afterwards it is the
decreasing stochastic-approximation gain ``c1 / (k - k_h + c2)``.  Before
``k_H`` node ``u`` only listens to neighbours whose average distance to the
references is no larger than its own; afterwards to all neighbours.

The per-node functions take plain sequences and are meant for reasoning and
testing.  The ``*_step`` functions apply the same laws to whole batches of
trials at once: ``xhat`` has shape ``(..., n)``, ``adj`` and ``zeta`` have
shape ``(..., n, n)`` with ``zeta[..., u, v]`` the measurement of
``x_u - x_v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

ALGORITHMS = ("disync", "disync-i", "jat", "jat-i")


@dataclass(frozen=True)
class StepSize:
    c1: float = 1.0
    c2: float = 3.0

    def __post_init__(self) -> None:
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("step size constants must be positive")


def step_gain(step: StepSize, k) -> float:
    return step.c1 / (k + step.c2)


@dataclass(frozen=True)
class AlgorithmConfig:
    k_h: float
    k_H: float
    step: StepSize = StepSize()
    pause: tuple[int, int] | None = None
    increment: float = 0.25

    def __post_init__(self) -> None:
        if self.k_H > self.k_h:
            raise ValueError(f"need k_H <= k_h, got k_H={self.k_H}, k_h={self.k_h}")
        if self.pause is not None and self.pause[1] < self.pause[0]:
            raise ValueError(f"pause window {self.pause} is reversed")

    @classmethod
    def named(
        cls,
        name: str,
        step: StepSize = StepSize(),
        switch: int = 40,
        pause: tuple[int, int] | None = None,
        increment: float = 0.25,
    ) -> AlgorithmConfig:
        corners = {
            "disync": (0, 0),
            "disync-i": (switch, switch),
            "jat": (math.inf, 0),
            "jat-i": (math.inf, switch),
        }
        if name not in corners:
            raise ValueError(f"unknown algorithm {name!r}; expected one of {ALGORITHMS}")
        k_h, k_H = corners[name]
        return cls(k_h, k_H, step, pause, increment)


def paused(k: int, pause: tuple[int, int] | None) -> bool:
    return pause is not None and pause[0] <= k <= pause[1]


def pause_resume(k: int, pause: tuple[int, int] | None, k_h: float = 0) -> int | None:
    """Argument of the decreasing gain at iteration ``k``, or None while paused.

    After the pause the argument is shifted back by the pause length so the
    gain picks up where it left off.
    """
    if paused(k, pause):
        return None
    idx = k - k_h
    if pause is not None and k > pause[1]:
        idx -= pause[1] - pause[0]
    return idx


# ---------------------------------------------------------------------------
# per-node laws
# ---------------------------------------------------------------------------


def disync_update(x_u: float, neighbors: Sequence[tuple[float, float]], gain: float) -> float:
    """One update of ``x_u`` from ``(x_v, zeta_uv)`` pairs of the current neighbours."""
    if not neighbors:
        return x_u
    return x_u + gain * sum(x_v + z - x_u for x_v, z in neighbors)


def average_distance_step(y_u: float, neighbor_ys: Sequence[float], increment: float = 0.25) -> float:
    closer = [y for y in neighbor_ys if y_u >= y and math.isfinite(y)]
    if closer:
        return sum(closer) / len(closer)
    if math.isinf(y_u):
        return y_u
    return y_u + increment


def disync_i_update(
    x_u: float,
    y_u: float,
    neighbors: Sequence[tuple[float, float, float]],
    k: int,
    cfg: AlgorithmConfig,
) -> float:
    """Unified update from ``(x_v, zeta_uv, y_v)`` triples.

    Returns ``x_u`` unchanged inside the pause window.
    """
    if paused(k, cfg.pause):
        return x_u
    if k < cfg.k_H:
        chosen = [(x, z) for x, z, y in neighbors if y_u >= y and math.isfinite(y)]
    else:
        chosen = [(x, z) for x, z, _ in neighbors]
    if k < cfg.k_h:
        gain = 1.0 / (1 + len(chosen))
    else:
        gain = step_gain(cfg.step, pause_resume(k, cfg.pause, cfg.k_h))
    return disync_update(x_u, chosen, gain)


def recover_clock_estimate(x_log_skew: float, x_offset: float) -> tuple[float, float]:
    return math.exp(x_log_skew), x_offset


# ---------------------------------------------------------------------------
# batched laws
# ---------------------------------------------------------------------------


def _increment(xhat, mask, zeta):
    diff = xhat[..., None, :] + zeta - xhat[..., :, None]
    return np.where(mask, diff, 0.0).sum(axis=-1)


def disync_step(xhat, adj, zeta, k: int, step: StepSize, n_b: int, pause=None):
    """Simultaneous update of all non-reference nodes with the decreasing gain."""
    idx = pause_resume(k, pause, 0)
    if idx is None:
        return xhat
    out = xhat.copy()
    inc = _increment(xhat, adj, zeta)
    out[..., :n_b] = xhat[..., :n_b] + step_gain(step, idx) * inc[..., :n_b]
    return out


def jat_step(xhat, adj, zeta, k: int, n_b: int, pause=None):
    """Simultaneous update with the constant averaging gain ``1 / (1 + deg)``."""
    if paused(k, pause):
        return xhat
    out = xhat.copy()
    inc = _increment(xhat, adj, zeta)
    deg = adj.sum(axis=-1)
    out[..., :n_b] = xhat[..., :n_b] + (1.0 / (1 + deg[..., :n_b])) * inc[..., :n_b]
    return out


def closer_mask(y, adj):
    """Neighbours ``v`` of ``u`` with ``y_u >= y_v`` and ``y_v`` finite."""
    return adj & (y[..., :, None] >= y[..., None, :]) & np.isfinite(y)[..., None, :]


def average_distance_batch(y, adj, n_b: int, increment: float = 0.25):
    mask = closer_mask(y, adj)
    count = mask.sum(axis=-1)
    total = np.where(mask, y[..., None, :], 0.0).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = total / count
    new = np.where(count > 0, avg, y + increment)
    out = y.copy()
    out[..., :n_b] = new[..., :n_b]
    return out


def unified_step(xhat, y, adj, zeta, k: int, cfg: AlgorithmConfig, n_b: int):
    """One iteration of the unified law.

    ``xhat`` may carry extra channel axes before the node axis as long as
    ``adj``/``y`` broadcast against it.  Returns ``(xhat, y)``.
    """
    if paused(k, cfg.pause):
        return xhat, y
    if k < cfg.k_H:
        mask = closer_mask(y, adj)
    else:
        mask = adj
    inc = _increment(xhat, mask, zeta)
    out = xhat.copy()
    if k < cfg.k_h:
        gain = 1.0 / (1 + mask.sum(axis=-1))
        out[..., :n_b] = xhat[..., :n_b] + gain[..., :n_b] * inc[..., :n_b]
    else:
        gain = step_gain(cfg.step, pause_resume(k, cfg.pause, cfg.k_h))
        out[..., :n_b] = xhat[..., :n_b] + gain * inc[..., :n_b]
    if k < cfg.k_H:
        y = average_distance_batch(y, adj, n_b, cfg.increment)
    return out, y


def initial_distance(shape, n_b: int) -> np.ndarray:
    y = np.zeros(shape)
    y[..., :n_b] = np.inf
    return y
