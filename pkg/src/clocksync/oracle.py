"""Analytic predictions for the stochastic-approximation estimators.

With occupancy weights ``pi`` over a finite set of measurement graphs, the
estimation error of the decreasing-gain law converges to the solution of
``Lbar_b @ bias = Dbar @ gamma`` where ``gamma`` is the stacked mean of the
per-edge measurement noise.  :func:`error_recursion` is the matrix form of
the error dynamics, kept independent of the node-level code it checks.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .estimators import StepSize, step_gain
from .topology import Graph, GraphEnsemble, grounded_laplacian, selector_matrix, union_connected


class SingularMeanLaplacian(ValueError):
    """Mean grounded Laplacian is singular: the union graph is not connected."""


def noise_slots(n: int, n_b: int) -> list[tuple[int, int]]:
    """Ordered pairs ``(u, v)`` in the stacking order of the noise vector."""
    return [(u, v) for u in range(n_b) for v in range(n) if v != u]


def bias_vector(
    pair_bias: Mapping[tuple[int, int], float],
    n: int,
    n_b: int,
    fill: float | None = None,
) -> np.ndarray:
    """Stack per-pair mean noise into ``gamma``.

    ``pair_bias[(u, v)]`` is the mean of the noise on the measurement of
    ``x_u - x_v``; the mirror slot ``(v, u)`` gets the negation.  Slots of
    pairs missing from the table get ``fill``, which defaults to the mean of
    the listed biases (any value works when the pair never forms an edge,
    since its selector column is zero).
    """
    directed: dict[tuple[int, int], float] = {}
    for (u, v), g in pair_bias.items():
        directed[(u, v)] = float(g)
        directed[(v, u)] = -float(g)
    if fill is None:
        fill = float(np.mean(list(pair_bias.values()))) if pair_bias else 0.0
    return np.array([directed.get(slot, fill) for slot in noise_slots(n, n_b)])


def mean_matrices(ensemble: GraphEnsemble, pi: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (ensemble.N,):
        raise ValueError(f"need {ensemble.N} weights, got {pi.shape}")
    if np.any(pi < 0) or abs(pi.sum() - 1) > 1e-9:
        raise ValueError("weights must be a probability vector")
    lb = sum(p * grounded_laplacian(g).matrix for p, g in zip(pi, ensemble.states))
    d = sum(p * selector_matrix(g) for p, g in zip(pi, ensemble.states))
    return lb, d


def predicted_bias(lbar_b: np.ndarray, dbar: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Steady-state mean estimation error ``Lbar_b^{-1} Dbar gamma``."""
    rhs = dbar @ gamma
    try:
        chol = np.linalg.cholesky(lbar_b)
    except np.linalg.LinAlgError as exc:
        raise SingularMeanLaplacian("mean grounded Laplacian is not positive definite") from exc
    if np.min(np.diag(chol)) < 1e-12 * max(1.0, np.max(np.abs(lbar_b))):
        raise SingularMeanLaplacian("mean grounded Laplacian is numerically singular")
    z = np.linalg.solve(chol, rhs)
    bias = np.linalg.solve(chol.T, z)
    resid = np.max(np.abs(lbar_b @ bias - rhs)) if rhs.size else 0.0
    if resid >= 1e-10 * max(1.0, np.max(np.abs(rhs))):
        raise SingularMeanLaplacian(f"bias solve residual {resid:.3e} too large")
    return bias


def ensemble_bias(ensemble: GraphEnsemble, pi, pair_bias: Mapping[tuple[int, int], float]) -> np.ndarray:
    if not union_connected(ensemble):
        raise SingularMeanLaplacian("union of the ensemble graphs is not connected")
    lb, d = mean_matrices(ensemble, pi)
    gamma = bias_vector(pair_bias, ensemble.n, ensemble.n - ensemble.n_ref)
    return predicted_bias(lb, d, gamma)


def error_recursion(
    graphs: Sequence[Graph],
    noise: np.ndarray,
    e0: np.ndarray,
    step: StepSize,
) -> np.ndarray:
    """Trajectory of ``e(k+1) = (I - m(k) L_b(k)) e(k) + m(k) D(k) eps(k)``.

    ``noise[k]`` is the stacked noise vector at iteration ``k``.  Returns an
    array of shape ``(len(graphs) + 1, n_b)`` starting with ``e0``.
    """
    e = np.asarray(e0, dtype=float)
    out = [e]
    eye = np.eye(e.size)
    for k, g in enumerate(graphs):
        m = step_gain(step, k)
        lb = grounded_laplacian(g).matrix
        e = (eye - m * lb) @ e + m * (selector_matrix(g) @ noise[k])
        out.append(e)
    return np.array(out)
