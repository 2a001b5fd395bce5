"""Synchronous average-consensus (virtual clock) baseline.

Each node keeps a virtual clock ``that_u = varrho_u * tau_u + o_u`` and
drives it toward its neighbours': first the rate (``varrho_u``) through
low-pass filtered relative-skew estimates, then the reading (``o_u``).
Nothing here looks at global time; inputs are local stamps and values
received from neighbours.

Neighbour data is laid out along the last axis, with a boolean ``mask``
marking which slots are real neighbours, so the same functions serve a
single node (1-D arrays) and a batch of trials (``(..., n, n)`` arrays).
"""

from __future__ import annotations

import numpy as np


def ats_relative_skew(prev, tau_v, tau_u, rho: float):
    """Filtered estimate of ``alpha_v / alpha_u`` from two one-way messages v -> u.

    ``tau_v`` and ``tau_u`` hold the send and receive stamps of the two
    messages along their leading axis.  Coincident receive stamps leave the
    estimate unchanged.
    """
    du = tau_u[0] - tau_u[1]
    dv = tau_v[0] - tau_v[1]
    ok = du != 0
    sample = np.divide(dv, du, out=np.ones_like(np.asarray(du, dtype=float)), where=ok)
    return np.where(ok, rho * prev + (1 - rho) * sample, prev)


def ats_update(varrho_u, o_u, tau_u, varrho_v, that_v, that_u_seen, alpha_uv, mask, rho_v: float = 0.2, rho_o: float = 0.2):
    """New ``(varrho_u, o_u)`` from this interval's neighbour data.

    ``tau_u`` is the node's local time at the update instant; ``that_u_seen``
    is its own virtual reading when each neighbour's value ``that_v`` arrived.
    The offset absorbs the rate change so the virtual clock does not jump at
    ``tau_u``.
    """
    mask = np.asarray(mask, dtype=bool)
    count = mask.sum(axis=-1)
    has = count > 0
    denom = np.where(has, count, 1)
    target = np.where(mask, alpha_uv * varrho_v, 0.0).sum(axis=-1) / denom
    new_varrho = np.where(has, rho_v * varrho_u + (1 - rho_v) * target, varrho_u)
    o = o_u + (varrho_u - new_varrho) * tau_u
    gap = np.where(mask, that_v - that_u_seen, 0.0).sum(axis=-1) / denom
    new_o = np.where(has, o + (1 - rho_o) * gap, o_u)
    return new_varrho, new_o


def virtual_time(varrho, o, tau):
    return varrho * tau + o
