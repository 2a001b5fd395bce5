"""Two-way time-stamped exchanges and the difference measurements built from them.

Between an initiator ``u`` and a responder ``v`` two round trips are run in
one iteration: one at the start and one half an iteration later.  In each,
``u`` stamps its send, ``v`` stamps the reception, waits a quarter of an
iteration on its own clock, stamps its reply, and ``u`` stamps the arrival.
All functions here broadcast over numpy arrays so the simulator can run
many exchanges at once through the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clock import ClockParams

LOG_SKEW = "log_skew"
OFFSET = "offset"


@dataclass(frozen=True)
class DelayModel:
    kind: str = "none"
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "fixed", "none"):
            raise ValueError(f"unknown delay model {self.kind!r}")
        if self.mean < 0 or self.std < 0:
            raise ValueError("delay mean and std must be non-negative")

    @classmethod
    def gaussian(cls, mean: float, std: float) -> DelayModel:
        return cls("gaussian", mean, std)

    @classmethod
    def from_config(cls, cfg: dict) -> DelayModel:
        kind = cfg.get("type", "none")
        mean = float(cfg.get("mean_us", 0.0)) * 1e-6
        std = float(cfg.get("std_us", 0.0)) * 1e-6
        if kind == "none":
            return cls()
        if kind == "fixed":
            return cls("fixed", mean, 0.0)
        return cls(kind, mean, std)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(size)
        if self.kind == "fixed":
            return np.full(size, self.mean)
        # clamp: a negative delay would reorder send/receive
        return np.maximum(rng.normal(self.mean, self.std, size=size), 0.0)


@dataclass(frozen=True)
class ExchangeRecord:
    """Eight local stamps from two round trips.

    ``u[0..3]`` are the initiator's send, receive, send, receive stamps;
    ``v[0..3]`` are the responder's receive, send, receive, send stamps.
    """

    u: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class DifferenceMeasurement:
    channel: str
    u: int
    v: int
    value: float
    k: int

    def reversed(self) -> DifferenceMeasurement:
        return DifferenceMeasurement(self.channel, self.v, self.u, -self.value, self.k)


class DegenerateExchange(ValueError):
    pass


def exchange_stamps(skew_u, off_u, skew_v, off_v, t_start, delays, dwell: float = 1.0) -> ExchangeRecord:
    """Event-sequenced stamps for given delays.

    ``delays`` has leading axis 4: (u->v, v->u) for the first round trip then
    the second.  Everything else broadcasts.
    """
    wait = dwell / 4.0
    tau_u1 = skew_u * t_start + off_u
    tau_u3 = tau_u1 + dwell / 2.0
    us, vs = [], []
    for tau_send in (tau_u1, tau_u3):
        j = len(us) // 2
        t_send = (tau_send - off_u) / skew_u
        t_arrive = t_send + delays[2 * j]
        tau_v_recv = skew_v * t_arrive + off_v
        tau_v_send = tau_v_recv + wait
        t_reply = (tau_v_send - off_v) / skew_v
        tau_u_recv = skew_u * (t_reply + delays[2 * j + 1]) + off_u
        us += [tau_send, tau_u_recv]
        vs += [tau_v_recv, tau_v_send]
    shape = np.broadcast(*us, *vs).shape
    return ExchangeRecord(
        np.stack([np.broadcast_to(x, shape) for x in us]),
        np.stack([np.broadcast_to(x, shape) for x in vs]),
    )


def run_exchange(
    u: ClockParams,
    v: ClockParams,
    t_start: float,
    delays: DelayModel,
    rng: np.random.Generator,
    dwell: float = 1.0,
) -> ExchangeRecord:
    d = delays.sample(rng, 4)
    return exchange_stamps(u.skew, u.offset, v.skew, v.offset, t_start, d, dwell)


def estimate_relative(record: ExchangeRecord):
    """Relative skew and offset of the initiator with respect to the responder.

    Each round trip gives a pair of corresponding readings (the midpoints of
    the initiator's send/receive and of the responder's receive/send); the
    line through the two pairs yields ``u = skew_rel * v + offset_rel``.
    """
    u, v = record.u, record.v
    pu1 = 0.5 * (u[0] + u[1])
    pu2 = 0.5 * (u[2] + u[3])
    pv1 = 0.5 * (v[0] + v[1])
    pv2 = 0.5 * (v[2] + v[3])
    dv = pv2 - pv1
    if np.any(dv == 0):
        raise DegenerateExchange("round-trip midpoints coincide on the responder's clock")
    skew_rel = (pu2 - pu1) / dv
    offset_rel = pu1 - skew_rel * pv1
    return skew_rel, offset_rel


def to_difference(skew_rel: float, offset_rel: float, u: int, v: int, k: int):
    """Log-skew and offset difference measurements for the ordered pair (u, v)."""
    if not skew_rel > 0:
        raise ValueError(f"relative skew must be positive, got {skew_rel}")
    return (
        DifferenceMeasurement(LOG_SKEW, u, v, float(np.log(skew_rel)), k),
        DifferenceMeasurement(OFFSET, u, v, float(offset_rel), k),
    )


def measurement_initiator(u: int, v: int) -> int:
    """The higher-indexed node of a pair always computes the measurement."""
    return max(u, v)


def true_relative(u: ClockParams, v: ClockParams) -> tuple[float, float]:
    ratio = u.skew / v.skew
    return ratio, u.offset - v.offset * ratio
