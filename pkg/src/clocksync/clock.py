"""Affine clock model and the pre-shared iteration schedule.

A node clock reads ``tau = skew * t + offset`` at global time ``t``.  The
iteration schedule is a sequence of local instants that every node uses to
start its i-th iteration; it is built from two fictitious clocks that bound
all real skews and offsets so that each node's i-th local iteration falls
inside a common global interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClockParams:
    skew: float
    offset: float

    def __post_init__(self) -> None:
        if not self.skew > 0:
            raise ValueError(f"clock skew must be positive, got {self.skew}")


@dataclass(frozen=True)
class ClockBounds:
    """Skew/offset box spanned by the slow (lo) and fast (hi) fictitious clocks."""

    skew_lo: float
    skew_hi: float
    offset_lo: float
    offset_hi: float

    def __post_init__(self) -> None:
        if not 0 < self.skew_lo <= self.skew_hi:
            raise ValueError(f"need 0 < skew_lo <= skew_hi, got {self.skew_lo}, {self.skew_hi}")
        if not self.offset_lo <= self.offset_hi:
            raise ValueError(f"need offset_lo <= offset_hi, got {self.offset_lo}, {self.offset_hi}")

    @property
    def ratio(self) -> float:
        return self.skew_hi / self.skew_lo

    def contains(self, clock: ClockParams) -> bool:
        return (
            self.skew_lo <= clock.skew <= self.skew_hi
            and self.offset_lo <= clock.offset <= self.offset_hi
        )


@dataclass(frozen=True)
class IterationSchedule:
    start: float
    dwell: float
    bounds: ClockBounds
    horizon: int

    def __post_init__(self) -> None:
        if not self.start > self.bounds.offset_hi:
            raise ValueError(
                f"schedule start {self.start} must exceed offset_hi {self.bounds.offset_hi}"
            )
        if not self.dwell > 0:
            raise ValueError(f"dwell must be positive, got {self.dwell}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be non-negative, got {self.horizon}")


@dataclass(frozen=True)
class GlobalInterval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")

    def contains(self, other: GlobalInterval, rtol: float = 1e-12) -> bool:
        """True if ``other`` lies inside this interval, up to ``rtol`` of magnitude."""
        slack = rtol * max(abs(self.lo), abs(self.hi), 1.0)
        return self.lo - slack <= other.lo and other.hi <= self.hi + slack


def local_time(clock: ClockParams, t):
    return clock.skew * t + clock.offset


def global_time_from_estimate(local, skew_est, offset_est):
    """Invert the affine clock model with estimated parameters."""
    if np.any(np.asarray(skew_est) <= 0):
        raise ValueError("skew estimate must be positive")
    return (local - offset_est) / skew_est


def inverse_local_time(clock: ClockParams, local):
    return (local - clock.offset) / clock.skew


def build_schedule(schedule: IterationSchedule) -> np.ndarray:
    """Return the local start instants tau^(0) .. tau^(horizon).

    Successive starts satisfy
    ``tau[i+1] = ratio * (tau[i] + dwell - offset_lo) + offset_hi``.
    """
    b = schedule.bounds
    ratio = b.ratio
    taus = np.empty(schedule.horizon + 1)
    tau = float(schedule.start)
    taus[0] = tau
    for i in range(schedule.horizon):
        tau = ratio * (tau + schedule.dwell - b.offset_lo) + b.offset_hi
        taus[i + 1] = tau
    if np.any(np.diff(taus) <= 0):
        raise ValueError("schedule is not strictly increasing")
    return taus


def global_interval(schedule: IterationSchedule, taus: np.ndarray, i: int) -> GlobalInterval:
    """Global interval that must hold every node's i-th local iteration."""
    b = schedule.bounds
    return GlobalInterval(
        (taus[i] - b.offset_hi) / b.skew_hi,
        (taus[i + 1] - b.offset_hi) / b.skew_hi,
    )


def local_window(clock: ClockParams, schedule: IterationSchedule, taus: np.ndarray, i: int) -> GlobalInterval:
    """Global-time span of the clock's i-th iteration, with no bounds check."""
    return GlobalInterval(
        (taus[i] - clock.offset) / clock.skew,
        (taus[i] + schedule.dwell - clock.offset) / clock.skew,
    )


def iteration_window(clock: ClockParams, schedule: IterationSchedule, taus: np.ndarray, i: int) -> GlobalInterval:
    if not schedule.bounds.contains(clock):
        raise ValueError(f"{clock} lies outside the schedule bounds {schedule.bounds}")
    return local_window(clock, schedule, taus, i)


def containment_violations(
    skews: np.ndarray,
    offsets: np.ndarray,
    schedule: IterationSchedule,
    taus: np.ndarray,
    rtol: float = 1e-12,
) -> np.ndarray:
    """Vectorised containment audit over many clocks and all scheduled iterations.

    Returns a boolean array of shape ``(len(skews), horizon)`` that is True
    wherever a clock's local window escapes its global interval.
    """
    b = schedule.bounds
    skews = np.asarray(skews, dtype=float)[:, None]
    offsets = np.asarray(offsets, dtype=float)[:, None]
    start = taus[:-1][None, :]
    glo = (taus[:-1] - b.offset_hi) / b.skew_hi
    ghi = (taus[1:] - b.offset_hi) / b.skew_hi
    wlo = (start - offsets) / skews
    whi = (start + schedule.dwell - offsets) / skews
    slack = rtol * np.maximum(np.abs(ghi), 1.0)
    return (wlo < glo - slack) | (whi > ghi + slack)


def interval_growth_milestone(schedule: IterationSchedule, factor: float) -> int:
    """First iteration whose inter-start gap reaches ``factor`` times the first gap.

    The gaps grow geometrically by the bounds ratio, so this is found in
    closed form and does not need the whole schedule materialised.
    """
    b = schedule.bounds
    if b.ratio <= 1:
        raise ValueError("gaps do not grow when the bounds ratio is 1")
    return math.ceil(math.log(factor) / math.log(b.ratio))
