"""Volatility schedules sigma_t**2 used as the perturbation class.

The perturbation size is the additive variance increment ``magnitude`` on top
of ``base_sigma_sq``, so a payoff can be studied as a function of one
non-negative scalar.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    STEP = "step"
    PULSE = "pulse"
    RAMP = "ramp"


@dataclass(frozen=True)
class PerturbationSchedule:
    kind: ScheduleKind = ScheduleKind.CONSTANT
    base_sigma_sq: float = 1.0
    magnitude: float = 0.0
    onset: int = 0
    duration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.base_sigma_sq < 0 or self.magnitude < 0:
            raise ValueError(
                f"base_sigma_sq and magnitude must be >= 0, got "
                f"{self.base_sigma_sq!r} and {self.magnitude!r}"
            )
        if self.onset < 0 or self.duration < 0:
            raise ValueError(f"onset and duration must be >= 0, got {self.onset}, {self.duration}")
        if self.kind is ScheduleKind.RAMP and self.duration == 0 and self.magnitude > 0:
            # zero-length ramp degenerates to a step; keep it explicit
            raise ValueError("ramp schedules need duration >= 1")

    def __call__(self, t: int) -> float:
        return schedule_at(self, t)


def schedule_at(s: PerturbationSchedule, t: int) -> float:
    """Noise variance at step t."""
    if t < 0:
        raise ValueError(f"time index must be >= 0, got {t}")
    base = s.base_sigma_sq
    if s.kind is ScheduleKind.CONSTANT or t < s.onset:
        return base
    if s.kind is ScheduleKind.STEP:
        return base + s.magnitude
    if s.kind is ScheduleKind.PULSE:
        return base + s.magnitude if t < s.onset + s.duration else base
    # ramp: reaches base + magnitude at t = onset + duration, then holds
    frac = min(1.0, (t - s.onset) / s.duration) if s.duration else 1.0
    return base + s.magnitude * frac


def schedule_values(s: PerturbationSchedule, T: int) -> np.ndarray:
    return np.array([schedule_at(s, t) for t in range(T)])


@dataclass(frozen=True)
class PerturbationLadder:
    magnitudes: tuple[float, ...]
    template: PerturbationSchedule

    def __post_init__(self):
        mags = tuple(float(m) for m in self.magnitudes)
        object.__setattr__(self, "magnitudes", mags)
        if len(mags) < 3:
            raise ValueError(f"a ladder needs at least 3 magnitudes, got {len(mags)}")
        if any(m < 0 for m in mags):
            raise ValueError("ladder magnitudes must be non-negative")
        if any(b <= a for a, b in zip(mags, mags[1:])):
            raise ValueError(f"ladder magnitudes must be strictly increasing: {mags}")


def log_spaced_magnitudes(low: float = 0.25, high: float = 16.0, n: int = 7) -> tuple[float, ...]:
    """``n`` magnitudes evenly spaced in log2 between ``low`` and ``high``.

    Spacing in base 2 keeps power-of-two ladders (the default) exact.
    """
    if not 0 < low < high or n < 2:
        raise ValueError(f"need 0 < low < high and n >= 2, got low={low}, high={high}, n={n}")
    v = np.exp2(np.linspace(np.log2(low), np.log2(high), n))
    v[0], v[-1] = low, high
    return tuple(float(x) for x in v)


def default_ladder(onset: int = 2500, duration: int = 500) -> PerturbationLadder:
    template = PerturbationSchedule(
        kind=ScheduleKind.PULSE, base_sigma_sq=0.25, onset=onset, duration=duration
    )
    return PerturbationLadder(log_spaced_magnitudes(), template)


def ladder_schedules(ladder: PerturbationLadder) -> list[PerturbationSchedule]:
    """One schedule per magnitude; everything else copied from the template."""
    return [replace(ladder.template, magnitude=m) for m in ladder.magnitudes]


def make_ladder(magnitudes: Sequence[float], template: PerturbationSchedule) -> PerturbationLadder:
    return PerturbationLadder(tuple(magnitudes), template)
