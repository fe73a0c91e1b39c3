"""Balance function f(p) = -(1-p) ln(1-p) + ln p, its derivatives and landmarks.

All information quantities are in nats. Inputs are fractions of explained
variance and must lie in the guard band ``[P_GUARD, 1 - P_GUARD]``; anything
outside raises :class:`DomainError` instead of being clamped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

P_GUARD = 1e-12
_MAX_ITER = 400


class DomainError(ValueError):
    """Raised when a probability falls outside the open unit interval."""


class Probability(float):
    """A float constrained to the open interval (0, 1)."""

    def __new__(cls, value):
        v = float(value)
        if not (0.0 < v < 1.0):
            raise DomainError(f"probability must lie strictly inside (0, 1), got {v!r}")
        return super().__new__(cls, v)

    @property
    def complement(self) -> float:
        return 1.0 - float(self)


class CorridorState(str, Enum):
    BELOW_PARTITION = "BelowPartition"
    IN_CORRIDOR = "InCorridor"
    ABOVE_PEAK = "AbovePeak"


@dataclass(frozen=True)
class BalanceProfile:
    p: float
    f: float
    f_prime: float
    f_double_prime: float
    term_unknown: float
    term_known: float


@dataclass(frozen=True)
class Landmarks:
    p_star: float
    f_at_p_star: float
    p_phi: float
    p_zero: float
    tolerance: float


def _check(p):
    """Validate scalar or array input against the guard band, return float or ndarray."""
    if np.ndim(p) == 0:
        v = float(p)
        if not (P_GUARD <= v <= 1.0 - P_GUARD) or math.isnan(v):
            raise DomainError(
                f"p={v!r} outside the admissible band [{P_GUARD}, 1 - {P_GUARD}]"
            )
        return v
    arr = np.asarray(p, dtype=float)
    bad = ~((arr >= P_GUARD) & (arr <= 1.0 - P_GUARD))
    if bad.any():
        raise DomainError(
            f"{int(bad.sum())} value(s) outside [{P_GUARD}, 1 - {P_GUARD}], "
            f"first offender {arr[bad][0]!r}"
        )
    return arr


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def balance_components(p):
    """Return ``(term_unknown, term_known)``.

    term_unknown = -(1-p) ln(1-p) is the expected surprise of the complement,
    term_known = -ln p the surprise of the expected outcome. The balance is
    their difference.
    """
    p = _check(p)
    q = 1.0 - p
    term_unknown = -q * np.log1p(-p)
    term_known = -np.log(p)
    return _out(term_unknown), _out(term_known)


def balance(p):
    """Evaluate f(p) = -(1-p) ln(1-p) + ln p in nats."""
    unknown, known = balance_components(p)
    return _out(np.asarray(unknown) - np.asarray(known))


def balance_derivative(p):
    """f'(p) = 1 + ln(1-p) + 1/p."""
    p = _check(p)
    return _out(1.0 + np.log1p(-p) + 1.0 / p)


def balance_second_derivative(p):
    """f''(p) = -1/(1-p) - 1/p**2, negative everywhere on (0, 1)."""
    p = _check(p)
    return _out(-1.0 / (1.0 - p) - 1.0 / (p * p))


def bernoulli_entropy(p):
    """Shannon entropy of a Bernoulli(p) variable in nats."""
    p = _check(p)
    return _out(-p * np.log(p) - (1.0 - p) * np.log1p(-p))


def balance_profile(p) -> BalanceProfile:
    p = float(_check(p))
    unknown, known = balance_components(p)
    return BalanceProfile(
        p=p,
        f=unknown - known,
        f_prime=balance_derivative(p),
        f_double_prime=balance_second_derivative(p),
        term_unknown=unknown,
        term_known=known,
    )


# scalar kernels for the root searches; avoid numpy call overhead
def _f(p: float) -> float:
    return -(1.0 - p) * math.log1p(-p) + math.log(p)


def _fp(p: float) -> float:
    return 1.0 + math.log1p(-p) + 1.0 / p


def _fpp(p: float) -> float:
    return -1.0 / (1.0 - p) - 1.0 / (p * p)


def _bisect_decreasing(g, lo: float, hi: float, tolerance: float) -> float:
    """Root of a strictly decreasing g on [lo, hi] with g(lo) > 0 > g(hi)."""
    mid = 0.5 * (lo + hi)
    for _ in range(_MAX_ITER):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm > 0.0:
            lo = mid
        else:
            hi = mid
        if abs(gm) < tolerance and hi - lo < tolerance:
            break
        if mid in (lo, hi) and hi - lo <= 2 * math.ulp(mid):
            break
    return mid


def _check_tolerance(tolerance: float) -> float:
    tolerance = float(tolerance)
    if not tolerance > 0.0:
        raise ValueError(f"tolerance must be positive, got {tolerance!r}")
    return tolerance


def find_maximizer(tolerance: float = 1e-10) -> tuple[float, float]:
    """Locate the unique maximizer p* of f and return ``(p_star, f(p_star))``.

    f' decreases strictly from +inf to -inf on (0, 1), so bisection on f' is
    guaranteed to bracket the root. A single Newton step polishes the result
    when it reduces |f'|.
    """
    tolerance = _check_tolerance(tolerance)
    p = _bisect_decreasing(_fp, P_GUARD, 1.0 - P_GUARD, tolerance)
    polished = p - _fp(p) / _fpp(p)
    if P_GUARD < polished < 1.0 - P_GUARD and abs(_fp(polished)) < abs(_fp(p)):
        p = polished
    return p, _f(p)


def golden_partition() -> float:
    """The positive root of p**2 + p - 1 = 0, i.e. 1/phi = phi - 1."""
    return (math.sqrt(5.0) - 1.0) / 2.0


def find_interior_zero(tolerance: float = 1e-12) -> float:
    """The unique root of f inside (0, p*).

    f increases on (0, p*) from -inf to f(p*) > 0. The limit f -> 0+ as
    p -> 1 is not an interior root.
    """
    tolerance = _check_tolerance(tolerance)
    p_star, _ = find_maximizer(min(tolerance, 1e-10))
    p = _bisect_decreasing(lambda x: -_f(x), P_GUARD, p_star, tolerance)
    polished = p - _f(p) / _fp(p)
    if P_GUARD < polished < p_star and abs(_f(polished)) < abs(_f(p)):
        p = polished
    return p


def compute_landmarks(tolerance: float = 1e-10) -> Landmarks:
    p_star, f_star = find_maximizer(tolerance)
    return Landmarks(
        p_star=p_star,
        f_at_p_star=f_star,
        p_phi=golden_partition(),
        p_zero=find_interior_zero(tolerance),
        tolerance=tolerance,
    )


def corridor_classify(p, landmarks: Landmarks) -> CorridorState:
    """Place p relative to the corridor [p_phi, p*]; both ends belong to the corridor."""
    p = float(_check(p))
    if p < landmarks.p_phi:
        return CorridorState.BELOW_PARTITION
    if p > landmarks.p_star:
        return CorridorState.ABOVE_PEAK
    return CorridorState.IN_CORRIDOR
