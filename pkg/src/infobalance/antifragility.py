"""Payoff of perturbation (learning progress) and its convexity in the perturbation size.

The payoff of one episode is ``E_before - E_after``, the drop in mean squared
prediction error between a window just before the perturbation onset and a
window that starts ``settle`` steps after it. Convexity over a ladder of
perturbation sizes is estimated with divided second differences and a
bootstrap confidence interval over trials.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import seeding
from .agent import StepRecord
from .perturbation import PerturbationLadder, ladder_schedules
from .scenario import Scenario

MIN_RELIABLE_TRIALS = 30
CURVE_COLUMNS = ("magnitude", "phi", "phi_std_error", "e_before", "e_after", "trials")


class Label(str, Enum):
    FRAGILE = "Fragile"
    ROBUST = "Robust"
    ANTIFRAGILE = "Antifragile"


@dataclass(frozen=True)
class PayoffSample:
    magnitude: float
    phi: float
    e_before: float
    e_after: float
    trials: int
    phi_std_error: float
    trial_phis: tuple[float, ...] = ()


@dataclass(frozen=True)
class ConvexityVerdict:
    second_differences: tuple[float, ...]
    mean_second_difference: float
    ci_low: float
    ci_high: float
    label: Label
    n_resamples: int = 0

    def to_dict(self) -> dict:
        return {
            "second_differences": list(self.second_differences),
            "mean_second_difference": self.mean_second_difference,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "ci_level": 0.95,
            "n_resamples": self.n_resamples,
            "label": self.label.value,
        }


@dataclass(frozen=True)
class PayoffWindows:
    window: int = 2000
    settle: int = 500

    def check(self, onset: int, T: int) -> None:
        if self.window < 1 or self.settle < 0:
            raise ValueError(f"need window >= 1 and settle >= 0, got {self.window}, {self.settle}")
        lo, hi = onset - self.window, onset + self.settle + self.window
        if lo < 0 or hi > T:
            raise ValueError(
                f"payoff windows [{lo}, {onset}) and [{onset + self.settle}, {hi}) "
                f"do not fit in a trace of length {T} (need 0 <= {lo} and {hi} <= {T})"
            )


def _epsilons(trace) -> np.ndarray:
    if len(trace) and isinstance(trace[0], StepRecord):
        return np.array([r.epsilon for r in trace])
    return np.asarray(trace, dtype=float)


def payoff(trace, onset: int, window: int, settle: int = 500) -> tuple[float, float, float]:
    """``(e_before, e_after, phi)`` from mean squared errors around ``onset``.

    ``trace`` is a sequence of StepRecord or a plain array of prediction errors.
    """
    eps = _epsilons(trace)
    PayoffWindows(window, settle).check(onset, eps.size)
    before = eps[onset - window : onset]
    after = eps[onset + settle : onset + settle + window]
    e_before = float(np.mean(before * before))
    e_after = float(np.mean(after * after))
    return e_before, e_after, e_before - e_after


def _run_trial(args) -> tuple[int, int, float, float]:
    i, j, schedule, scenario, T, windows, seed = args
    # common random numbers: trial j sees the same streams at every magnitude
    trace, _ = scenario.run(schedule, T, seed, j)
    e_b, e_a, _ = payoff(trace, schedule.onset, windows.window, windows.settle)
    return i, j, e_b, e_a


def _aggregate(magnitude: float, e_before: np.ndarray, e_after: np.ndarray) -> PayoffSample:
    phis = e_before - e_after
    n = phis.size
    se = float(phis.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    eb, ea = float(e_before.mean()), float(e_after.mean())
    return PayoffSample(
        magnitude=magnitude,
        phi=eb - ea,
        e_before=eb,
        e_after=ea,
        trials=n,
        phi_std_error=se,
        trial_phis=tuple(float(v) for v in phis),
    )


def payoff_curve(
    ladder: PerturbationLadder,
    scenario: Scenario,
    trials: int,
    master_seed: int = 0,
    T: Optional[int] = None,
    windows: PayoffWindows = PayoffWindows(),
    workers: int = 1,
) -> list[PayoffSample]:
    """Mean payoff and its standard error at each ladder magnitude.

    ``T`` defaults to the shortest episode that fits the after-window.
    Results do not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if trials < MIN_RELIABLE_TRIALS:
        warnings.warn(
            f"trials={trials} < {MIN_RELIABLE_TRIALS}: bootstrap intervals will be unreliable",
            UserWarning,
            stacklevel=2,
        )
    onset = ladder.template.onset
    if T is None:
        T = onset + windows.settle + windows.window
    windows.check(onset, T)

    tasks = [
        (i, j, sched, scenario, T, windows, master_seed)
        for i, sched in enumerate(ladder_schedules(ladder))
        for j in range(trials)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_run_trial(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))

    e_b = np.empty((len(ladder.magnitudes), trials))
    e_a = np.empty_like(e_b)
    for i, j, b, a in results:
        e_b[i, j], e_a[i, j] = b, a
    curve = [_aggregate(m, e_b[i], e_a[i]) for i, m in enumerate(ladder.magnitudes)]
    for s in curve:
        if not (math.isfinite(s.phi)):
            raise RuntimeError(f"no valid payoff at magnitude {s.magnitude}")
    return curve


def synthetic_payoff_curve(
    magnitudes: Sequence[float],
    fn: Callable[[np.ndarray], np.ndarray],
    trials: int = 50,
    noise_sd: float = 0.0,
    seed: int = 0,
    counter: int = 0,
) -> list[PayoffSample]:
    """Payoff samples ``fn(magnitude) + N(0, noise_sd^2)`` per trial, no simulation."""
    mags = np.asarray(magnitudes, dtype=float)
    rng = seeding.stream(seed, seeding.SYNTHETIC_PAYOFF, counter)
    phis = np.asarray(fn(mags), dtype=float)[:, None] + noise_sd * rng.standard_normal((mags.size, trials))
    return [_aggregate(float(m), row, np.zeros_like(row)) for m, row in zip(mags, phis)]


def second_differences(magnitudes: Sequence[float], phis: np.ndarray) -> np.ndarray:
    """Three-point divided second differences on a possibly uneven grid.

    ``phis`` may carry extra trailing axes (e.g. bootstrap replicates).
    Exact (up to rounding) for quadratics: returns 2a for a*x^2 + b*x + c.
    """
    x = np.asarray(magnitudes, dtype=float)
    phis = np.asarray(phis, dtype=float)
    extra = (slice(None),) + (None,) * (phis.ndim - 1)
    h_left = (x[1:-1] - x[:-2])[extra]
    h_right = (x[2:] - x[1:-1])[extra]
    slope_right = (phis[2:] - phis[1:-1]) / h_right
    slope_left = (phis[1:-1] - phis[:-2]) / h_left
    return 2.0 * (slope_right - slope_left) / (h_left + h_right)


def convexity(
    curve: Sequence[PayoffSample],
    n_resamples: int = 1000,
    seed: int = 0,
    atol: Optional[float] = None,
) -> ConvexityVerdict:
    """Classify a payoff curve as fragile, robust or antifragile.

    The 95% interval on the mean second difference comes from a percentile
    bootstrap over trials. When every sample has the same number of trials the
    trial indices are resampled jointly across magnitudes, which respects the
    common random numbers used by :func:`payoff_curve`. Without per-trial data
    the interval collapses to the point estimate.

    ``atol`` absorbs floating-point rounding when classifying; it defaults to
    ``1e-9 * max(1, max |phi|)``.
    """
    if len(curve) < 3:
        raise ValueError(f"convexity needs at least 3 payoff samples, got {len(curve)}")
    curve = sorted(curve, key=lambda s: s.magnitude)
    mags = [s.magnitude for s in curve]
    if any(b <= a for a, b in zip(mags, mags[1:])):
        raise ValueError(f"magnitudes must be strictly increasing: {mags}")
    phis = np.array([s.phi for s in curve])
    d2 = second_differences(mags, phis)
    mean_d2 = float(d2.mean())
    if atol is None:
        atol = 1e-9 * max(1.0, float(np.abs(phis).max()))

    ci_low = ci_high = mean_d2
    n_boot = 0
    if all(s.trial_phis for s in curve) and n_resamples > 0:
        rng = seeding.stream(seed, seeding.BOOTSTRAP)
        counts = {len(s.trial_phis) for s in curve}
        if len(counts) == 1:
            # trial j shares its seed at every magnitude: resample trial indices jointly
            n = counts.pop()
            m = np.array([s.trial_phis for s in curve])
            idx = rng.integers(0, n, size=(n_resamples, n))
            boot = m[:, idx].mean(axis=2)
        else:
            boot = np.stack([
                np.asarray(s.trial_phis)[rng.integers(0, len(s.trial_phis), size=(n_resamples, len(s.trial_phis)))].mean(axis=1)
                for s in curve
            ])
        boot_d2 = second_differences(mags, boot).mean(axis=0)
        ci_low, ci_high = (float(v) for v in np.percentile(boot_d2, [2.5, 97.5]))
        n_boot = n_resamples

    if ci_low > atol:
        label = Label.ANTIFRAGILE
    elif ci_high < -atol:
        label = Label.FRAGILE
    else:
        label = Label.ROBUST
    return ConvexityVerdict(
        second_differences=tuple(float(v) for v in d2),
        mean_second_difference=mean_d2,
        ci_low=ci_low,
        ci_high=ci_high,
        label=label,
        n_resamples=n_boot,
    )


def without_trials(curve: Sequence[PayoffSample]) -> list[PayoffSample]:
    return [replace(s, trial_phis=()) for s in curve]
