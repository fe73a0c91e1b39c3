"""Offline criticality markers: spectral slope and avalanche power-law exponent.

Spectra are averaged periodograms (Hann-tapered, mean-removed, overlapping
segments) and the slope beta is fitted on log-log axes with the convention
``P(f) ~ f**(-beta)``. Avalanches are above-threshold runs of a signal; their
sizes are fitted with the continuous power-law maximum-likelihood estimator.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from . import seeding

MIN_TAIL = 50


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumEstimate:
    frequencies: np.ndarray
    power: np.ndarray
    beta_hat: float
    fit_range: tuple[float, float]
    r_squared: float
    segment_length: int
    overlap_fraction: float


@dataclass(frozen=True)
class AvalancheSet:
    sizes: np.ndarray
    durations: np.ndarray
    starts: np.ndarray
    threshold: float

    def __len__(self) -> int:
        return int(self.sizes.size)


@dataclass(frozen=True)
class PowerLawFit:
    tau_hat: float
    s_min: float
    n_tail: int
    ks_distance: float
    std_error: float


def _finite_series(series, name="series") -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.isfinite(x))[0])
        raise ValueError(f"{name} contains a non-finite value at index {bad}")
    return x


def estimate_spectrum(
    series: Sequence[float],
    segment_length: int = 4096,
    overlap_fraction: float = 0.5,
    fit_range: Optional[tuple[float, float]] = None,
) -> SpectrumEstimate:
    """Welch power spectrum and fitted slope beta.

    The default fit range skips the two lowest non-zero bins and stops at a
    quarter of the sampling rate. Frequencies are in cycles per step.
    """
    x = _finite_series(series)
    n = int(segment_length)
    if n < 8 or n & (n - 1):
        raise ValueError(f"segment_length must be a power of two >= 8, got {segment_length}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError(f"overlap_fraction must lie in [0, 1), got {overlap_fraction}")
    if x.size < 2 * n:
        raise InsufficientDataError(
            f"series of length {x.size} is too short for segment_length {n} (need >= {2 * n})"
        )
    freqs, power = signal.welch(
        x, fs=1.0, window="hann", nperseg=n, noverlap=int(overlap_fraction * n),
        detrend="constant", scaling="density",
    )
    freqs, power = freqs[1:], power[1:]
    if fit_range is None:
        fit_range = (float(freqs[2]), 0.25)
    lo, hi = fit_range
    sel = (freqs >= lo) & (freqs <= hi) & (power > 0)
    if sel.sum() < 3:
        raise InsufficientDataError(f"fewer than 3 spectral bins inside fit range {fit_range}")
    lx, ly = np.log10(freqs[sel]), np.log10(power[sel])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else float("nan")
    return SpectrumEstimate(freqs, power, float(-slope), (float(lo), float(hi)), r2, n, float(overlap_fraction))


def extract_avalanches(series: Sequence[float], threshold: float) -> AvalancheSet:
    """Maximal runs with ``|x| > threshold``; runs touching either end are dropped.

    size = sum over the run of ``|x| - threshold``; duration = run length.
    """
    x = np.abs(_finite_series(series))
    above = x > threshold
    padded = np.concatenate(([False], above, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    keep = (starts > 0) & (ends < x.size)
    starts, ends = starts[keep], ends[keep]
    excess = np.concatenate(([0.0], np.cumsum(np.where(above, x - threshold, 0.0))))
    sizes = excess[ends] - excess[starts]
    return AvalancheSet(
        sizes=sizes,
        durations=(ends - starts).astype(np.int64),
        starts=starts.astype(np.int64),
        threshold=float(threshold),
    )


def default_threshold(series: Sequence[float]) -> float:
    """median(|x|) + std(|x|)."""
    a = np.abs(_finite_series(series))
    return float(np.median(a) + a.std())


def fit_power_law(samples: Sequence[float], s_min: float) -> PowerLawFit:
    """Continuous power-law MLE over the tail ``s >= s_min``.

    tau = 1 + n / sum(ln(s / s_min)); standard error (tau - 1)/sqrt(n); KS
    distance between the tail's empirical CDF and ``1 - (s/s_min)**(1 - tau)``.
    """
    if not s_min > 0:
        raise ValueError(f"s_min must be positive, got {s_min}")
    s = np.asarray(samples, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        raise ValueError("samples must be finite and positive")
    tail = np.sort(s[s >= s_min])
    n = tail.size
    if n < MIN_TAIL:
        raise InsufficientDataError(f"insufficient tail: {n} samples >= s_min={s_min}, need {MIN_TAIL}")
    log_sum = float(np.log(tail / s_min).sum())
    if log_sum <= 1e-12 * n:
        raise InsufficientDataError("tail samples have no spread above s_min; exponent diverges")
    tau = 1.0 + n / log_sum
    cdf_fit = 1.0 - (tail / s_min) ** (1.0 - tau)
    i = np.arange(1, n + 1)
    ks = float(max(np.max(i / n - cdf_fit), np.max(cdf_fit - (i - 1) / n)))
    return PowerLawFit(tau, float(s_min), int(n), ks, (tau - 1.0) / math.sqrt(n))


def scan_s_min(samples: Sequence[float], max_candidates: int = 200) -> PowerLawFit:
    """Pick s_min minimizing the KS distance (slow mode).

    Candidates are unique sample values that leave at least MIN_TAIL samples
    in the tail, thinned to ``max_candidates`` evenly spaced choices.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size < MIN_TAIL:
        raise InsufficientDataError(f"insufficient tail: {s.size} samples, need {MIN_TAIL}")
    candidates = np.unique(s[: s.size - MIN_TAIL + 1])
    if candidates.size > max_candidates:
        candidates = candidates[np.linspace(0, candidates.size - 1, max_candidates).astype(int)]
    best = None
    for c in candidates:
        try:
            fit = fit_power_law(s, float(c))
        except InsufficientDataError:
            continue
        if best is None or fit.ks_distance < best.ks_distance:
            best = fit
    if best is None:
        raise InsufficientDataError("no s_min candidate produced a valid fit")
    return best


# synthetic generators with known spectral slope


def white_noise(n: int, seed: int = 0) -> np.ndarray:
    return seeding.stream(seed, seeding.GENERATOR, 0).standard_normal(n)


def power_law_noise(n: int, beta: float = 1.0, seed: int = 0) -> np.ndarray:
    """Spectral synthesis: amplitudes ~ f**(-beta/2) with random phases."""
    rng = seeding.stream(seed, seeding.GENERATOR, 1)
    freqs = np.fft.rfftfreq(n)
    amp = np.zeros_like(freqs)
    amp[1:] = freqs[1:] ** (-beta / 2.0)
    phases = rng.uniform(0.0, 2.0 * np.pi, freqs.size)
    x = np.fft.irfft(amp * np.exp(1j * phases), n=n)
    return x / x.std()


def brown_noise(n: int, seed: int = 0) -> np.ndarray:
    """Integrated white noise (beta = 2)."""
    return np.cumsum(seeding.stream(seed, seeding.GENERATOR, 2).standard_normal(n))


GENERATORS = {
    "white": lambda n, seed: white_noise(n, seed),
    "pink": lambda n, seed: power_law_noise(n, 1.0, seed),
    "brown": lambda n, seed: brown_noise(n, seed),
}


def pareto_samples(n: int, tau: float, s_min: float = 1.0, seed: int = 0) -> np.ndarray:
    """Inverse-CDF draws from a continuous power law with exponent tau."""
    u = seeding.stream(seed, seeding.GENERATOR, 3).uniform(size=n)
    return s_min * (1.0 - u) ** (-1.0 / (tau - 1.0))


@dataclass
class DiagnosticsSettings:
    segment_length: int = 4096
    overlap_fraction: float = 0.5
    fit_range: Optional[tuple[float, float]] = None
    threshold: Optional[float] = None
    s_min: Optional[float] = None
    scan_s_min: bool = False


@dataclass
class CriticalityReport:
    n_samples: int
    spectrum: SpectrumEstimate
    avalanches: AvalancheSet
    power_law: Optional[PowerLawFit]
    power_law_status: str
    settings: DiagnosticsSettings = field(default_factory=DiagnosticsSettings)

    def to_dict(self) -> dict:
        pl = self.power_law
        spec = self.spectrum
        out = {
            "n_samples": self.n_samples,
            "beta_hat": spec.beta_hat,
            "fit_range": list(spec.fit_range),
            "r_squared": spec.r_squared,
            "segment_length": spec.segment_length,
            "overlap_fraction": spec.overlap_fraction,
            "threshold": self.avalanches.threshold,
            "n_avalanches": len(self.avalanches),
            "power_law_status": self.power_law_status,
        }
        fields = ("tau_hat", "s_min", "n_tail", "ks_distance", "std_error")
        out.update(asdict(pl) if pl is not None else dict.fromkeys(fields))
        return out


def criticality_report(series, settings: Optional[DiagnosticsSettings] = None) -> CriticalityReport:
    """Spectrum of the series and power-law fit of avalanches in its magnitude.

    ``series`` is a prediction-error series or a trace of StepRecords. A
    spectrum failure aborts the report; a missing power-law tail only marks
    that section unavailable.
    """
    settings = settings or DiagnosticsSettings()
    if len(series) and hasattr(series[0], "epsilon"):
        series = [r.epsilon for r in series]
    x = _finite_series(series)
    spec = estimate_spectrum(x, settings.segment_length, settings.overlap_fraction, settings.fit_range)
    threshold = settings.threshold if settings.threshold is not None else default_threshold(x)
    aval = extract_avalanches(x, threshold)
    fit, status = None, "ok"
    try:
        if settings.scan_s_min:
            fit = scan_s_min(aval.sizes)
        else:
            s_min = settings.s_min
            if s_min is None:
                if aval.sizes.size == 0:
                    raise InsufficientDataError("no avalanches")
                s_min = float(aval.sizes.min())
            fit = fit_power_law(aval.sizes, s_min)
    except InsufficientDataError as exc:
        status = f"unavailable: {exc}"
    return CriticalityReport(x.size, spec, aval, fit, status, settings)


def size_histogram(sizes: np.ndarray, n_bins: int = 30) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Log-binned density histogram ``(bin_low, bin_high, density)``."""
    sizes = np.asarray(sizes, dtype=float)
    if sizes.size == 0:
        return np.empty(0), np.empty(0), np.empty(0)
    lo, hi = sizes.min(), sizes.max()
    if hi <= lo:
        edges = np.array([lo, lo * (1 + 1e-9) + 1e-12])
    else:
        edges = np.geomspace(lo, hi, n_bins + 1)
    counts, edges = np.histogram(sizes, bins=edges)
    density = counts / (sizes.size * np.diff(edges))
    return edges[:-1], edges[1:], density
