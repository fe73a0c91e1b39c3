"""Implementations behind the CLI subcommands.

Each command reads only the fully resolved :class:`ExperimentConfig`, writes
its outputs to ``config.output_dir`` and finishes with a manifest carrying the
config snapshot and a SHA-256 per output file.
"""
from __future__ import annotations

import logging
import time
import warnings
from pathlib import Path

import numpy as np

from .. import __version__
from ..agent import TRACE_COLUMNS
from ..antifragility import (
    CURVE_COLUMNS,
    PayoffWindows,
    convexity,
    payoff_curve,
    synthetic_payoff_curve,
)
from ..balance import (
    balance_components,
    balance_derivative,
    balance_second_derivative,
    bernoulli_entropy,
    compute_landmarks,
)
from ..cima import DIAGNOSTIC_COLUMNS, Action, inference_stage
from ..criticality import GENERATORS, DiagnosticsSettings, criticality_report, size_histogram
from ..perturbation import PerturbationLadder
from .config import ExperimentConfig
from .io import read_series, write_json, write_manifest, write_table

log = logging.getLogger(__name__)

_SYNTHETIC = {
    "quadratic": lambda x: x**2,
    "linear": lambda x: 3.0 * x + 1.0,
    "concave": lambda x: -(x**2),
}


def _out_dir(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _finish(cfg, command, outputs, t0, extra=None) -> list[Path]:
    manifest = write_manifest(
        _out_dir(cfg), command, cfg.snapshot(), cfg.master_seed, outputs,
        time.perf_counter() - t0, __version__, extra,
    )
    return [*outputs, manifest]


def cmd_balance(cfg: ExperimentConfig) -> list[Path]:
    """Tabulate f, f', f'', entropy and both terms over a grid, plus landmarks."""
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    b = cfg.balance
    p = np.linspace(b.grid_start, b.grid_end, b.grid_points)
    unknown, known = balance_components(p)
    cols = ("p", "f", "f_prime", "f_double_prime", "entropy", "term_unknown", "term_known")
    table = zip(
        p, unknown - known, balance_derivative(p), balance_second_derivative(p),
        bernoulli_entropy(p), unknown, known,
    )
    grid = write_table(out, "balance", cols, table, cfg.format)
    lm = compute_landmarks(1e-12)
    landmarks = write_json(out / "landmarks.json", {
        "schema_version": 1,
        "p_star": lm.p_star,
        "f_at_p_star": lm.f_at_p_star,
        "p_phi": lm.p_phi,
        "p_zero": lm.p_zero,
        "tolerance": lm.tolerance,
        "units": "nats",
    })
    return _finish(cfg, "balance", [grid, landmarks], t0)


def cmd_simulate(cfg: ExperimentConfig, open_loop: bool = False) -> list[Path]:
    """Run one episode and write the step trace and CIMA diagnostics."""
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    sc = cfg.scenario
    closed = sc.closed_loop and not open_loop
    scenario = sc.build(closed_loop=closed)
    schedule = sc.schedule.build()
    if sc.T < sc.agent.window:
        log.warning(
            "T=%d is shorter than the estimation window (%d): no explained-variance "
            "estimates, diagnostics will be empty", sc.T, sc.agent.window,
        )
    trace, diags = scenario.run(schedule, sc.T, cfg.master_seed)

    steps = write_table(
        out, "steps", TRACE_COLUMNS,
        ((r.t, r.y, r.prediction, r.epsilon, r.p_hat, r.sigma_sq) for r in trace),
        cfg.format,
    )
    if diags is None:
        # open loop: inference-stage readout only, gains fixed
        lm = scenario.cima.landmarks()
        a = sc.agent
        rows = []
        for r in trace:
            if r.p_hat is None:
                continue
            d = inference_stage(r.p_hat, lm, r.t)
            rows.append((d.t, d.p_hat, d.f_value, d.corridor_state, Action.NONE, a.omega, a.alpha))
    else:
        rows = [
            (d.t, d.p_hat, d.f_value, d.corridor_state, d.action_taken, d.omega, d.alpha)
            for d in diags if d is not None
        ]
    diag_path = write_table(out, "diagnostics", DIAGNOSTIC_COLUMNS, rows, cfg.format)
    return _finish(cfg, "simulate", [steps, diag_path], t0, {"closed_loop": closed})


def cmd_sweep(cfg: ExperimentConfig) -> list[Path]:
    """Payoff curve over the perturbation ladder and its convexity verdict."""
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    sw = cfg.sweep
    if sw.synthetic_payoff is not None:
        curve = synthetic_payoff_curve(
            sw.magnitudes, _SYNTHETIC[sw.synthetic_payoff], sw.trials,
            sw.synthetic_noise_sd, cfg.master_seed,
        )
        if sw.trials < 30:
            log.warning("trials=%d < 30: bootstrap intervals will be unreliable", sw.trials)
    else:
        ladder = PerturbationLadder(tuple(sw.magnitudes), sw.template.build())
        scenario = cfg.scenario.build(closed_loop=sw.closed_loop)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            curve = payoff_curve(
                ladder, scenario, sw.trials, cfg.master_seed, sw.T,
                PayoffWindows(sw.window, sw.settle), cfg.workers,
            )
        for w in caught:
            log.warning("%s", w.message)
    verdict = convexity(curve, sw.n_resamples, cfg.master_seed)
    curve_path = write_table(
        out, "payoff_curve", CURVE_COLUMNS,
        ((s.magnitude, s.phi, s.phi_std_error, s.e_before, s.e_after, s.trials) for s in curve),
        cfg.format,
    )
    verdict_path = write_json(out / "verdict.json", {
        "schema_version": 1,
        **verdict.to_dict(),
        "magnitudes": [s.magnitude for s in curve],
        "closed_loop": sw.closed_loop,
        "synthetic_payoff": sw.synthetic_payoff,
    })
    return _finish(cfg, "sweep", [curve_path, verdict_path], t0, {"label": verdict.label.value})


def cmd_diagnose(cfg: ExperimentConfig) -> list[Path]:
    """Criticality report from a trace file, a synthetic generator or a fresh simulation."""
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    d = cfg.diagnose
    if d.trace is not None:
        series, source = read_series(Path(d.trace)), f"trace:{d.trace}"
    elif d.generator is not None:
        series, source = GENERATORS[d.generator](d.generator_samples, cfg.master_seed), f"generator:{d.generator}"
    else:
        sc = cfg.scenario
        trace, _ = sc.build().run(sc.schedule.build(), sc.T, cfg.master_seed)
        series, source = np.array([r.epsilon for r in trace]), "scenario"
    settings = DiagnosticsSettings(
        segment_length=d.segment_length,
        overlap_fraction=d.overlap_fraction,
        fit_range=None if d.fit_low is None else (d.fit_low, d.fit_high),
        threshold=d.threshold,
        s_min=d.s_min,
        scan_s_min=d.scan_s_min,
    )
    report = criticality_report(series, settings)
    report_path = write_json(out / "criticality_report.json", {
        "schema_version": 1, "source": source, **report.to_dict(),
    })
    spec = report.spectrum
    spectrum_path = write_table(out, "spectrum", ("frequency", "power"), zip(spec.frequencies, spec.power), cfg.format)
    lo, hi, dens = size_histogram(report.avalanches.sizes, d.histogram_bins)
    hist_path = write_table(out, "avalanche_sizes", ("bin_low", "bin_high", "density"), zip(lo, hi, dens), cfg.format)
    if report.power_law is None:
        log.warning("power-law section %s", report.power_law_status)
    return _finish(cfg, "diagnose", [report_path, spectrum_path, hist_path], t0)

