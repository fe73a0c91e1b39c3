import csv
import json
import logging

import numpy as np
import pytest

from infobalance import seeding
from infobalance.agent import TRACE_COLUMNS
from infobalance.balance import golden_partition
from infobalance.cima import DIAGNOSTIC_COLUMNS
from infobalance.harness.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from infobalance.harness.config import ConfigError, build_config, load_config
from infobalance.harness.io import TraceFormatError, read_series, verify_manifest, write_table


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# configuration


def test_defaults():
    cfg = build_config()
    assert cfg.master_seed == 42 and cfg.format == "csv"
    assert cfg.scenario.cima.target_p == golden_partition()
    assert cfg.scenario.cima.corridor_high == pytest.approx(0.8816631463699183, abs=1e-12)
    assert cfg.sweep.T == 2500 + 500 + 2000
    assert cfg.sweep.magnitudes == pytest.approx([0.25 * 2**k for k in range(7)])


def test_unknown_keys_all_listed():
    with pytest.raises(ConfigError) as exc:
        build_config({"balance": {"grid_strt": 0.1}, "sweep": {"trialz": 3}, "bogus": 1})
    msg = str(exc.value)
    for key in ("balance.grid_strt", "sweep.trialz", "bogus"):
        assert f"{key}: unknown key" in msg
    assert len(exc.value.problems) == 3


def test_invalid_values_named():
    with pytest.raises(ConfigError) as exc:
        build_config({"scenario": {"agent": {"alpha": 3.0}}, "diagnose": {"segment_length": 1000}})
    msg = str(exc.value)
    assert "scenario.agent.alpha" in msg and "diagnose" in msg


def test_overrides_win(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("master_seed: 5\nsweep:\n  trials: 12\n")
    cfg = load_config(p, {"master_seed": 9, "sweep.window": 300, "output_dir": None})
    assert cfg.master_seed == 9 and cfg.sweep.trials == 12 and cfg.sweep.window == 300


def test_missing_and_malformed_config(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(bad)


def test_snapshot_roundtrip():
    cfg = build_config({"scenario": {"T": 123}})
    assert build_config(cfg.snapshot()) == cfg


# seed streams


def test_streams_reproducible_and_distinct():
    draw = lambda *key: seeding.stream(7, *key).standard_normal(8)
    np.testing.assert_array_equal(draw(seeding.LATENT, 0), draw(seeding.LATENT, 0))
    keys = [(seeding.LATENT, 0), (seeding.OBSERVATION_NOISE, 0), (seeding.LATENT, 1),
            (seeding.BOOTSTRAP,), (seeding.GENERATOR, 0)]
    draws = [tuple(draw(*k)) for k in keys]
    assert len(set(draws)) == len(keys)
    assert not np.array_equal(seeding.stream(8, seeding.LATENT, 0).standard_normal(8), draw(seeding.LATENT, 0))


@pytest.mark.parametrize("bad", [-1, 2**64])
def test_seed_range(bad):
    with pytest.raises(ValueError):
        seeding.stream(bad, seeding.LATENT)


# table I/O


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_table_roundtrip_is_exact(tmp_path, fmt):
    vals = [0.1, 1 / 3, np.pi * 1e-17, -2.5e300]
    path = write_table(tmp_path, "steps", TRACE_COLUMNS, [(t, 0, 0, v, None, 1) for t, v in enumerate(vals)], fmt)
    assert read_series(path).tolist() == vals


def test_csv_header_and_missing_cells(tmp_path):
    path = write_table(tmp_path, "t", ("a", "b"), [(1, None), (2, float("nan"))])
    assert read_csv(path) == [["a", "b"], ["1", ""], ["2", ""]]


def test_jsonl_nulls(tmp_path):
    path = write_table(tmp_path, "t", ("a", "b"), [(1, None)], "jsonl")
    assert json.loads(path.read_text()) == {"a": 1, "b": None}


def test_read_series_errors(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("t,epsilon\n0,1.0\n1,abc\n")
    with pytest.raises(TraceFormatError, match=r"s\.csv:3"):
        read_series(p)
    p.write_text("t,other\n0,1.0\n")
    with pytest.raises(TraceFormatError, match="epsilon"):
        read_series(p)
    j = tmp_path / "s.jsonl"
    j.write_text('{"epsilon": 1.0}\n{"epsilon": null}\n')
    with pytest.raises(TraceFormatError, match=r"s\.jsonl:2"):
        read_series(j)
    j.write_text('{"epsilon": 1.0}\nnot json\n')
    with pytest.raises(TraceFormatError, match=r"s\.jsonl:2"):
        read_series(j)
    with pytest.raises(FileNotFoundError):
        read_series(tmp_path / "missing.csv")


# CLI


def test_balance_command(tmp_path):
    assert run(tmp_path, "balance") == EXIT_OK
    rows = read_csv(tmp_path / "balance.csv")
    assert rows[0] == ["p", "f", "f_prime", "f_double_prime", "entropy", "term_unknown", "term_known"]
    assert len(rows) == 1 + 99
    assert float(rows[1][0]) == 0.01 and float(rows[-1][0]) == 0.99
    lm = json.loads((tmp_path / "landmarks.json").read_text())
    assert lm["p_star"] == pytest.approx(0.8816631463699183, abs=1e-12)
    assert lm["p_zero"] == pytest.approx(0.6963408729700339, abs=1e-12)
    assert all(verify_manifest(tmp_path).values())


def test_balance_two_point_grid(tmp_path):
    assert run(tmp_path, "balance", "--points", "2", "--format", "jsonl") == EXIT_OK
    lines = (tmp_path / "balance.jsonl").read_text().splitlines()
    assert [json.loads(l)["p"] for l in lines] == [0.01, 0.99]


def test_balance_rejects_bad_grid(tmp_path, capsys):
    assert run(tmp_path, "balance", "--start", "0.9", "--end", "0.1") == EXIT_VALIDATION
    assert "grid_start" in capsys.readouterr().err


def test_unknown_config_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("balance:\n  grid_strt: 0.1\n")
    assert main(["balance", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert "balance.grid_strt: unknown key" in capsys.readouterr().err


def test_bad_seed_is_validation_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, "balance", "--seed", "-1")
    assert exc.value.code == EXIT_VALIDATION


def test_global_flags_before_subcommand(tmp_path):
    assert main(["--out", str(tmp_path), "--format", "jsonl", "balance"]) == EXIT_OK
    assert (tmp_path / "balance.jsonl").is_file()


def _simulate(tmp_path, *extra):
    assert run(tmp_path, "simulate", "-T", "3000", "--seed", "3", *extra) == EXIT_OK
    return read_csv(tmp_path / "steps.csv"), read_csv(tmp_path / "diagnostics.csv")


def test_simulate_outputs_and_reproducibility(tmp_path):
    steps, diags = _simulate(tmp_path / "a")
    again, _ = _simulate(tmp_path / "b")
    assert steps == again
    assert steps[0] == list(TRACE_COLUMNS) and len(steps) == 3001
    assert diags[0] == list(DIAGNOSTIC_COLUMNS) and len(diags) == 1 + 3000 - 255
    assert steps[1][4] == "" and steps[256][4] != ""
    states = {r[3] for r in diags[1:]}
    assert states <= {"BelowPartition", "InCorridor", "AbovePeak"}
    assert all(verify_manifest(tmp_path / "a").values())


def test_simulate_short_run_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        assert run(tmp_path, "simulate", "-T", "100") == EXIT_OK
    assert "shorter than the estimation window" in caplog.text
    assert read_csv(tmp_path / "diagnostics.csv") == [list(DIAGNOSTIC_COLUMNS)]


def test_inert_controller_matches_open_loop_cli(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenario:\n  cima:\n    deadband: 1.0\n")
    closed = run(tmp_path / "c", "simulate", "-T", "2000", "--config", str(cfg))
    open_ = run(tmp_path / "o", "simulate", "-T", "2000", "--open-loop")
    assert closed == open_ == EXIT_OK
    assert read_csv(tmp_path / "c" / "steps.csv") == read_csv(tmp_path / "o" / "steps.csv")


def test_sweep_synthetic(tmp_path):
    assert run(tmp_path, "sweep", "--synthetic", "quadratic", "--trials", "40") == EXIT_OK
    verdict = json.loads((tmp_path / "verdict.json").read_text())
    assert verdict["label"] == "Antifragile"
    assert verdict["mean_second_difference"] == pytest.approx(2.0, abs=1e-9)
    rows = read_csv(tmp_path / "payoff_curve.csv")
    assert rows[0] == ["magnitude", "phi", "phi_std_error", "e_before", "e_after", "trials"]
    assert len(rows) == 8


def test_sweep_few_trials_warns(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        assert run(tmp_path, "sweep", "--synthetic", "linear", "--trials", "5") == EXIT_OK
    assert "unreliable" in caplog.text
    assert json.loads((tmp_path / "verdict.json").read_text())["label"] == "Robust"


def test_sweep_simulated_small(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(
        "scenario:\n  agent:\n    window: 32\n"
        "sweep:\n  magnitudes: [0.0, 1.0, 4.0]\n  trials: 4\n  window: 200\n  settle: 50\n"
        "  n_resamples: 50\n  template:\n    kind: pulse\n    base_sigma_sq: 0.25\n"
        "    onset: 300\n    duration: 50\n"
    )
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert len(read_csv(tmp_path / "payoff_curve.csv")) == 4
    assert json.loads((tmp_path / "verdict.json").read_text())["label"] in {"Antifragile", "Robust", "Fragile"}


def test_diagnose_pink_generator(tmp_path):
    assert run(tmp_path, "diagnose", "--generator", "pink") == EXIT_OK
    rep = json.loads((tmp_path / "criticality_report.json").read_text())
    assert 0.9 <= rep["beta_hat"] <= 1.1
    assert rep["source"] == "generator:pink" and rep["n_samples"] == 65536
    assert all(verify_manifest(tmp_path).values())


def test_diagnose_trace_roundtrip(tmp_path):
    _simulate(tmp_path / "sim")
    cfg = tmp_path / "c.yaml"
    cfg.write_text("diagnose:\n  segment_length: 512\n")
    code = main([
        "diagnose", "--trace", str(tmp_path / "sim" / "steps.csv"),
        "--config", str(cfg), "--out", str(tmp_path / "d"),
    ])
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "d" / "criticality_report.json").read_text())
    assert rep["n_samples"] == 3000 and np.isfinite(rep["beta_hat"])


def test_diagnose_missing_trace(tmp_path, capsys):
    assert run(tmp_path, "diagnose", "--trace", str(tmp_path / "nope.csv")) == EXIT_RUNTIME
    assert "not found" in capsys.readouterr().err


def test_diagnose_short_trace_fails(tmp_path):
    p = tmp_path / "short.csv"
    p.write_text("t,epsilon\n" + "".join(f"{k},{k % 3}.0\n" for k in range(100)))
    assert run(tmp_path / "o", "diagnose", "--trace", str(p)) == EXIT_RUNTIME


def test_manifest_detects_tampering(tmp_path):
    run(tmp_path, "balance")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "balance" and manifest["master_seed"] == 42
    assert manifest["config"]["balance"]["grid_points"] == 99
    with open(tmp_path / "balance.csv", "a") as fh:
        fh.write("x\n")
    assert verify_manifest(tmp_path) == {"balance.csv": False, "landmarks.json": True}
