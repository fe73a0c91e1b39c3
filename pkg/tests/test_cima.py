import numpy as np
import pytest

from infobalance.agent import AgentState, EnvState, run_episode, trace_columns
from infobalance.balance import CorridorState, balance, compute_landmarks, golden_partition
from infobalance.cima import (
    Action,
    CimaConfig,
    CimaDiagnostics,
    action_stage,
    compute_stage,
    inference_stage,
    model_stage,
    run_cima,
)
from infobalance.perturbation import PerturbationSchedule, ScheduleKind

LM = compute_landmarks(1e-10)
PHI = golden_partition()


def diag(p):
    return inference_stage(p, LM)


def test_compute_stage():
    ag = AgentState(window=8)
    assert compute_stage(ag) is None
    for k in range(8):
        ag.push(0.0, float(k))
    assert compute_stage(ag) == 1 - 1e-6


def test_compute_stage_matches_offline():
    W = 64
    env, ag = EnvState(seed=3), AgentState(window=W)
    out = run_cima(env, ag, PerturbationSchedule(), CimaConfig(), LM, 500)
    y = np.array([r.y for r, _ in out])
    e = np.array([r.epsilon for r, _ in out])
    for t in (W - 1, 200, 499):
        p = 1 - np.var(e[t - W + 1 : t + 1], ddof=1) / np.var(y[t - W + 1 : t + 1], ddof=1)
        assert out[t][1].p_hat == pytest.approx(min(max(p, 1e-6), 1 - 1e-6), abs=1e-12)


def test_inference_stage():
    d = diag(PHI)
    assert d.corridor_state is CorridorState.IN_CORRIDOR
    assert d.f_value == balance(PHI)
    assert diag(0.95).corridor_state is CorridorState.ABOVE_PEAK
    d = diag(0.3)
    assert d.corridor_state is CorridorState.BELOW_PARTITION and d.f_value < 0


def test_model_stage_deadband():
    ag = AgentState(omega=0.5)
    model_stage(ag, diag(PHI), CimaConfig())
    assert ag.omega == 0.5


def test_model_stage_raise():
    ag = AgentState(omega=0.5)
    d = diag(0.3)
    model_stage(ag, d, CimaConfig(gain_step=1.1))
    assert ag.omega == pytest.approx(0.55, abs=1e-15)
    assert d.action_taken is Action.RAISE_GAIN


def test_model_stage_lower():
    ag = AgentState(omega=0.5)
    model_stage(ag, diag(0.8), CimaConfig(gain_step=1.25))
    assert ag.omega == pytest.approx(0.4, abs=1e-15)
    assert ag.alpha == 1.0


def test_model_stage_saturates():
    ag = AgentState(omega=1.0)
    model_stage(ag, diag(0.3), CimaConfig(gain_step=1.1))
    assert ag.omega == 1.0


def test_action_inject():
    env = EnvState(sigma_sq=1.0)
    d = diag(0.95)
    action_stage(env, d, CimaConfig(noise_inject_sigma_sq=0.5))
    assert env.sigma_sq == 1.5 and d.action_taken is Action.INJECT_NOISE
    assert env.injected_sigma_sq == 0.5


def test_action_none_in_corridor():
    env = EnvState(sigma_sq=1.0)
    d = diag(0.75)
    action_stage(env, d, CimaConfig(noise_inject_sigma_sq=0.5))
    assert env.sigma_sq == 1.0 and d.action_taken is Action.NONE


def test_action_cannot_damp_scheduled_noise():
    env = EnvState(sigma_sq=1.0)
    d = diag(0.3)
    action_stage(env, d, CimaConfig())
    assert env.sigma_sq == 1.0 and d.action_taken is Action.NONE


def test_action_damps_injected_noise():
    env = EnvState(sigma_sq=1.0)
    cfg = CimaConfig(noise_inject_sigma_sq=0.5)
    action_stage(env, diag(0.95), cfg)
    action_stage(env, diag(0.95), cfg)
    d = diag(0.3)
    action_stage(env, d, cfg)
    assert d.action_taken is Action.DAMP_NOISE
    assert env.sigma_sq == 1.0 and env.injected_sigma_sq == 0.0
    assert env.injected_removed == env.injected_added == 1.0


@pytest.mark.parametrize("kwargs", [
    dict(corridor_low=0.9, corridor_high=0.8),
    dict(target_p=0.5),
    dict(gain_step=0.0),
    dict(deadband=-1.0),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        CimaConfig(**kwargs)


def _eps(trace):
    return np.array([r.epsilon for r in trace])


def test_inert_controller_matches_open_loop():
    cfg = CimaConfig(deadband=1.0, noise_inject_sigma_sq=1.0)
    s = PerturbationSchedule(ScheduleKind.PULSE, 1.0, 4.0, onset=800, duration=300)
    closed = run_cima(EnvState(seed=21), AgentState(), s, cfg, LM, 3000)
    open_ = run_episode(EnvState(seed=21), AgentState(), s, 3000)
    a = trace_columns([r for r, _ in closed])
    b = trace_columns(open_)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    assert all(d.action_taken is Action.NONE for _, d in closed if d is not None)


def test_run_cima_deterministic_and_diagnostics_absent_while_filling():
    def go():
        return run_cima(EnvState(seed=5), AgentState(window=64), PerturbationSchedule(), CimaConfig(), LM, 1000)

    a, b = go(), go()
    assert [(r.y, r.epsilon, r.p_hat) for r, _ in a] == [(r.y, r.epsilon, r.p_hat) for r, _ in b]
    assert all(d is None for _, d in a[:63]) and all(d is not None for _, d in a[63:])
    with pytest.raises(ValueError):
        run_cima(EnvState(), AgentState(), PerturbationSchedule(), CimaConfig(), LM, 0)


def test_bounded_gains_and_noise_accounting():
    # aggressive settings to exercise saturation, injection and damping
    cfg = CimaConfig(gain_step=1.2, noise_inject_sigma_sq=0.5, deadband=0.0)
    env, ag = EnvState(seed=13, drift_param=0.95, drift_scale=3.0), AgentState(alpha=1.9, omega=1.0)
    out = run_cima(env, ag, PerturbationSchedule(ScheduleKind.RAMP, 0.1, 5.0, 2000, 3000), cfg, LM, 8000)
    diags = [d for _, d in out if d is not None]
    omegas = np.array([d.omega for d in diags])
    assert np.all((omegas > 0) & (omegas <= 1))
    assert np.all(omegas * 1.9 < 2)
    assert env.injected_removed <= env.injected_added
    actions = {d.action_taken for d in diags}
    assert {Action.RAISE_GAIN, Action.LOWER_GAIN} <= actions


def test_scheduled_variance_plus_injection_reaches_env():
    cfg = CimaConfig(noise_inject_sigma_sq=0.25)
    env, ag = EnvState(seed=1), AgentState(window=8)
    out = run_cima(env, ag, PerturbationSchedule(base_sigma_sq=1.0), cfg, LM, 2000)
    injected = 0.0
    for r, d in out:
        assert r.sigma_sq == pytest.approx(1.0 + injected, abs=1e-12)
        if d is None:
            continue
        if d.action_taken is Action.INJECT_NOISE:
            injected += 0.25
        elif d.action_taken is Action.DAMP_NOISE:
            injected = 0.0


@pytest.mark.slow
def test_regulation_default_scenario(regulation_runs):
    r = regulation_runs
    assert abs(r.means.mean() - r.target) <= 0.05
    assert r.inside.mean() >= 0.8
