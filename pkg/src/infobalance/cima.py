"""Compute-Inference-Model-Action control loop around the predictive-coding agent.

Per step:

* Compute   - windowed explained variance p_hat from the agent.
* Inference - f(p_hat) and the corridor position of p_hat.
* Model     - multiplicative steps on the precision weight omega toward target_p.
* Action    - inject observation noise above the peak, withdraw it below the partition.

Model and Action are both idle while ``|p_hat - target_p| <= deadband``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .agent import AgentState, EnvState, StepRecord
from .balance import (
    CorridorState,
    Landmarks,
    balance,
    compute_landmarks,
    corridor_classify,
    golden_partition,
)

OMEGA_MIN = 1e-6


class Action(str, Enum):
    NONE = "None"
    RAISE_GAIN = "RaiseGain"
    LOWER_GAIN = "LowerGain"
    INJECT_NOISE = "InjectNoise"
    DAMP_NOISE = "DampNoise"


def _default_p_star() -> float:
    return compute_landmarks(1e-10).p_star


@dataclass(frozen=True)
class CimaConfig:
    target_p: float = field(default_factory=golden_partition)
    corridor_low: float = field(default_factory=golden_partition)
    corridor_high: float = field(default_factory=_default_p_star)
    gain_step: float = 1.001
    noise_inject_sigma_sq: float = 0.1
    deadband: float = 0.05

    def __post_init__(self):
        for name in ("target_p", "corridor_low", "corridor_high"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not self.corridor_low < self.corridor_high:
            raise ValueError("corridor_low must be below corridor_high")
        if not self.corridor_low <= self.target_p <= self.corridor_high:
            raise ValueError(
                f"target_p={self.target_p} outside corridor "
                f"[{self.corridor_low}, {self.corridor_high}]"
            )
        if not self.gain_step > 0:
            raise ValueError("gain_step must be positive")
        if self.noise_inject_sigma_sq < 0 or self.deadband < 0:
            raise ValueError("noise_inject_sigma_sq and deadband must be >= 0")

    def landmarks(self, base: Optional[Landmarks] = None) -> Landmarks:
        """Landmarks with the corridor ends replaced by this config's corridor."""
        base = base or compute_landmarks(1e-10)
        return Landmarks(
            p_star=self.corridor_high,
            f_at_p_star=base.f_at_p_star,
            p_phi=self.corridor_low,
            p_zero=base.p_zero,
            tolerance=base.tolerance,
        )


@dataclass
class CimaDiagnostics:
    t: int
    p_hat: float
    f_value: float
    corridor_state: CorridorState
    action_taken: Action = Action.NONE
    omega: float = float("nan")
    alpha: float = float("nan")


DIAGNOSTIC_COLUMNS = ("t", "p_hat", "f_value", "corridor_state", "action_taken", "omega", "alpha")


def compute_stage(agent: AgentState) -> Optional[float]:
    return agent.explained_variance()


def inference_stage(p_hat: float, landmarks: Landmarks, t: int = 0) -> CimaDiagnostics:
    return CimaDiagnostics(
        t=t,
        p_hat=p_hat,
        f_value=balance(p_hat),
        corridor_state=corridor_classify(p_hat, landmarks),
    )


def _outside_deadband(p_hat: float, cfg: CimaConfig) -> int:
    """-1 below the no-action zone, +1 above it, 0 inside."""
    if p_hat < cfg.target_p - cfg.deadband:
        return -1
    if p_hat > cfg.target_p + cfg.deadband:
        return 1
    return 0


def model_stage(agent: AgentState, diag: CimaDiagnostics, cfg: CimaConfig) -> AgentState:
    """Nudge omega toward the target; alpha is left alone."""
    side = _outside_deadband(diag.p_hat, cfg)
    if side < 0:
        omega = min(1.0, agent.omega * cfg.gain_step)
        # alpha*omega must stay below 2
        if agent.alpha * omega < 2.0:
            agent.omega = omega
        if diag.action_taken is Action.NONE:
            diag.action_taken = Action.RAISE_GAIN
    elif side > 0:
        agent.omega = max(OMEGA_MIN, agent.omega / cfg.gain_step)
        if diag.action_taken is Action.NONE:
            diag.action_taken = Action.LOWER_GAIN
    return agent


def action_stage(env: EnvState, diag: CimaDiagnostics, cfg: CimaConfig) -> EnvState:
    """Inject noise above the peak, withdraw previously injected noise below the partition.

    Only noise this stage injected can be withdrawn; scheduled variance is never touched.
    Noise actions take precedence over gain actions in ``diag.action_taken``.
    """
    if _outside_deadband(diag.p_hat, cfg) == 0:
        return env
    if diag.corridor_state is CorridorState.ABOVE_PEAK and cfg.noise_inject_sigma_sq > 0:
        env.injected_sigma_sq += cfg.noise_inject_sigma_sq
        env.injected_added += cfg.noise_inject_sigma_sq
        env.sigma_sq += cfg.noise_inject_sigma_sq
        diag.action_taken = Action.INJECT_NOISE
    elif diag.corridor_state is CorridorState.BELOW_PARTITION and env.injected_sigma_sq > 0:
        removed = env.injected_sigma_sq
        env.injected_sigma_sq = 0.0
        env.injected_removed += removed
        env.sigma_sq = max(0.0, env.sigma_sq - removed)
        diag.action_taken = Action.DAMP_NOISE
    return env


def run_cima(
    env: EnvState,
    agent: AgentState,
    schedule: Callable[[int], float],
    cfg: CimaConfig,
    landmarks: Optional[Landmarks] = None,
    T: int = 1,
) -> list[tuple[StepRecord, Optional[CimaDiagnostics]]]:
    """Closed-loop episode. Diagnostics are None while the window fills."""
    if T < 1:
        raise ValueError(f"episode length must be >= 1, got {T}")
    landmarks = landmarks or cfg.landmarks()
    out = []
    for t in range(T):
        env.sigma_sq = schedule(t) + env.injected_sigma_sq
        sigma_sq = env.sigma_sq
        y = env.step()
        prediction, epsilon = agent.update(y)
        p_hat = agent.explained_variance()
        rec = StepRecord(t, y, prediction, epsilon, p_hat, sigma_sq)
        diag = None
        if p_hat is not None:
            diag = inference_stage(p_hat, landmarks, t)
            model_stage(agent, diag, cfg)
            action_stage(env, diag, cfg)
            diag.omega = agent.omega
            diag.alpha = agent.alpha
        out.append((rec, diag))
    return out
