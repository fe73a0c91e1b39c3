"""Bundled environment/agent/controller parameters for one episode family."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .agent import AgentState, DriftMode, EnvState, StepRecord, run_episode
from .cima import CimaConfig, CimaDiagnostics, run_cima


@dataclass(frozen=True)
class EnvParams:
    theta0: float = 0.0
    drift_mode: DriftMode = DriftMode.AR1
    drift_param: float = 0.85
    drift_scale: float = 5.0


@dataclass(frozen=True)
class AgentParams:
    mu0: float = 0.0
    alpha: float = 1.0
    omega: float = 0.5
    window: int = 256
    p_min: float = 1e-6
    variance_floor: float = 1e-12


@dataclass(frozen=True)
class Scenario:
    env: EnvParams = field(default_factory=EnvParams)
    agent: AgentParams = field(default_factory=AgentParams)
    cima: CimaConfig = field(default_factory=CimaConfig)
    closed_loop: bool = True

    def make_env(self, seed: int, *counters: int) -> EnvState:
        e = self.env
        return EnvState(
            theta=e.theta0,
            drift_mode=e.drift_mode,
            drift_param=e.drift_param,
            drift_scale=e.drift_scale,
            seed=seed,
            stream_counters=tuple(counters),
        )

    def make_agent(self) -> AgentState:
        a = self.agent
        return AgentState(
            mu=a.mu0,
            alpha=a.alpha,
            omega=a.omega,
            window=a.window,
            p_min=a.p_min,
            variance_floor=a.variance_floor,
        )

    def run(
        self, schedule: Callable[[int], float], T: int, seed: int, *counters: int
    ) -> tuple[list[StepRecord], Optional[list[Optional[CimaDiagnostics]]]]:
        """Run one episode; diagnostics are None in open loop."""
        env, agent = self.make_env(seed, *counters), self.make_agent()
        if not self.closed_loop:
            return run_episode(env, agent, schedule, T), None
        pairs = run_cima(env, agent, schedule, self.cima, self.cima.landmarks(), T)
        return [p[0] for p in pairs], [p[1] for p in pairs]
