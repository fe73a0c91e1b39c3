"""Scalar predictive-coding agent in a noisy latent environment.

The environment emits ``y_t = theta_t + eta_t`` with ``eta_t ~ N(0, sigma_t^2)``.
The agent predicts ``mu_t``, forms ``eps_t = y_t - mu_t`` and updates
``mu_{t+1} = mu_t + alpha * omega * eps_t``. Over a sliding window of W steps
it estimates the explained variance ``1 - Var(eps)/Var(y)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import seeding

P_MIN = 1e-6
VARIANCE_FLOOR = 1e-12
MIN_WINDOW = 8
_BLOCK = 4096


class DriftMode(str, Enum):
    STATIC = "static"
    RANDOM_WALK = "random_walk"
    AR1 = "ar1"


class _NormalStream:
    """Standard normals drawn in fixed-size blocks from one generator.

    Block size is constant, so the sequence of values is the same as scalar
    draws would give for a given generator state.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._buf = np.empty(0)
        self._i = 0

    def __call__(self) -> float:
        if self._i >= self._buf.size:
            self._buf = self.rng.standard_normal(_BLOCK)
            self._i = 0
        v = self._buf[self._i]
        self._i += 1
        return float(v)


@dataclass
class EnvState:
    """Latent state theta, current observation variance and drift law.

    For ``AR1`` the update is ``theta <- drift_param * theta + drift_scale * z``;
    for ``RANDOM_WALK`` it is ``theta <- theta + drift_param * z``.
    ``injected_sigma_sq`` is noise added by a controller, tracked apart from
    any scheduled variance.
    """

    theta: float = 0.0
    sigma_sq: float = 1.0
    drift_mode: DriftMode = DriftMode.AR1
    drift_param: float = 0.85
    drift_scale: float = 5.0
    seed: int = 0
    stream_counters: tuple[int, ...] = ()
    injected_sigma_sq: float = 0.0
    injected_added: float = 0.0
    injected_removed: float = 0.0
    _latent: _NormalStream = field(init=False, repr=False, compare=False)
    _noise: _NormalStream = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.drift_mode = DriftMode(self.drift_mode)
        if self.sigma_sq < 0:
            raise ValueError(f"sigma_sq must be >= 0, got {self.sigma_sq}")
        if self.drift_mode is DriftMode.AR1 and not abs(self.drift_param) < 1:
            raise ValueError(f"AR1 coefficient must satisfy |a| < 1, got {self.drift_param}")
        self._latent = _NormalStream(
            seeding.stream(self.seed, seeding.LATENT, *self.stream_counters)
        )
        self._noise = _NormalStream(
            seeding.stream(self.seed, seeding.OBSERVATION_NOISE, *self.stream_counters)
        )

    def step(self) -> float:
        mode = self.drift_mode
        if mode is DriftMode.RANDOM_WALK:
            self.theta += self.drift_param * self._latent()
        elif mode is DriftMode.AR1:
            self.theta = self.drift_param * self.theta + self.drift_scale * self._latent()
        # the noise stream is consumed every step, even at zero variance
        eta = math.sqrt(self.sigma_sq) * self._noise()
        return self.theta + eta


def env_step(env: EnvState) -> tuple[EnvState, float]:
    y = env.step()
    return env, y


@dataclass(slots=True)
class StepRecord:
    t: int
    y: float
    prediction: float
    epsilon: float
    p_hat: Optional[float]
    sigma_sq: float


TRACE_COLUMNS = ("t", "y", "prediction", "epsilon", "p_hat", "sigma_sq")


class AgentState:
    """Predictive-coding estimate mu with gains alpha, omega and two lockstep windows."""

    def __init__(
        self,
        mu: float = 0.0,
        alpha: float = 1.0,
        omega: float = 0.5,
        window: int = 256,
        p_min: float = P_MIN,
        variance_floor: float = VARIANCE_FLOOR,
    ):
        if not 0.0 < alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
        if not 0.0 < omega <= 1.0:
            raise ValueError(f"omega must lie in (0, 1], got {omega}")
        if not alpha * omega < 2.0:
            raise ValueError(f"alpha*omega must be < 2 for a stable update, got {alpha * omega}")
        if window < MIN_WINDOW:
            raise ValueError(f"window must be >= {MIN_WINDOW}, got {window}")
        if not 0.0 < p_min < 0.5:
            raise ValueError(f"p_min must lie in (0, 0.5), got {p_min}")
        self.mu = float(mu)
        self.alpha = float(alpha)
        self.omega = float(omega)
        self.window = int(window)
        self.p_min = float(p_min)
        self.variance_floor = float(variance_floor)
        self.error_window = np.zeros(self.window)
        self.obs_window = np.zeros(self.window)
        self.count = 0

    @property
    def gain(self) -> float:
        return self.alpha * self.omega

    @property
    def window_full(self) -> bool:
        return self.count >= self.window

    def push(self, epsilon: float, y: float) -> None:
        i = self.count % self.window
        self.error_window[i] = epsilon
        self.obs_window[i] = y
        self.count += 1

    def update(self, y: float) -> tuple[float, float]:
        """Apply one prediction-error step; return ``(prediction, epsilon)``."""
        prediction = self.mu
        epsilon = y - prediction
        self.mu = prediction + self.alpha * self.omega * epsilon
        self.push(epsilon, y)
        return prediction, epsilon

    def explained_variance(self) -> Optional[float]:
        if self.count < self.window:
            return None
        return windowed_explained_variance(
            self.error_window, self.obs_window, self.p_min, self.variance_floor
        )


def _var(x: np.ndarray) -> float:
    # two-pass unbiased estimator
    d = x - x.sum() / x.size
    return float(d @ d) / (x.size - 1)


def windowed_explained_variance(
    errors: np.ndarray,
    observations: np.ndarray,
    p_min: float = P_MIN,
    variance_floor: float = VARIANCE_FLOOR,
) -> Optional[float]:
    """``1 - Var(errors)/Var(observations)`` clamped into ``[p_min, 1 - p_min]``.

    Returns None when the observation variance is below ``variance_floor``.
    """
    vy = _var(observations)
    if vy < variance_floor:
        return None
    p = 1.0 - _var(errors) / vy
    return min(max(p, p_min), 1.0 - p_min)


def agent_update(agent: AgentState, y: float, t: int = 0, sigma_sq: float = float("nan")):
    prediction, epsilon = agent.update(y)
    rec = StepRecord(t, y, prediction, epsilon, agent.explained_variance(), sigma_sq)
    return agent, rec


def explained_variance(agent: AgentState) -> Optional[float]:
    return agent.explained_variance()


def run_episode(
    env: EnvState,
    agent: AgentState,
    schedule: Callable[[int], float],
    T: int,
) -> list[StepRecord]:
    """Open-loop episode: the schedule sets sigma^2, nothing regulates the agent."""
    if T < 1:
        raise ValueError(f"episode length must be >= 1, got {T}")
    trace = []
    for t in range(T):
        env.sigma_sq = schedule(t)
        y = env.step()
        prediction, epsilon = agent.update(y)
        trace.append(StepRecord(t, y, prediction, epsilon, agent.explained_variance(), env.sigma_sq))
    return trace


def trace_columns(trace: Sequence[StepRecord]) -> dict[str, np.ndarray]:
    """Column arrays of a trace; missing p_hat becomes NaN."""
    return {
        "t": np.array([r.t for r in trace], dtype=np.int64),
        "y": np.array([r.y for r in trace]),
        "prediction": np.array([r.prediction for r in trace]),
        "epsilon": np.array([r.epsilon for r in trace]),
        "p_hat": np.array([np.nan if r.p_hat is None else r.p_hat for r in trace]),
        "sigma_sq": np.array([r.sigma_sq for r in trace]),
    }
