"""Experiment configuration: one YAML file, strict keys, documented defaults.

Every block rejects unknown keys. ``load_config`` collects all validation
problems into a single :class:`ConfigError` whose message names each offending
key by its dotted location.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..agent import DriftMode
from ..balance import compute_landmarks, golden_partition
from ..cima import CimaConfig
from ..perturbation import PerturbationSchedule, ScheduleKind, log_spaced_magnitudes
from ..scenario import AgentParams, EnvParams, Scenario
from ..seeding import MAX_SEED


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class BalanceBlock(_Block):
    grid_start: float = Field(0.01, gt=0, lt=1)
    grid_end: float = Field(0.99, gt=0, lt=1)
    grid_points: int = Field(99, ge=2)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.grid_start < self.grid_end:
            raise ValueError(f"grid_start ({self.grid_start}) must be < grid_end ({self.grid_end})")
        return self


class EnvBlock(_Block):
    theta0: float = 0.0
    drift_mode: DriftMode = DriftMode.AR1
    drift_param: float = 0.85
    drift_scale: float = Field(5.0, ge=0)

    @model_validator(mode="after")
    def _stable(self):
        if self.drift_mode is DriftMode.AR1 and not abs(self.drift_param) < 1:
            raise ValueError("ar1 drift_param must satisfy |a| < 1")
        return self


class AgentBlock(_Block):
    mu0: float = 0.0
    alpha: float = Field(1.0, gt=0, le=2)
    omega: float = Field(0.5, gt=0, le=1)
    window: int = Field(256, ge=8)
    p_min: float = Field(1e-6, gt=0, lt=0.5)
    variance_floor: float = Field(1e-12, gt=0)

    @model_validator(mode="after")
    def _stable(self):
        if not self.alpha * self.omega < 2:
            raise ValueError("alpha * omega must be < 2")
        return self


class ScheduleBlock(_Block):
    kind: ScheduleKind = ScheduleKind.CONSTANT
    base_sigma_sq: float = Field(1.0, ge=0)
    magnitude: float = Field(0.0, ge=0)
    onset: int = Field(0, ge=0)
    duration: int = Field(0, ge=0)

    def build(self, magnitude: Optional[float] = None) -> PerturbationSchedule:
        return PerturbationSchedule(
            kind=self.kind,
            base_sigma_sq=self.base_sigma_sq,
            magnitude=self.magnitude if magnitude is None else magnitude,
            onset=self.onset,
            duration=self.duration,
        )


class CimaBlock(_Block):
    """Corridor and target default to the golden partition and the maximizer of f."""

    target_p: Optional[float] = Field(None, gt=0, lt=1)
    corridor_low: Optional[float] = Field(None, gt=0, lt=1)
    corridor_high: Optional[float] = Field(None, gt=0, lt=1)
    gain_step: float = Field(1.001, gt=0)
    noise_inject_sigma_sq: float = Field(0.1, ge=0)
    deadband: float = Field(0.05, ge=0)

    @model_validator(mode="after")
    def _resolve(self):
        phi = golden_partition()
        if self.target_p is None:
            self.target_p = phi
        if self.corridor_low is None:
            self.corridor_low = phi
        if self.corridor_high is None:
            self.corridor_high = compute_landmarks(1e-10).p_star
        if not self.corridor_low < self.corridor_high:
            raise ValueError("corridor_low must be < corridor_high")
        if not self.corridor_low <= self.target_p <= self.corridor_high:
            raise ValueError("target_p must lie inside [corridor_low, corridor_high]")
        return self

    def build(self) -> CimaConfig:
        return CimaConfig(**self.model_dump())


class ScenarioBlock(_Block):
    T: int = Field(50_000, ge=1)
    closed_loop: bool = True
    env: EnvBlock = Field(default_factory=EnvBlock)
    agent: AgentBlock = Field(default_factory=AgentBlock)
    schedule: ScheduleBlock = Field(default_factory=ScheduleBlock)
    cima: CimaBlock = Field(default_factory=CimaBlock)

    def build(self, closed_loop: Optional[bool] = None) -> Scenario:
        return Scenario(
            env=EnvParams(**self.env.model_dump()),
            agent=AgentParams(**self.agent.model_dump()),
            cima=self.cima.build(),
            closed_loop=self.closed_loop if closed_loop is None else closed_loop,
        )


def _default_template() -> ScheduleBlock:
    return ScheduleBlock(kind=ScheduleKind.PULSE, base_sigma_sq=0.25, onset=2500, duration=500)


class SweepBlock(_Block):
    """Perturbation ladder sweep.

    ``magnitudes`` overrides the log-spaced ladder given by
    ``n_magnitudes``/``magnitude_low``/``magnitude_high``. Environment, agent and
    controller parameters come from the ``scenario`` block.
    """

    magnitudes: Optional[list[float]] = None
    n_magnitudes: int = Field(7, ge=3)
    magnitude_low: float = Field(0.25, gt=0)
    magnitude_high: float = Field(16.0, gt=0)
    template: ScheduleBlock = Field(default_factory=_default_template)
    trials: int = Field(50, ge=1)
    window: int = Field(2000, ge=1)
    settle: int = Field(500, ge=0)
    T: Optional[int] = Field(None, ge=1)
    closed_loop: bool = True
    n_resamples: int = Field(1000, ge=0)
    synthetic_payoff: Optional[Literal["quadratic", "linear", "concave"]] = None
    synthetic_noise_sd: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _resolve(self):
        if self.magnitudes is None:
            self.magnitudes = list(
                log_spaced_magnitudes(self.magnitude_low, self.magnitude_high, self.n_magnitudes)
            )
        m = self.magnitudes
        if len(m) < 3 or any(b <= a for a, b in zip(m, m[1:])) or any(v < 0 for v in m):
            raise ValueError("magnitudes must be >= 3 non-negative, strictly increasing values")
        if self.T is None:
            self.T = self.template.onset + self.settle + self.window
        return self


class DiagnoseBlock(_Block):
    """Criticality diagnostics; source precedence: trace file, generator, simulated scenario."""

    trace: Optional[str] = None
    generator: Optional[Literal["white", "pink", "brown"]] = None
    generator_samples: int = Field(65_536, ge=16)
    segment_length: int = Field(4096, ge=8)
    overlap_fraction: float = Field(0.5, ge=0, lt=1)
    fit_low: Optional[float] = Field(None, gt=0)
    fit_high: Optional[float] = Field(None, gt=0, le=0.5)
    threshold: Optional[float] = Field(None, ge=0)
    s_min: Optional[float] = Field(None, gt=0)
    scan_s_min: bool = False
    histogram_bins: int = Field(30, ge=1)

    @model_validator(mode="after")
    def _pow2(self):
        n = self.segment_length
        if n & (n - 1):
            raise ValueError(f"segment_length must be a power of two, got {n}")
        if (self.fit_low is None) != (self.fit_high is None):
            raise ValueError("fit_low and fit_high must be given together")
        return self


class ExperimentConfig(_Block):
    master_seed: int = Field(42, ge=0, le=MAX_SEED)
    output_dir: str = "out"
    format: Literal["csv", "jsonl"] = "csv"
    workers: int = Field(1, ge=1)
    balance: BalanceBlock = Field(default_factory=BalanceBlock)
    scenario: ScenarioBlock = Field(default_factory=ScenarioBlock)
    sweep: SweepBlock = Field(default_factory=SweepBlock)
    diagnose: DiagnoseBlock = Field(default_factory=DiagnoseBlock)

    def snapshot(self) -> dict:
        return self.model_dump(mode="json")


def _problems(exc: ValidationError, prefix: str = "") -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        if prefix:
            loc = f"{prefix}.{loc}" if loc != "<root>" else prefix
        if err["type"] == "extra_forbidden":
            out.append(f"{loc}: unknown key")
        else:
            out.append(f"{loc}: {err['msg']}")
    return out


def _set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ConfigError([f"{dotted}: cannot override inside a non-mapping value"])
    d[keys[-1]] = value


def build_config(data: Optional[dict] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Validate a raw mapping, applying dotted-key ``overrides`` on top."""
    data = dict(data or {})
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_path(data, key, value)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_problems(exc)) from None


def load_config(path: Optional[str | Path] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError([f"{path}: config file not found"])
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError([f"{path}: not valid YAML ({exc})"]) from None
        if not isinstance(data, dict):
            raise ConfigError([f"{path}: top level must be a mapping"])
    return build_config(data, overrides)
