"""Environmental schedules, the drifting optimum, and the father's sensor."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from sexratio.model import DomainError, Individual, LifeState, Sex
from sexratio.params import ConfigError, SensorParams


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant function of time, left-closed segments.

    The first segment starts at t = 0; the last extends forever.  Times
    before 0 (burn-in) read the first segment.
    """

    segments: tuple[tuple[float, float], ...] = ((0.0, 0.0),)

    def __post_init__(self) -> None:
        if not self.segments:
            raise ConfigError("a schedule needs at least one segment")
        starts = [s for s, _ in self.segments]
        if starts[0] != 0.0:
            raise ConfigError("the first schedule segment must start at t = 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("schedule segment starts must be strictly increasing")
        self._check_values([v for _, v in self.segments])
        object.__setattr__(self, "_starts", starts)

    def _check_values(self, values: Sequence[float]) -> None:
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("schedule values must be finite")

    def at(self, t: float) -> float:
        i = bisect.bisect_right(self._starts, t) - 1
        return self.segments[max(i, 0)][1]

    def is_constant(self) -> bool:
        return len({v for _, v in self.segments}) == 1

    @classmethod
    def constant(cls, value: float):
        return cls(((0.0, float(value)),))


class HarshnessSchedule(Schedule):
    def _check_values(self, values):
        super()._check_values(values)
        if any(v < 0 for v in values):
            raise ConfigError("harshness must be >= 0")


class NutritionSchedule(Schedule):
    def __init__(self, segments=((0.0, 1.0),)):
        super().__init__(segments)

    def _check_values(self, values):
        super()._check_values(values)
        if any(not 0 < v <= 1 for v in values):
            raise ConfigError("nutrition must lie in (0, 1]")


@dataclass(frozen=True)
class DriftSpec:
    x0: float = 0.0
    rate: float = 0.0
    diffusion: float = 0.0

    def __post_init__(self) -> None:
        if self.diffusion < 0:
            raise ConfigError("drift diffusion must be >= 0")


@dataclass
class EnvironmentState:
    """Mutable per-run view of the environment, owned by one simulation."""

    t: float = 0.0
    harshness: float = 0.0
    nutrition: float = 1.0
    optimum: float = 0.0
    lag: float = 0.25
    harshness_schedule: HarshnessSchedule = field(default_factory=lambda: HarshnessSchedule.constant(0.0))
    nutrition_schedule: NutritionSchedule = field(default_factory=NutritionSchedule)
    drift: DriftSpec = field(default_factory=DriftSpec)

    @classmethod
    def start(cls, harshness: HarshnessSchedule, nutrition: NutritionSchedule, drift: DriftSpec, lag: float, t: float = 0.0):
        env = cls(
            t=t,
            optimum=drift.x0,
            lag=lag,
            harshness_schedule=harshness,
            nutrition_schedule=nutrition,
            drift=drift,
        )
        env.harshness = harshness.at(t)
        env.nutrition = nutrition.at(t)
        return env

    def advance_to(self, t: float) -> None:
        self.t = t
        self.harshness = self.harshness_schedule.at(t)
        self.nutrition = self.nutrition_schedule.at(t)

    def sensed_harshness(self) -> float:
        return self.harshness_schedule.at(self.t - self.lag)


def harshness_at(schedule: Schedule, t: float) -> float:
    return schedule.at(t)


def abstinence_load(abstinence_years, sensor: SensorParams):
    """Extra perceived harshness from abstinence beyond the grace period."""
    return sensor.beta_abst * np.maximum(0.0, np.asarray(abstinence_years, dtype=float) - sensor.grace)


def perceived_harshness(male: Individual, env: EnvironmentState, abstinence_years: float, sensor: SensorParams) -> float:
    """Harshness as sensed by one living male.

    The ambient level is read ``env.lag`` years in the past; abstinence past
    the grace period adds ``beta_abst`` per year.
    """
    if male.sex is not Sex.MALE:
        raise DomainError("only males sense harshness for the preconception setting")
    if male.state is not LifeState.ALIVE:
        raise DomainError(f"perception needs a living male, got state {male.state.value}")
    ambient = env.harshness_schedule.at(env.t - env.lag)
    return max(0.0, ambient + float(abstinence_load(abstinence_years, sensor)))


def step_drift(env: EnvironmentState, dt: float, rng: np.random.Generator) -> EnvironmentState:
    """Advance the optimum by one Euler-Maruyama step; returns a new state."""
    if dt <= 0:
        raise DomainError("dt must be > 0")
    d = env.drift
    x = env.optimum + d.rate * dt
    if d.diffusion > 0:
        x += d.diffusion * math.sqrt(dt) * rng.standard_normal()
    return replace(env, optimum=x)
