"""Domain types and individual quality.

Quality is a dimensionless score in (0, 1].  Three components are tracked:

* genetic: fixed at conception,
* aging: decays exponentially with age,
* wisdom: climbs from ``wisdom_floor * q_genetic`` toward ``q_genetic``.

:func:`quality` blends them with the configured weights.  Array versions
(``*_array``) are what the engine uses.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from sexratio.params import ConfigError, NatalQuality, QualityModelConfig


class Sex(enum.IntEnum):
    FEMALE = 0
    MALE = 1


class LifeState(enum.Enum):
    IN_UTERO = "in_utero"
    ALIVE = "alive"
    DEAD = "dead"


class DomainError(ValueError):
    """An operation was called outside its mathematical domain."""


@dataclass(frozen=True)
class Individual:
    id: int
    sex: Sex
    t_conceived: float
    q_genetic: float
    father_birth_order: int = 1
    state: LifeState = LifeState.ALIVE
    t_death: Optional[float] = None
    father_id: Optional[int] = None
    mother_id: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.q_genetic <= 1.0:
            raise DomainError(f"q_genetic must lie in (0, 1], got {self.q_genetic}")
        if self.father_birth_order < 1:
            raise DomainError("father_birth_order must be a positive integer")
        if self.state is LifeState.DEAD:
            if self.t_death is None or self.t_death < self.t_conceived:
                raise DomainError("a dead individual needs t_death >= t_conceived")

    def age(self, t: float) -> float:
        return t - self.t_conceived

    def state_at(self, t: float, gestation: float) -> LifeState:
        if self.state is LifeState.DEAD and self.t_death is not None and t >= self.t_death:
            return LifeState.DEAD
        return LifeState.IN_UTERO if self.age(t) < gestation else LifeState.ALIVE


def check_quality_config(cfg: QualityModelConfig) -> None:
    if len(cfg.weights) != 3 or any(w < 0 for w in cfg.weights):
        raise ConfigError("quality weights must be three nonnegative numbers")
    if not math.isclose(sum(cfg.weights), 1.0, abs_tol=1e-9):
        raise ConfigError(f"quality weights must sum to 1, got {sum(cfg.weights)}")
    if cfg.form not in ("linear", "geometric"):
        raise ConfigError(f"unknown quality form {cfg.form!r}")


def components_array(q_genetic, age, cfg: QualityModelConfig):
    """Vectorised (q_g, q_a, q_w) for arrays of genetic quality and age."""
    q_genetic = np.asarray(q_genetic, dtype=float)
    age = np.asarray(age, dtype=float)
    decay_a = np.exp(-cfg.aging_rate * age)
    decay_w = np.exp(-cfg.wisdom_rate * age)
    q_a = q_genetic * decay_a
    q_w = q_genetic * (1.0 - decay_w) + q_genetic * cfg.wisdom_floor * decay_w
    return np.broadcast_to(q_genetic, q_a.shape), q_a, q_w


def quality_array(q_genetic, age, cfg: QualityModelConfig) -> np.ndarray:
    """Combined quality for arrays; the engine's hot path."""
    w_g, w_a, w_w = cfg.weights
    if w_g == 1.0:
        q_genetic = np.asarray(q_genetic, dtype=float)
        return q_genetic * np.ones_like(np.asarray(age, dtype=float))
    q_g, q_a, q_w = components_array(q_genetic, age, cfg)
    if cfg.form == "linear":
        out = w_g * q_g + w_a * q_a + w_w * q_w
    else:
        out = q_g**w_g * q_a**w_a * q_w**w_w
    # aging components underflow at extreme ages; keep strictly positive
    return np.clip(out, np.finfo(float).tiny, 1.0)


def quality_component(individual: Individual, t: float, cfg: QualityModelConfig) -> tuple[float, float, float]:
    """Genetic, aging and wisdom quality of ``individual`` at time ``t``."""
    age = t - individual.t_conceived
    if age < 0:
        raise DomainError(f"t={t} precedes conception at {individual.t_conceived}")
    q_g, q_a, q_w = components_array(individual.q_genetic, age, cfg)
    return float(q_g), float(q_a), float(q_w)


def combine(components: tuple[float, float, float], cfg: QualityModelConfig) -> float:
    check_quality_config(cfg)
    w_g, w_a, w_w = cfg.weights
    q_g, q_a, q_w = components
    if cfg.form == "linear":
        out = w_g * q_g + w_a * q_a + w_w * q_w
    else:
        out = q_g**w_g * q_a**w_a * q_w**w_w
    return min(max(out, np.finfo(float).tiny), 1.0)


def quality(individual: Individual, t: float, cfg: QualityModelConfig) -> float:
    return combine(quality_component(individual, t, cfg), cfg)


def beta_params(mean: float, concentration: float) -> tuple[float, float]:
    return mean * concentration, (1.0 - mean) * concentration


def natal_beta(natal: NatalQuality, sex: Sex) -> tuple[float, float]:
    if sex == Sex.MALE:
        return beta_params(natal.male_mean, natal.male_concentration)
    return beta_params(natal.female_mean, natal.female_concentration)


def natal_strata(natal: NatalQuality, sex: Sex, n: Optional[int] = None, nodes: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature over ``n`` equal-probability strata of the natal distribution.

    Each stratum gets ``nodes`` Gauss-Legendre points in probability space,
    which keeps the heavy low-quality tail accurate when hazards scale like
    ``q**-kappa``.  Returns (q values, weights summing to 1).
    """
    n = n or natal.strata
    a, b = natal_beta(natal, sex)
    x, w = np.polynomial.legendre.leggauss(nodes)
    probs = ((np.arange(n)[:, None] + 0.5 + 0.5 * x[None, :]) / n).ravel()
    weights = np.tile(w / 2.0, n) / n
    q = stats.beta.ppf(probs, a, b)
    return np.clip(q, 1e-6, 1.0), weights


def sample_natal_q(natal: NatalQuality, sexes, rng: np.random.Generator, parent_q=None) -> np.ndarray:
    """Draw q_genetic for newly conceived individuals.

    With ``heritability`` h > 0 the draw is blended toward ``parent_q``
    (mid-parent quality): ``(1 - h) * draw + h * parent_q``.
    """
    sexes = np.asarray(sexes)
    male = sexes == Sex.MALE
    am, bm = natal_beta(natal, Sex.MALE)
    af, bf = natal_beta(natal, Sex.FEMALE)
    q = rng.beta(np.where(male, am, af), np.where(male, bm, bf))
    if natal.heritability > 0 and parent_q is not None:
        q = (1.0 - natal.heritability) * q + natal.heritability * np.asarray(parent_q, float)
    return np.clip(q, 1e-6, 1.0)
