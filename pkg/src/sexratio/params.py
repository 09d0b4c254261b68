"""Parameter containers for the simulator.

Every tunable number lives in one of the frozen dataclasses below and is
reachable from :class:`SimConfig`.  Configs are plain values: build new ones
with :func:`dataclasses.replace` or :func:`override`.

Units: time in years, ages measured from conception, rates per year.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from typing import Any


class ConfigError(ValueError):
    """Raised when a configuration violates a validation rule."""


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QualityModelConfig:
    """How an individual's quality evolves with age.

    ``weights`` blend the genetic (constant), aging (decaying) and wisdom
    (maturing) components; ``form`` selects a weighted arithmetic or
    geometric mean.
    """

    weights: tuple[float, float, float] = (1.0, 0.0, 0.0)
    aging_rate: float = 0.0
    wisdom_rate: float = 0.0
    wisdom_floor: float = 0.25
    form: str = "linear"


@dataclass(frozen=True)
class NatalQuality:
    """Beta distributions for q_genetic at conception, one per sex.

    Parameterised by mean and concentration (a + b).  Males start lower on
    average and more spread out.
    """

    female_mean: float = 0.70
    female_concentration: float = 14.0
    male_mean: float = 0.6311
    male_concentration: float = 6.0
    heritability: float = 0.0
    strata: int = 32


@dataclass(frozen=True)
class HazardParams:
    """Age-banded baseline hazards plus harshness and quality exponents.

    ``band_edges`` are conception ages where each band starts; ages below
    the gestation length use the fetal rates instead.
    """

    band_edges: tuple[float, ...] = (0.0, 1.75, 5.0, 15.0, 30.0, 45.0, 60.0, 70.0, 80.0, 90.0, 100.0)
    female_rates: tuple[float, ...] = (0.004, 0.0006, 0.0003, 0.0006, 0.0015, 0.004, 0.011, 0.03, 0.08, 0.2, 0.5)
    male_rates: tuple[float, ...] = (
        0.004216, 0.000632, 0.000316, 0.000632, 0.001581, 0.004216, 0.011594, 0.03162, 0.08432, 0.2108, 0.527
    )
    gamma_m: float = 1.0
    gamma_f: float = 1.0
    kappa_m: float = 2.5
    kappa_f: float = 0.0
    fetal_m: float = 0.1166
    fetal_f: float = 0.10


@dataclass(frozen=True)
class PreconceptionParams:
    """Father-controlled probability of a male conception."""

    p_base: float = 0.6
    q_ref: float = 0.727
    h_ref: float = 0.3
    alpha_q: float = 1.0
    alpha_h: float = 0.185
    h_cat: float = 8.0
    s_cat: float = 0.5
    p_floor: float = 0.01
    h_comf: float = 0.0
    comfort_collapse: bool = False
    comfort_duration: float = 2.0


@dataclass(frozen=True)
class MaternalFilterParams:
    """Excess male fetal hazard under maternal malnutrition."""

    n_crit: float = 0.6
    m_max: float = 6.0
    exponent: float = 1.5


@dataclass(frozen=True)
class PairingParams:
    """Union formation and conception."""

    delta_age: float = 2.0
    delta_q: float = 0.02
    noise: float = 1.0
    q_weight: float = 10.0
    female_window: tuple[float, float] = (18.0, 45.0)
    male_window: tuple[float, float] = (20.0, 60.0)
    conception_rate: float = 0.12
    paternity: str = "quality"
    paternity_exponent: float = 1.0


@dataclass(frozen=True)
class SensorParams:
    """The father's perception of the environment and of abstinence."""

    lag: float = 0.25
    beta_abst: float = 1.0
    grace: float = 0.25
    recovery_rate: float = 4.0


@dataclass(frozen=True)
class PopulationSpec:
    size: int = 10_000
    init: str = "stationary"
    carrying_capacity: int = 0  # 0 means "same as size"
    group_fractions: tuple[float, ...] = ()


@dataclass(frozen=True)
class BirthStream:
    """Exogenous conceptions replacing pairing (oracle comparisons)."""

    enabled: bool = False
    per_step: int = 0
    p_male: float = 0.5


@dataclass(frozen=True)
class TrackingParams:
    """Settings of the sexual/asexual tracking race.

    Shared by both arms so "everything else equal" holds by construction.
    """

    lifespan: float = 1.0
    birth_rate: float = 2.0
    mutation_sd: float = 0.1
    gamma_fit: float = 2.0
    paternity: str = "rank"
    initial_sd: float = 0.1


@dataclass(frozen=True)
class SimConfig:
    gestation: float = 0.75
    dt: float = 0.05
    burn_in: float = 0.0
    horizon: float = 50.0
    record_interval: float = 1.0
    max_age: float = 110.0
    profile_edges: tuple[float, ...] = (0.0, 0.75, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0, 110.0)
    life_table_width: float = 1.0
    max_birth_order: int = 8
    smoothing_width: int = 3
    population: PopulationSpec = field(default_factory=PopulationSpec)
    hazard: HazardParams = field(default_factory=HazardParams)
    quality: QualityModelConfig = field(default_factory=QualityModelConfig)
    natal: NatalQuality = field(default_factory=NatalQuality)
    preconception: PreconceptionParams = field(default_factory=PreconceptionParams)
    maternal: MaternalFilterParams = field(default_factory=MaternalFilterParams)
    pairing: PairingParams = field(default_factory=PairingParams)
    sensor: SensorParams = field(default_factory=SensorParams)
    birth_stream: BirthStream = field(default_factory=BirthStream)
    tracking: TrackingParams = field(default_factory=TrackingParams)
    allow_distortions: bool = False

    @property
    def gestation_steps(self) -> int:
        return int(round(self.gestation / self.dt))

    @property
    def capacity(self) -> int:
        return self.population.carrying_capacity or self.population.size


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def validate(cfg: SimConfig) -> SimConfig:
    """Check every cross-field rule; return ``cfg`` unchanged if it passes."""
    _require(cfg.gestation > 0, "gestation must be > 0")
    _require(cfg.dt > 0, "dt must be > 0")
    _require(cfg.dt <= cfg.gestation / 2, "dt must be <= gestation / 2 (gestation spans at least two steps)")
    _require(
        math.isclose(cfg.gestation_steps * cfg.dt, cfg.gestation, rel_tol=1e-9, abs_tol=1e-12),
        "gestation must be a whole number of time steps",
    )
    _require(cfg.horizon >= 0 and cfg.burn_in >= 0, "horizon and burn_in must be >= 0")
    _require(cfg.record_interval > 0, "record_interval must be > 0")
    _require(cfg.max_age > cfg.gestation, "max_age must exceed gestation")
    _require(cfg.life_table_width > 0, "life_table_width must be > 0")
    _require(cfg.max_birth_order >= 3, "max_birth_order must be >= 3")
    _require(cfg.smoothing_width >= 1 and cfg.smoothing_width % 2 == 1, "smoothing_width must be odd and >= 1")
    edges = cfg.profile_edges
    _require(len(edges) >= 2 and all(b > a for a, b in zip(edges, edges[1:])), "profile_edges must be strictly increasing")

    q = cfg.quality
    _require(len(q.weights) == 3 and all(w >= 0 for w in q.weights), "quality weights must be three nonnegative numbers")
    _require(math.isclose(sum(q.weights), 1.0, abs_tol=1e-9), "quality weights must sum to 1")
    _require(q.aging_rate >= 0 and q.wisdom_rate >= 0, "quality rates must be >= 0")
    _require(0 < q.wisdom_floor <= 1, "wisdom_floor must lie in (0, 1]")
    _require(q.form in ("linear", "geometric"), "quality form must be 'linear' or 'geometric'")

    n = cfg.natal
    for name in ("female_mean", "male_mean"):
        _require(0 < getattr(n, name) < 1, f"natal.{name} must lie in (0, 1)")
    _require(n.female_concentration > 0 and n.male_concentration > 0, "natal concentrations must be > 0")
    _require(0 <= n.heritability <= 1, "natal.heritability must lie in [0, 1]")
    _require(n.strata >= 2, "natal.strata must be >= 2")

    h = cfg.hazard
    _require(len(h.band_edges) == len(h.female_rates) == len(h.male_rates), "hazard bands and rates must have equal length")
    _require(h.band_edges[0] == 0.0, "hazard band_edges must start at 0")
    _require(all(b > a for a, b in zip(h.band_edges, h.band_edges[1:])), "hazard band_edges must be increasing")
    rates = h.female_rates + h.male_rates + (h.fetal_m, h.fetal_f, h.gamma_m, h.gamma_f, h.kappa_m, h.kappa_f)
    _require(all(r >= 0 for r in rates), "hazard rates and exponents must be >= 0")
    if not cfg.allow_distortions:
        _require(
            all(m >= f for m, f in zip(h.male_rates, h.female_rates)) and h.fetal_m >= h.fetal_f,
            "male excess mortality ordering violated: male baseline hazard must be >= female in every band",
        )
        _require(h.kappa_m >= h.kappa_f, "quality-selection ordering violated: kappa_m must be >= kappa_f")
        _require(h.gamma_m >= h.gamma_f, "harshness-sensitivity ordering violated: gamma_m must be >= gamma_f")

    p = cfg.preconception
    _require(0 < p.p_floor <= 0.05, "preconception.p_floor must lie in (0, 0.05]")
    _require(p.p_floor < p.p_base < 1, "preconception requires p_floor < p_base < 1")
    _require(p.alpha_q >= 0 and p.alpha_h >= 0, "preconception sensitivities must be >= 0")
    _require(p.h_cat > 0 and p.s_cat > 0, "preconception h_cat and s_cat must be > 0")
    _require(0 <= p.h_comf < p.h_cat, "preconception requires 0 <= h_comf < h_cat")
    _require(0 < p.q_ref <= 1, "preconception.q_ref must lie in (0, 1]")
    gate_ref = 1.0 / (1.0 + math.exp(p.s_cat * (p.h_ref - p.h_cat)))
    _require(p.p_floor + (p.p_base - p.p_floor) / gate_ref < 1, "preconception.p_base unreachable at h_ref (gate too closed)")

    m = cfg.maternal
    _require(0 < m.n_crit < 1, "maternal.n_crit must lie in (0, 1)")
    _require(m.m_max >= 1, "maternal.m_max must be >= 1")
    _require(m.exponent > 0, "maternal.exponent must be > 0")

    pr = cfg.pairing
    _require(pr.delta_age >= 0 and pr.delta_q >= 0, "pairing offsets must be >= 0")
    _require(pr.noise >= 0 and pr.q_weight >= 0, "pairing noise and q_weight must be >= 0")
    for name in ("female_window", "male_window"):
        lo, hi = getattr(pr, name)
        _require(hi > lo >= cfg.gestation, f"pairing.{name} must be a non-empty range after birth")
    _require(pr.conception_rate >= 0, "pairing.conception_rate must be >= 0")
    _require(pr.paternity in ("none", "quality", "rank"), "pairing.paternity must be none, quality or rank")

    s = cfg.sensor
    _require(s.lag >= 0 and s.beta_abst >= 0 and s.grace >= 0 and s.recovery_rate >= 0, "sensor parameters must be >= 0")

    pop = cfg.population
    _require(pop.size >= 0 and pop.carrying_capacity >= 0, "population sizes must be >= 0")
    _require(pop.init in ("stationary", "empty"), "population.init must be 'stationary' or 'empty'")
    _require(all(0 <= f <= 1 for f in pop.group_fractions) and sum(pop.group_fractions) <= 1, "group_fractions must be in [0, 1] and sum to <= 1")

    bs = cfg.birth_stream
    _require(bs.per_step >= 0 and 0 <= bs.p_male <= 1, "birth_stream needs per_step >= 0 and p_male in [0, 1]")

    t = cfg.tracking
    _require(t.lifespan > 0 and t.birth_rate > 0, "tracking lifespan and birth_rate must be > 0")
    _require(t.mutation_sd >= 0 and t.gamma_fit >= 0 and t.initial_sd >= 0, "tracking spreads must be >= 0")
    _require(t.paternity in ("none", "rank"), "tracking.paternity must be 'none' or 'rank'")
    return cfg


# ---------------------------------------------------------------------------
# dict conversion
# ---------------------------------------------------------------------------


def _is_dataclass_type(tp: Any) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(tp: Any, value: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    if _is_dataclass_type(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return from_dict(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ConfigError(f"{path}: expected {len(args)} items, got {len(value)}")
        return tuple(_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, str):
            # YAML 1.1 reads exponent literals without a dot (1e-5) as strings
            try:
                return float(value)
            except ValueError:
                raise ConfigError(f"{path}: expected a number") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    return value


def from_dict(cls: type, data: dict, path: str = "") -> Any:
    """Build dataclass ``cls`` from a (possibly partial) nested dict.

    Unknown keys raise :class:`ConfigError`; missing keys take defaults.
    """
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"unknown key '{where}'")
        kwargs[key] = _coerce(hints[key], value, where)
    return cls(**kwargs)


def to_dict(obj: Any) -> Any:
    """Fully expanded plain-dict view (tuples become lists)."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    return obj


def override(obj: Any, changes: dict, path: str = "") -> Any:
    """Return a copy of dataclass ``obj`` with nested ``changes`` applied."""
    hints = typing.get_type_hints(type(obj))
    names = {f.name for f in dataclasses.fields(obj)}
    kwargs = {}
    for key, value in changes.items():
        where = f"{path}.{key}" if path else key
        if key not in names:
            raise ConfigError(f"unknown key '{where}'")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            kwargs[key] = override(current, value, where)
        else:
            kwargs[key] = _coerce(hints[key], value, where)
    return dataclasses.replace(obj, **kwargs)


def get_path(obj: Any, dotted: str) -> Any:
    for part in dotted.split("."):
        if not hasattr(obj, part):
            raise ConfigError(f"unknown parameter '{dotted}'")
        obj = getattr(obj, part)
    return obj


def set_path(obj: Any, dotted: str, value: Any) -> Any:
    """``override`` for a single dotted key, e.g. ``"sensor.beta_abst"``."""
    parts = dotted.split(".")
    nested: dict = {parts[-1]: value}
    for part in reversed(parts[:-1]):
        nested = {part: nested}
    return override(obj, nested)
