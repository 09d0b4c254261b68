"""Named experiments and the YAML scenario format.

A scenario bundles config overrides, environment schedules, timed events
and calibration targets.  Files look like::

    name: war_draft
    mode: human            # human | plant | tracking
    config:                # any SimConfig field, nested
      population: {size: 20000}
    harshness: [[0, 0.3]]  # (t_start, H) segments
    nutrition: [[0, 1.0]]
    events:
      - {t: 0.0, kind: draft_on, q_threshold: 0.6, fraction: 0.35}
    targets:
      - {start: 1, end: 6, value: 108}
    calibration:
      budget: 60
      free:
        - {name: preconception.p_base, lower: 0.5, upper: 0.7}

Comments are allowed anywhere.  Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Optional

import yaml

from sexratio.environment import DriftSpec, HarshnessSchedule, NutritionSchedule
from sexratio.params import ConfigError, SimConfig, from_dict, get_path, set_path, to_dict, validate

MODES = ("human", "plant", "tracking")
EVENT_KINDS = ("draft_on", "draft_off", "away_on", "away_off")
TARGET_KINDS = ("value", "between_neighbours", "below", "above")


@dataclass(frozen=True)
class Event:
    """A timed switch.

    ``draft_on`` screens eligible men by quality (``q_threshold``) and drafts
    up to ``fraction`` of them; drafted men conceive at ``availability``
    times the usual rate and do not form new unions.  ``away_on`` sends the
    men of ``group`` away for ``duty`` of every ``period`` years.
    """

    t: float
    kind: str
    q_threshold: float = 0.0
    fraction: float = 1.0
    availability: float = 0.05
    group: int = 1
    period: float = 1.0
    duty: float = 0.9

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ConfigError(f"unknown event kind {self.kind!r}; expected one of {', '.join(EVENT_KINDS)}")
        if not 0 <= self.fraction <= 1 or not 0 <= self.availability <= 1:
            raise ConfigError("event fraction and availability must lie in [0, 1]")
        if not 0 <= self.duty <= 1 or self.period <= 0:
            raise ConfigError("away events need period > 0 and duty in [0, 1]")
        if self.group < 0:
            raise ConfigError("event group must be >= 0")


@dataclass(frozen=True)
class Target:
    """Birth-cohort SR pooled over record intervals ending in ``(start, end]``.

    ``kind="between_neighbours"`` asks only that the value lie between the
    previous and next targets (a "rising" point); ``below``/``above`` are
    one-sided.  ``group`` selects fathers of one group (None = everyone).
    """

    start: float
    end: float
    value: float = 0.0
    weight: float = 1.0
    kind: str = "value"
    group: Optional[int] = None

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ConfigError("target end must be after start")
        if self.weight < 0:
            raise ConfigError("target weight must be >= 0")
        if self.kind not in TARGET_KINDS:
            raise ConfigError(f"unknown target kind {self.kind!r}")


@dataclass(frozen=True)
class FreeParam:
    name: str
    lower: float
    upper: float


@dataclass(frozen=True)
class CalibrationSpec:
    """Free parameters with bounds, evaluation budget and replicates per point."""

    free: tuple[FreeParam, ...] = ()
    budget: int = 100
    replicates: int = 1
    tolerance: float = 1.5
    restarts: int = 2

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ConfigError("calibration budget must be >= 1")
        if self.replicates < 1:
            raise ConfigError("calibration replicates must be >= 1")
        for p in self.free:
            if not (p.lower < p.upper) or not all(map(_finite, (p.lower, p.upper))):
                raise ConfigError(f"bounds for {p.name} must be finite with lower < upper")


def _finite(x: float) -> bool:
    return x == x and abs(x) != float("inf")


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str = "human"
    description: str = ""
    overrides: dict = field(default_factory=dict, compare=False, hash=False)
    config: SimConfig = field(default_factory=SimConfig)
    harshness: HarshnessSchedule = field(default_factory=lambda: HarshnessSchedule(((0.0, 0.3),)))
    nutrition: NutritionSchedule = field(default_factory=NutritionSchedule)
    drift: DriftSpec = field(default_factory=DriftSpec)
    events: tuple[Event, ...] = ()
    targets: tuple[Target, ...] = ()
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        times = [e.t for e in self.events]
        if times != sorted(times):
            raise ConfigError("events must be time-ordered")
        starts = [t.start for t in self.targets]
        if starts != sorted(starts):
            raise ConfigError("targets must be time-ordered")
        for p in self.calibration.free:
            get_param(self, p.name)
        if self.mode == "human" and self.config.preconception.comfort_collapse:
            raise ConfigError("comfort collapse is a plant-mode mechanism; it cannot be enabled in human mode")

    def with_config(self, cfg: SimConfig) -> "Scenario":
        return dataclasses.replace(self, config=validate(cfg))


def _event_path(sc: Scenario, dotted: str) -> tuple[int, str]:
    parts = dotted.split(".")
    if len(parts) != 3 or not parts[1].isdigit():
        raise ConfigError(f"event parameters are written events.<index>.<field>, got '{dotted}'")
    i = int(parts[1])
    if i >= len(sc.events) or parts[2] not in {f.name for f in dataclasses.fields(Event)}:
        raise ConfigError(f"unknown parameter '{dotted}'")
    return i, parts[2]


def get_param(sc: Scenario, dotted: str) -> Any:
    """Value of a config path (``sensor.beta_abst``) or event field (``events.0.q_threshold``)."""
    if dotted.startswith("events."):
        i, name = _event_path(sc, dotted)
        return getattr(sc.events[i], name)
    return get_path(sc.config, dotted)


def set_param(sc: Scenario, dotted: str, value: Any) -> Scenario:
    """Copy of ``sc`` with one config path or event field replaced."""
    if dotted.startswith("events."):
        i, name = _event_path(sc, dotted)
        events = list(sc.events)
        events[i] = dataclasses.replace(events[i], **{name: value})
        return dataclasses.replace(sc, events=tuple(events))
    return sc.with_config(set_path(sc.config, dotted, value))


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOP_KEYS = {"name", "mode", "description", "config", "harshness", "nutrition", "drift", "events", "targets", "calibration"}


def _check_keys(data: dict, allowed: set, where: str) -> None:
    for k in data:
        if k not in allowed:
            raise ConfigError(f"unknown key '{where}{k}'")


def _segments(raw: Any, where: str) -> tuple:
    if not isinstance(raw, list) or not all(isinstance(s, (list, tuple)) and len(s) == 2 for s in raw):
        raise ConfigError(f"{where}: expected a list of [t_start, value] pairs")
    try:
        return tuple((float(a), float(b)) for a, b in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _dataclass_list(cls, raw: Any, where: str) -> tuple:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ConfigError(f"{where}: expected a list")
    return tuple(from_dict(cls, item, f"{where}[{i}]") if isinstance(item, dict) else _bad(where, i) for i, item in enumerate(raw))


def _bad(where: str, i: int):
    raise ConfigError(f"{where}[{i}]: expected a mapping")


def scenario_from_dict(data: dict) -> Scenario:
    """Build and validate a :class:`Scenario` from parsed YAML."""
    if not isinstance(data, dict):
        raise ConfigError("a scenario must be a mapping")
    _check_keys(data, _TOP_KEYS, "")
    if "name" not in data:
        raise ConfigError("scenario needs a name")
    overrides = data.get("config") or {}
    if not isinstance(overrides, dict):
        raise ConfigError("config: expected a mapping")
    cfg = validate(from_dict(SimConfig, overrides, "config"))
    kwargs: dict[str, Any] = dict(name=str(data["name"]), overrides=overrides, config=cfg)
    if "mode" in data:
        kwargs["mode"] = str(data["mode"])
    if "description" in data:
        kwargs["description"] = str(data["description"]).strip()
    if "harshness" in data:
        kwargs["harshness"] = HarshnessSchedule(_segments(data["harshness"], "harshness"))
    if "nutrition" in data:
        kwargs["nutrition"] = NutritionSchedule(_segments(data["nutrition"], "nutrition"))
    if "drift" in data:
        kwargs["drift"] = from_dict(DriftSpec, data["drift"], "drift")
    kwargs["events"] = _dataclass_list(Event, data.get("events"), "events")
    kwargs["targets"] = _dataclass_list(Target, data.get("targets"), "targets")
    if "calibration" in data:
        cal = data["calibration"]
        if not isinstance(cal, dict):
            raise ConfigError("calibration: expected a mapping")
        _check_keys(cal, {f.name for f in dataclasses.fields(CalibrationSpec)}, "calibration.")
        cal = dict(cal)
        cal["free"] = [from_dict(FreeParam, p, f"calibration.free[{i}]") for i, p in enumerate(cal.get("free") or [])]
        kwargs["calibration"] = CalibrationSpec(**{**cal, "free": tuple(cal["free"])})
    return Scenario(**kwargs)


def load_scenario(text: str) -> Scenario:
    """Parse YAML text into a validated scenario.

    Syntax errors are reported with line and column; semantic errors name
    the violated rule.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"parse error at {where}: {exc.problem}") from None
    return scenario_from_dict(data)


def load_scenario_file(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def _config_diff(cfg: Any, default: Any) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        a, b = getattr(cfg, f.name), getattr(default, f.name)
        if dataclasses.is_dataclass(a):
            sub = _config_diff(a, b)
            if sub:
                out[f.name] = sub
        elif a != b:
            out[f.name] = to_dict(a)
    return out


def scenario_to_dict(sc: Scenario) -> dict:
    data: dict[str, Any] = {"name": sc.name, "mode": sc.mode}
    if sc.description:
        data["description"] = sc.description
    diff = _config_diff(sc.config, SimConfig())
    if diff:
        data["config"] = diff
    data["harshness"] = [list(s) for s in sc.harshness.segments]
    data["nutrition"] = [list(s) for s in sc.nutrition.segments]
    data["drift"] = to_dict(sc.drift)
    if sc.events:
        data["events"] = [to_dict(e) for e in sc.events]
    if sc.targets:
        data["targets"] = [to_dict(t) for t in sc.targets]
    data["calibration"] = to_dict(sc.calibration)
    return data


def dump_scenario(sc: Scenario) -> str:
    """Serialise to YAML; ``load_scenario(dump_scenario(s)) == s``."""
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None)


def resolved_config(sc: Scenario) -> dict:
    """Fully expanded view of everything a run depends on."""
    data = scenario_to_dict(sc)
    data["config"] = to_dict(sc.config)
    return data


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

BUILTINS = (
    "baseline_peace",
    "war_draft",
    "blockade",
    "mountain_abstinence",
    "comfort_parthenogenesis",
    "ww1_double_dip",
    "tracking_race",
)


def builtin_text(name: str) -> str:
    if name not in BUILTINS:
        raise ConfigError(f"unknown scenario {name!r}; built-ins are: {', '.join(BUILTINS)}")
    return resources.files("sexratio").joinpath("builtin", f"{name}.yaml").read_text(encoding="utf-8")


def builtin(name: str, overrides: Optional[dict] = None) -> Scenario:
    """A catalog scenario, optionally with extra config overrides merged in."""
    data = yaml.safe_load(builtin_text(name))
    if overrides:
        data["config"] = _merge(data.get("config") or {}, overrides)
    return scenario_from_dict(data)


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out
