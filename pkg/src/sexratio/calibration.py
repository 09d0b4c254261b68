"""Fitting scenario parameters to target birth-cohort sex ratios.

The objective is the weighted squared error between the replicate-mean
SR(t_b) of each target window and the target.  Replicate seeds are derived
from the calibration seed once and reused at every point (common random
numbers), so the objective is a deterministic function of the parameters.

The search is Nelder-Mead on the unit cube (each free parameter rescaled to
[0, 1] by its bounds) with clipping at the faces, restarted from the best
point found so far until the evaluation budget runs out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from sexratio.engine import Trajectory, run
from sexratio.params import ConfigError
from sexratio.scenarios import CalibrationSpec, Scenario, Target, get_param, set_param

PENALTY = 1.0e6


class BudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class TargetResidual:
    start: float
    end: float
    kind: str
    target: float
    simulated: float
    residual: float  # signed distance outside the allowed set (0 when inside)
    ok: bool


@dataclass
class CalibrationResult:
    params: dict
    objective: float
    residuals: list
    feasible: bool
    evaluations: int
    failures: int
    seed: int
    budget: int
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "objective": self.objective,
            "feasible": self.feasible,
            "evaluations": self.evaluations,
            "failures": self.failures,
            "seed": self.seed,
            "budget": self.budget,
            "residuals": [r.__dict__ for r in self.residuals],
        }


def target_values(trajs: list[Trajectory], targets) -> np.ndarray:
    """Replicate-mean SR(t_b) for each target window."""
    out = []
    for tg in targets:
        vals = [tr.sr_tb(tg.start, tg.end, group=tg.group) for tr in trajs]
        out.append(float(np.mean(vals)))
    return np.array(out)


def residuals(sim: np.ndarray, targets, tolerance: float) -> list[TargetResidual]:
    """Per-target signed misfit.

    ``value`` targets miss by ``sim - value``; one-sided targets only count
    the wrong side; a ``between_neighbours`` point must lie between the
    simulated values of the targets on either side.
    """
    out = []
    for i, tg in enumerate(targets):
        s = sim[i]
        if tg.kind == "value":
            r = s - tg.value
            ok = abs(r) <= tolerance
            ref = tg.value
        elif tg.kind == "below":
            r = max(0.0, s - tg.value)
            ok = s < tg.value
            ref = tg.value
        elif tg.kind == "above":
            r = min(0.0, s - tg.value)
            ok = s >= tg.value
            ref = tg.value
        else:
            lo_i, hi_i = i - 1, i + 1
            if lo_i < 0 or hi_i >= len(targets):
                raise ConfigError("a between_neighbours target needs a target on each side")
            a, b = sorted((sim[lo_i], sim[hi_i]))
            r = min(0.0, s - a) + max(0.0, s - b)
            ok = a < s < b
            ref = 0.5 * (a + b)
        if not math.isfinite(s):
            r, ok = float("nan"), False
        out.append(TargetResidual(tg.start, tg.end, tg.kind, float(ref), float(s), float(r), bool(ok)))
    return out


def objective_value(res: list[TargetResidual], targets) -> float:
    total = 0.0
    for r, tg in zip(res, targets):
        if not math.isfinite(r.residual):
            return PENALTY
        total += tg.weight * r.residual**2
    return total


class Objective:
    """Callable objective over the unit cube, counting evaluations."""

    def __init__(self, scenario: Scenario, spec: CalibrationSpec, seed: int, runner: Optional[Callable] = None):
        if not scenario.targets:
            raise ConfigError("calibration needs at least one target")
        self.scenario = scenario
        self.spec = spec
        self.names = [p.name for p in spec.free]
        self.lower = np.array([p.lower for p in spec.free], float)
        self.upper = np.array([p.upper for p in spec.free], float)
        self.seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(spec.replicates, dtype=np.uint32)]
        self.runner = runner or (lambda sc, s: run(None, sc, seed=s))
        self.evaluations = 0
        self.failures = 0
        self.best: Optional[tuple[float, np.ndarray, list]] = None
        self.history: list = []
        self._cache: dict = {}

    def to_params(self, u: np.ndarray) -> dict:
        x = self.lower + np.clip(u, 0.0, 1.0) * (self.upper - self.lower)
        return dict(zip(self.names, (float(v) for v in x)))

    def scenario_at(self, params: dict) -> Scenario:
        sc = self.scenario
        for k, v in params.items():
            if isinstance(get_param(sc, k), int) and not isinstance(get_param(sc, k), bool):
                v = int(round(v))
            sc = set_param(sc, k, v)
        return sc

    def evaluate(self, params: dict) -> tuple[float, list]:
        try:
            sc = self.scenario_at(params)
            trajs = [self.runner(sc, s) for s in self.seeds]
            if any(tr.extinct for tr in trajs):
                raise RuntimeError("population went extinct")
            sim = target_values(trajs, sc.targets)
            res = residuals(sim, sc.targets, self.spec.tolerance)
            return objective_value(res, sc.targets), res
        except (ConfigError, RuntimeError, FloatingPointError, ValueError):
            self.failures += 1
            nan = np.full(len(self.scenario.targets), np.nan)
            return PENALTY, residuals(nan, self.scenario.targets, self.spec.tolerance)

    def __call__(self, u: np.ndarray) -> float:
        key = tuple(np.round(np.clip(u, 0.0, 1.0), 12))
        if key in self._cache:
            return self._cache[key]
        if self.evaluations >= self.spec.budget:
            raise BudgetExhausted
        self.evaluations += 1
        params = self.to_params(np.asarray(u, float))
        f, res = self.evaluate(params)
        self._cache[key] = f
        self.history.append((params, f))
        if self.best is None or f < self.best[0]:
            self.best = (f, np.clip(np.asarray(u, float), 0, 1), res)
        return f


def calibrate(scenario: Scenario, spec: Optional[CalibrationSpec] = None, seed: int = 0, runner: Optional[Callable] = None, x0: Optional[dict] = None) -> CalibrationResult:
    """Bounded derivative-free fit of ``spec.free`` to ``scenario.targets``.

    Starts from the scenario's current values (clipped into the bounds) or
    ``x0``.  Always returns the best point seen; ``feasible`` is False when
    any target misses its tolerance.
    """
    spec = spec or scenario.calibration
    if not spec.free:
        raise ConfigError("calibration needs at least one free parameter")
    dim = len(spec.free)
    if spec.budget < dim + 1:
        raise ConfigError(f"calibration budget must be at least {dim + 1} (dimension + 1)")
    obj = Objective(scenario, spec, seed, runner)
    start = x0 or {p.name: get_param(scenario, p.name) for p in spec.free}
    u = np.clip((np.array([start[n] for n in obj.names], float) - obj.lower) / (obj.upper - obj.lower), 0.0, 1.0)
    rng = np.random.default_rng(seed)
    step = 0.25
    try:
        for attempt in range(spec.restarts + 1):
            simplex = [u]
            for i in range(dim):
                v = u.copy()
                v[i] = v[i] + step if v[i] + step <= 1.0 else v[i] - step
                simplex.append(v)
            optimize.minimize(
                obj, u, method="Nelder-Mead", bounds=[(0.0, 1.0)] * dim,
                options={"initial_simplex": np.array(simplex), "xatol": 1e-3, "fatol": 1e-3, "maxfev": spec.budget},
            )
            u = obj.best[1]
            if all(r.ok for r in obj.best[2]):
                break
            # restart around the incumbent with a fresh, slightly jittered simplex
            step = max(0.05, step * 0.5)
            u = np.clip(u + 0.02 * rng.standard_normal(dim), 0.0, 1.0)
            if obj(u) > obj.best[0]:
                u = obj.best[1]
    except BudgetExhausted:
        pass
    f, ub, res = obj.best
    return CalibrationResult(
        params=obj.to_params(ub),
        objective=f,
        residuals=res,
        feasible=all(r.ok for r in res),
        evaluations=obj.evaluations,
        failures=obj.failures,
        seed=seed,
        budget=spec.budget,
        history=obj.history,
    )


def apply(scenario: Scenario, params: dict) -> Scenario:
    """Scenario with fitted parameters written back."""
    sc = scenario
    for k, v in params.items():
        sc = set_param(sc, k, v)
    return sc
