"""Sexual versus asexual populations following a drifting optimum.

Both arms share one fitness law and one demography.  An individual with
genotype ``x`` dies at rate ``(1 + |x - x*|) ** gamma_fit / lifespan`` and
reproduces at ``birth_rate`` per capita, damped by crowding above the
carrying capacity.  Every birth copies a parental genotype and adds a
Gaussian mutation of scale ``mutation_sd``.

The asexual arm is clonal.  In the sexual arm only females give birth (at
twice the per-capita rate, so the population's renewal rate is the same),
the child inherits the genotype of the mother or of the father with equal
chance, and fathers are drawn with probability proportional to their
fitness rank among living males.  That rank-weighted paternity is the only
extra selection the sexual arm gets.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from sexratio.environment import DriftSpec, EnvironmentState, step_drift
from sexratio.params import ConfigError, SimConfig, TrackingParams, validate
from sexratio.stats import disjoint, proportion_ci

STREAMS = ("env", "deaths", "births", "init")
DENSITY_EXPONENT = 4.0


@dataclass(frozen=True)
class TrackingTrajectory:
    times: np.ndarray
    size: np.ndarray
    mean_genotype: np.ndarray
    optimum: np.ndarray
    extinct: bool
    extinction_time: Optional[float]
    births: int
    seed: int

    @property
    def lag(self) -> np.ndarray:
        """Optimum minus mean genotype (NaN once extinct)."""
        return self.optimum - self.mean_genotype

    def renewal_rate(self) -> float:
        span = self.times[-1] - self.times[0]
        return self.births / span if span > 0 else 0.0


def _streams(seed: int) -> dict:
    kids = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {n: np.random.default_rng(k) for n, k in zip(STREAMS, kids)}


def fitness_quality(x: np.ndarray, optimum: float, gamma_fit: float) -> np.ndarray:
    """Genotype mapped to quality in (0, 1]: ``(1 + |x - x*|) ** -gamma_fit``."""
    return (1.0 + np.abs(np.asarray(x, float) - optimum)) ** (-gamma_fit)


def _simulate(cfg: SimConfig, drift: DriftSpec, seed: int, sexual: bool) -> TrackingTrajectory:
    tp: TrackingParams = cfg.tracking
    rng = _streams(seed)
    dt = cfg.dt
    n_steps = int(round(cfg.horizon / dt))
    rec = max(1, int(round(cfg.record_interval / dt)))
    K = cfg.capacity
    env = EnvironmentState(t=0.0, optimum=drift.x0, drift=drift)
    n0 = cfg.population.size
    x = drift.x0 + tp.initial_sd * rng["init"].standard_normal(n0)
    female = rng["init"].random(n0) < 0.5 if sexual else np.ones(n0, bool)
    times, sizes, means, opts = [0.0], [n0], [x.mean() if n0 else np.nan], [env.optimum]
    births = 0
    extinct_at = None
    d0 = 1.0 / tp.lifespan
    for k in range(n_steps):
        env = step_drift(env, dt, rng["env"])
        q = fitness_quality(x, env.optimum, tp.gamma_fit)
        alive = rng["deaths"].random(len(x)) >= -np.expm1(-d0 / q * dt)
        x, female, q = x[alive], female[alive], q[alive]
        n = len(x)
        reg = min(1.0, (K / n) ** DENSITY_EXPONENT) if n else 0.0
        if sexual:
            moms = np.nonzero(female)[0]
            dads = np.nonzero(~female)[0]
            if len(dads):
                hit = moms[rng["births"].random(len(moms)) < -np.expm1(-2.0 * tp.birth_rate * reg * dt)]
            else:
                hit = moms[:0]
            if len(hit):
                if tp.paternity == "rank":
                    ranks = np.empty(len(dads))
                    ranks[np.argsort(q[dads], kind="stable")] = np.arange(1, len(dads) + 1)
                    w = ranks / ranks.sum()
                else:
                    w = np.full(len(dads), 1.0 / len(dads))
                fathers = dads[rng["births"].choice(len(dads), size=len(hit), p=w)]
                from_dad = rng["births"].random(len(hit)) < 0.5
                parent = np.where(from_dad, fathers, hit)
                kid_x = x[parent] + tp.mutation_sd * rng["births"].standard_normal(len(hit))
                kid_f = rng["births"].random(len(hit)) < 0.5
                x = np.concatenate([x, kid_x])
                female = np.concatenate([female, kid_f])
                births += len(hit)
        else:
            hit = np.nonzero(rng["births"].random(n) < -np.expm1(-tp.birth_rate * reg * dt))[0]
            if len(hit):
                kid_x = x[hit] + tp.mutation_sd * rng["births"].standard_normal(len(hit))
                x = np.concatenate([x, kid_x])
                female = np.concatenate([female, np.ones(len(hit), bool)])
                births += len(hit)
        dead = len(x) == 0 or (sexual and (female.all() or not female.any()))
        if dead and extinct_at is None:
            extinct_at = (k + 1) * dt
        if (k + 1) % rec == 0 or dead:
            times.append((k + 1) * dt)
            sizes.append(len(x))
            means.append(x.mean() if len(x) else np.nan)
            opts.append(env.optimum)
        if dead:
            break
    return TrackingTrajectory(
        np.array(times), np.array(sizes), np.array(means), np.array(opts),
        extinct_at is not None, extinct_at, births, seed,
    )


def run_asexual(cfg: SimConfig, drift: DriftSpec, seed: int) -> TrackingTrajectory:
    """Clonal population tracking ``drift``; mutation and selection only."""
    return _simulate(validate(cfg), drift, seed, sexual=False)


def run_sexual(cfg: SimConfig, drift: DriftSpec, seed: int) -> TrackingTrajectory:
    """Two-sex population with rank-weighted paternity tracking ``drift``."""
    return _simulate(validate(cfg), drift, seed, sexual=True)


SHARED = ("lifespan", "birth_rate", "mutation_sd", "gamma_fit", "initial_sd")


def check_matched(cfg_sexual: SimConfig, cfg_asexual: SimConfig) -> None:
    """Both arms must differ only in the paternity rule."""
    for name in SHARED:
        a, b = getattr(cfg_sexual.tracking, name), getattr(cfg_asexual.tracking, name)
        if a != b:
            raise ConfigError(f"tracking arms must share {name}: sexual has {a}, asexual has {b}")
    for name in ("dt", "horizon", "population"):
        if getattr(cfg_sexual, name) != getattr(cfg_asexual, name):
            raise ConfigError(f"tracking arms must share {name}")


@dataclass(frozen=True)
class RaceResult:
    drift: float
    replicates: int
    p_ext_sexual: tuple[float, float, float]  # (estimate, lo, hi)
    p_ext_asexual: tuple[float, float, float]

    @property
    def significant(self) -> bool:
        """Sexual extinction lower with disjoint 95% intervals."""
        s, a = self.p_ext_sexual, self.p_ext_asexual
        return s[0] < a[0] and disjoint(s[1:], a[1:])

    def to_dict(self) -> dict:
        return {
            "drift": self.drift,
            "replicates": self.replicates,
            "p_ext_sexual": self.p_ext_sexual[0],
            "ci_sexual": list(self.p_ext_sexual[1:]),
            "p_ext_asexual": self.p_ext_asexual[0],
            "ci_asexual": list(self.p_ext_asexual[1:]),
            "significant": self.significant,
        }


def tracking_race(
    cfg_sexual: SimConfig,
    cfg_asexual: SimConfig,
    drift: float,
    replicates: int,
    seed: int = 0,
    diffusion: float = 0.0,
) -> RaceResult:
    """Extinction probabilities of both arms at drift rate ``drift``.

    Replicate ``i`` of both arms uses the same seed, so the environments
    are identical when ``diffusion`` is positive.
    """
    check_matched(cfg_sexual, cfg_asexual)
    if replicates < 1:
        raise ConfigError("tracking_race needs at least one replicate")
    spec = DriftSpec(0.0, float(drift), float(diffusion))
    seeds = np.random.SeedSequence(seed).generate_state(replicates, dtype=np.uint32)
    ext_s = sum(run_sexual(cfg_sexual, spec, int(s)).extinct for s in seeds)
    ext_a = sum(run_asexual(cfg_asexual, spec, int(s)).extinct for s in seeds)
    return RaceResult(float(drift), replicates, proportion_ci(ext_s, replicates), proportion_ci(ext_a, replicates))


def race_configs(cfg: SimConfig) -> tuple[SimConfig, SimConfig]:
    """The sexual and asexual arm of one base config."""
    sexual = dataclasses.replace(cfg, tracking=dataclasses.replace(cfg.tracking, paternity="rank"))
    asexual = dataclasses.replace(cfg, tracking=dataclasses.replace(cfg.tracking, paternity="none"))
    return sexual, asexual


def race_sweep(cfg: SimConfig, drifts: Sequence[float], replicates: int, seed: int = 0) -> list[RaceResult]:
    sx, ax = race_configs(cfg)
    return [tracking_race(sx, ax, v, replicates, seed) for v in drifts]
