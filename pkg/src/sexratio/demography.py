"""Hazards, sex-ratio profiles, parity ages and the cohort oracle.

The cohort oracle (:func:`cohort_solve`) integrates survivorship for a
quality-stratified cohort under a fixed environment.  It is the
deterministic reference the Monte Carlo engine is checked against.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from sexratio.environment import Schedule
from sexratio.model import DomainError, Sex, natal_strata, quality_array
from sexratio.params import HazardParams, MaternalFilterParams, SimConfig
from sexratio.reproduction import maternal_multiplier

SR_UNDEFINED = float("nan")


class NoParityCrossing(Exception):
    """The sex-ratio curve never crosses 100 from above.

    ``cause`` is ``"starts_below"`` when the first value is already <= 100,
    ``"never_crosses"`` when it stays above 100 throughout, and
    ``"truncated"`` when a period table ends early without a crossing.
    """

    def __init__(self, cause: str):
        super().__init__(f"no parity crossing: {cause}")
        self.cause = cause


class NoQualityParity(Exception):
    """Mean male quality never reaches mean female quality."""


class UnsupportedConfiguration(ValueError):
    pass


# ---------------------------------------------------------------------------
# hazards
# ---------------------------------------------------------------------------


def band_rate(params: HazardParams, sex: Sex, age: float) -> float:
    edges = params.band_edges
    rates = params.male_rates if sex == Sex.MALE else params.female_rates
    i = int(np.searchsorted(edges, age, side="right")) - 1
    return rates[max(i, 0)]


def hazard(
    sex: Sex,
    age: float,
    q: float,
    harshness: float,
    params: HazardParams,
    gestation: float = 0.75,
    multiplier: float = 1.0,
) -> float:
    """Death rate per year.

    ``baseline(age) * (1 + H)**gamma / q**kappa``; ages below ``gestation``
    use the fetal baseline, scaled by the maternal ``multiplier`` for male
    fetuses.
    """
    if not q > 0:
        raise DomainError(f"quality must be > 0, got {q}")
    if harshness < 0 or age < 0:
        raise DomainError("age and harshness must be >= 0")
    male = sex == Sex.MALE
    gamma = params.gamma_m if male else params.gamma_f
    kappa = params.kappa_m if male else params.kappa_f
    if age < gestation:
        base = params.fetal_m * multiplier if male else params.fetal_f
    else:
        base = band_rate(params, sex, age)
    return base * (1.0 + harshness) ** gamma / q**kappa


def baseline_by_step(params: HazardParams, sex: Sex, n_steps: int, dt: float, gestation_steps: int) -> np.ndarray:
    """Baseline hazard for each whole-step age ``j * dt`` (fetal ages get the fetal rate)."""
    edges = np.asarray(params.band_edges)
    rates = np.asarray(params.male_rates if sex == Sex.MALE else params.female_rates)
    # round so ages landing exactly on an edge are not lost to float error
    idx = np.searchsorted(np.round(edges / dt), np.arange(n_steps), side="right") - 1
    out = rates[np.clip(idx, 0, None)].astype(float)
    out[:gestation_steps] = params.fetal_m if sex == Sex.MALE else params.fetal_f
    return out


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


def sex_ratio(males, females):
    """100 * males / females with the undefined sentinel where females == 0."""
    males = np.asarray(males, dtype=float)
    females = np.asarray(females, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 100.0 * males / females
    return np.where(females > 0, out, SR_UNDEFINED)


def smooth(values: Sequence[float], width: int = 3) -> np.ndarray:
    """Centred moving average that shrinks at the ends and skips NaN."""
    y = np.asarray(values, dtype=float)
    if width <= 1:
        return y.copy()
    half = width // 2
    out = np.full_like(y, np.nan)
    for i in range(len(y)):
        window = y[max(0, i - half): i + half + 1]
        window = window[~np.isnan(window)]
        if len(window) and not np.isnan(y[i]):
            out[i] = window.mean()
    return out


def count_inversions(values: Sequence[float], tol: float = 0.0) -> int:
    """Number of adjacent increases in a curve (NaN entries are skipped)."""
    y = np.asarray(values, dtype=float)
    y = y[~np.isnan(y)]
    return int(np.sum(np.diff(y) > tol))


@dataclass(frozen=True)
class SRProfile:
    edges: np.ndarray
    males: np.ndarray
    females: np.ndarray

    @property
    def sr(self) -> np.ndarray:
        return sex_ratio(self.males, self.females)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def standard_errors(self) -> np.ndarray:
        """Delta-method SE of each bin's SR: SR * sqrt(1/M + 1/F)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.sr * np.sqrt(1.0 / self.males + 1.0 / self.females)

    def curve(self, width: int = 1) -> tuple[np.ndarray, np.ndarray]:
        sr = smooth(self.sr, width)
        keep = ~np.isnan(sr)
        return self.midpoints[keep], sr[keep]

    def to_csv(self) -> str:
        return _bins_csv(self.edges, self.males, self.females)


def _fmt(x: float) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _bins_csv(edges, males, females) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_start", "bin_end", "males", "females", "SR"])
    for lo, hi, m, f, r in zip(edges[:-1], edges[1:], males, females, sex_ratio(males, females)):
        w.writerow([_fmt(lo), _fmt(hi), _fmt(m), _fmt(f), _fmt(r)])
    return buf.getvalue()


def sr_profile(ages, sexes, edges) -> SRProfile:
    """Count individuals by sex into age bins.

    ``ages`` and ``sexes`` describe the living and in-utero individuals;
    callers exclude the dead.
    """
    edges = np.asarray(edges, dtype=float)
    if len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("grid edges must be increasing with at least one bin")
    ages = np.asarray(ages, dtype=float)
    sexes = np.asarray(sexes)
    nb = len(edges) - 1
    idx = np.searchsorted(edges, ages, side="right") - 1
    ok = (idx >= 0) & (idx < nb)
    male = sexes == Sex.MALE
    males = np.bincount(idx[ok & male], minlength=nb)
    females = np.bincount(idx[ok & ~male], minlength=nb)
    return SRProfile(edges, males, females)


# ---------------------------------------------------------------------------
# parity ages
# ---------------------------------------------------------------------------


def _curve_of(obj) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(obj, tuple):
        return np.asarray(obj[0], float), np.asarray(obj[1], float)
    return obj.curve()


def _first_crossing(ages: np.ndarray, gap: np.ndarray) -> Optional[float]:
    """First age where ``gap`` reaches <= 0, linearly interpolated."""
    hit = np.nonzero(gap <= 1e-9)[0]
    if len(hit) == 0:
        return None
    i = hit[0]
    if i == 0:
        return float(ages[0])
    g0, g1 = gap[i - 1], gap[i]
    frac = g0 / (g0 - g1)
    return float(ages[i - 1] + frac * (ages[i] - ages[i - 1]))


def parity_age_numbers(profile_or_table) -> float:
    """Age where SR(t) first falls to 100.

    Accepts an ``(ages, sr)`` tuple or anything with a ``curve()`` method.
    """
    ages, sr = _curve_of(profile_or_table)
    keep = ~np.isnan(sr)
    ages, sr = ages[keep], sr[keep]
    if len(sr) == 0 or sr[0] <= 100.0:
        raise NoParityCrossing("starts_below")
    t = _first_crossing(ages, sr - 100.0)
    if t is None:
        raise NoParityCrossing("never_crosses")
    return t


def parity_age_quality(ages, qbar_m, qbar_f) -> float:
    """First age at which mean male quality reaches mean female quality."""
    ages = np.asarray(ages, float)
    gap = np.asarray(qbar_f, float) - np.asarray(qbar_m, float)
    keep = ~np.isnan(gap)
    t = _first_crossing(ages[keep], gap[keep])
    if t is None:
        raise NoQualityParity("mean male quality stays below mean female quality")
    return t


# ---------------------------------------------------------------------------
# birth order and renewal
# ---------------------------------------------------------------------------


def sr_by_birth_order(records: Iterable[tuple[Sex, int]], max_order: int = 3) -> list[float]:
    """SR among i-th children of their fathers; element ``i - 1`` is SR[i]."""
    males = np.zeros(max_order + 1)
    females = np.zeros(max_order + 1)
    for sex, order in records:
        if 1 <= order <= max_order:
            if sex == Sex.MALE:
                males[order] += 1
            else:
                females[order] += 1
    return list(sex_ratio(males[1:], females[1:]))


@dataclass(frozen=True)
class RenewalEstimate:
    rate: float
    stationary: bool
    relative_drift: float


def renewal_rate(times, population, births) -> RenewalEstimate:
    """Births per year over a recording window.

    ``births[i]`` counts births in the interval ending at ``times[i]``; the
    first entry opens the window and is not counted.  The result is flagged
    non-stationary if population size moved by 5% or more.
    """
    times = np.asarray(times, float)
    population = np.asarray(population, float)
    births = np.asarray(births, float)
    span = times[-1] - times[0]
    rate = float(births[1:].sum() / span) if span > 0 else 0.0
    drift = abs(population[-1] - population[0]) / population[0] if population[0] > 0 else float("inf")
    return RenewalEstimate(rate, drift < 0.05, float(drift))


# ---------------------------------------------------------------------------
# life tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CohortTable:
    """Survivorship per sex from conception, with SR(t) and mean quality.

    ``ages`` are the grid points where ``l_m``, ``l_f`` and ``sr`` are given;
    ``q_ages`` carries the mean-quality curves (the same grid for the oracle,
    bin midpoints for period tables).
    """

    ages: np.ndarray
    l_m: np.ndarray
    l_f: np.ndarray
    sr0: float
    q_ages: np.ndarray
    qbar_m: np.ndarray
    qbar_f: np.ndarray

    @property
    def sr(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.sr0 * self.l_m / self.l_f
        return np.where(self.l_f > 0, out, SR_UNDEFINED)

    def curve(self, width: int = 1) -> tuple[np.ndarray, np.ndarray]:
        sr = smooth(self.sr, width)
        keep = ~np.isnan(sr)
        return self.ages[keep], sr[keep]

    def parity_age(self) -> float:
        return parity_age_numbers(self)

    def quality_parity_age(self) -> float:
        return parity_age_quality(self.q_ages, self.qbar_m, self.qbar_f)

    def expected_counts(self, edges) -> tuple[np.ndarray, np.ndarray]:
        """Relative male/female counts per age bin in a stationary birth stream.

        Each grid point stands for one conception cohort of unit size
        (males weighted by the conception sex ratio).
        """
        edges = np.asarray(edges, float)
        idx = np.searchsorted(edges, self.ages + 1e-9, side="right") - 1
        nb = len(edges) - 1
        ok = (idx >= 0) & (idx < nb)
        p = self.sr0 / (100.0 + self.sr0)
        m = np.bincount(idx[ok], weights=p * self.l_m[ok], minlength=nb)
        f = np.bincount(idx[ok], weights=(1 - p) * self.l_f[ok], minlength=nb)
        return m, f

    def to_csv(self, edges) -> str:
        m, f = self.expected_counts(edges)
        return _bins_csv(np.asarray(edges, float), m, f)


def _constant_value(x, name: str) -> float:
    if isinstance(x, Schedule):
        if not x.is_constant():
            raise UnsupportedConfiguration(f"the cohort oracle needs a constant {name}; got a varying schedule")
        return x.segments[0][1]
    return float(x)


def cohort_solve(
    cfg: SimConfig,
    sr0: float,
    harshness=0.0,
    nutrition=1.0,
    strata: Optional[int] = None,
    maternal: Optional[MaternalFilterParams] = None,
) -> CohortTable:
    """Deterministic survivorship of a conception cohort in a static environment.

    The cohort is split into equal-probability natal-quality strata per sex;
    within a stratum survivorship follows
    ``l(t + dt) = l(t) * exp(-h(t, q, H) * dt)``.  Grid points are whole
    steps of ``cfg.dt`` from conception to ``cfg.max_age``.
    """
    H = _constant_value(harshness, "harshness")
    nut = _constant_value(nutrition, "nutrition")
    mult = maternal_multiplier(nut, maternal or cfg.maternal)
    hp = cfg.hazard
    dt = cfg.dt
    n_steps = int(round(cfg.max_age / dt))
    n_gest = cfg.gestation_steps
    ages = np.arange(n_steps + 1) * dt

    out = {}
    for sex in (Sex.MALE, Sex.FEMALE):
        male = sex == Sex.MALE
        gamma = hp.gamma_m if male else hp.gamma_f
        kappa = hp.kappa_m if male else hp.kappa_f
        q0, w = natal_strata(cfg.natal, sex, strata)
        base = baseline_by_step(hp, sex, n_steps, dt, n_gest) * (1.0 + H) ** gamma
        if male:
            base[:n_gest] *= mult
        # quality by (age step, stratum)
        qa = quality_array(q0[None, :], ages[:, None], cfg.quality)
        h = base[:, None] / qa[:-1] ** kappa
        cum = np.vstack([np.zeros(len(q0)), np.cumsum(h * dt, axis=0)])
        l_strata = np.exp(-cum)
        l = l_strata @ w
        with np.errstate(invalid="ignore", divide="ignore"):
            qbar = (l_strata * qa) @ w / l
        out[sex] = (l, qbar)

    l_m, qm = out[Sex.MALE]
    l_f, qf = out[Sex.FEMALE]
    return CohortTable(ages, l_m, l_f, float(sr0), ages, qm, qf)


def period_table(
    edges,
    exposure_m,
    exposure_f,
    deaths_m,
    deaths_f,
    q_exposure_m,
    q_exposure_f,
    sr0: float,
) -> CohortTable:
    """Period life table from death and exposure tallies.

    Hazards are occurrence/exposure rates per age bin; survivorship is
    evaluated at bin edges and mean quality at bin midpoints.
    """
    edges = np.asarray(edges, float)
    width = np.diff(edges)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_m = np.where(exposure_m > 0, deaths_m / exposure_m, np.nan)
        mu_f = np.where(exposure_f > 0, deaths_f / exposure_f, np.nan)
        qm = np.where(exposure_m > 0, q_exposure_m / exposure_m, np.nan)
        qf = np.where(exposure_f > 0, q_exposure_f / exposure_f, np.nan)
    # stop the table at the first bin nobody reached
    valid = ~(np.isnan(mu_m) | np.isnan(mu_f))
    n = int(np.argmin(valid)) if not valid.all() else len(valid)
    l_m = np.exp(-np.concatenate([[0.0], np.cumsum(mu_m[:n] * width[:n])]))
    l_f = np.exp(-np.concatenate([[0.0], np.cumsum(mu_f[:n] * width[:n])]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    return CohortTable(edges[: n + 1], l_m, l_f, float(sr0), mids[:n], qm[:n], qf[:n])
