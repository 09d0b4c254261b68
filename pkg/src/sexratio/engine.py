"""Discrete-time Monte Carlo simulation of a sexual population.

The population is kept as parallel arrays (one entry per living or
in-utero individual).  Ages are counted in whole time steps from
conception, so an individual conceived at step ``c`` has age ``k - c`` at
step ``k``; everyone dead is compacted out at the end of the step.

Each call to :meth:`Simulation.step` does, in order:

1. move the environment to the start of the interval,
2. fetal deaths (with the maternal multiplier on male fetuses),
3. births (fetuses reaching the gestation length),
4. deaths after birth,
5. scheduled events (draft, absences),
6. union formation and conception,
7. tallies and the accounting check.

Besides realised counts the engine keeps expected-count tallies: each
conception adds its probability of being male to a per-step cohort, and
when that cohort reaches birth the sums are multiplied by the cohort's
fetal survival, computed from the same hazards on a quadrature grid of
natal quality.  These have the same mean as the realised counts but carry
no Bernoulli noise, which is what makes one-point differences in SR(t_b)
measurable at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps

from sexratio.demography import (
    CohortTable,
    NoParityCrossing,
    NoQualityParity,
    baseline_by_step,
    parity_age_numbers,
    parity_age_quality,
    sex_ratio,
)
from sexratio.environment import EnvironmentState, abstinence_load
from sexratio.model import Sex, natal_beta, natal_strata, quality_array, sample_natal_q
from sexratio.params import ConfigError, SimConfig, validate
from sexratio.reproduction import draft_mask, maternal_multiplier, pair_indices, preconception_sr_array
from sexratio.scenarios import Event, Scenario
from sexratio.stats import mean_ci

STREAMS = ("env", "deaths", "pairing", "conception", "init")
LIFE_STRATA = 16
# density feedback above capacity: conception rate times (K / N) ** exponent
DENSITY_EXPONENT = 4.0
NO_ID = -1


class AccountingError(RuntimeError):
    """The population books do not balance (a bug, never expected)."""


def spawn_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named generators derived from one root seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(c) for name, c in zip(STREAMS, children)}


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

_FIELDS = {
    "id": np.int64,
    "sex": np.int8,
    "cstep": np.int64,
    "q": np.float64,
    "stratum": np.int16,
    "group": np.int8,
    "fgroup": np.int8,
    "order": np.int32,
    "order_ok": np.bool_,
    "father": np.int64,
    "mother": np.int64,
    "partner": np.int64,
    "conceptions": np.int32,
    "complete": np.bool_,
    "abstinence": np.float64,
    "drafted": np.bool_,
    "screened": np.bool_,
    "busy_until": np.int64,
}


@dataclass
class PopulationState:
    """Living and in-utero individuals plus running totals.

    ``id`` is strictly increasing along the arrays (new individuals are
    appended with fresh ids and compaction keeps order), so ids can be
    located with ``searchsorted``.
    """

    step: int
    dt: float
    arrays: dict = field(default_factory=dict)
    next_id: int = 0
    initial_count: int = 0
    total_conceived: int = 0
    total_deaths: int = 0
    extinct: bool = False
    extinction_time: Optional[float] = None

    def __getattr__(self, name):
        arrays = self.__dict__.get("arrays")
        if arrays is not None and name in arrays:
            return arrays[name]
        raise AttributeError(name)

    @classmethod
    def empty(cls, step: int, dt: float) -> "PopulationState":
        return cls(step, dt, {k: np.empty(0, dtype=t) for k, t in _FIELDS.items()})

    @property
    def size(self) -> int:
        return len(self.arrays["id"])

    @property
    def t(self) -> float:
        return self.step * self.dt

    def ages(self) -> np.ndarray:
        return self.step - self.arrays["cstep"]

    def index_of(self, ids: np.ndarray) -> np.ndarray:
        """Positions of ``ids``; -1 where the id is no longer present."""
        own = self.arrays["id"]
        pos = np.searchsorted(own, ids)
        pos = np.clip(pos, 0, max(len(own) - 1, 0))
        ok = (len(own) > 0) & (own[pos] == ids) if len(own) else np.zeros(len(ids), bool)
        return np.where(ok, pos, -1)

    def append(self, **cols) -> None:
        n = len(cols["sex"])
        cols["id"] = np.arange(self.next_id, self.next_id + n, dtype=np.int64)
        self.next_id += n
        for k, tp in _FIELDS.items():
            v = cols.get(k)
            if v is None:
                v = np.full(n, _DEFAULTS[k], dtype=tp)
            self.arrays[k] = np.concatenate([self.arrays[k], np.asarray(v, dtype=tp)])

    def keep(self, mask: np.ndarray) -> None:
        for k in self.arrays:
            self.arrays[k] = self.arrays[k][mask]

    def in_utero_count(self, gestation_steps: int) -> int:
        return int(np.sum(self.ages() < gestation_steps))

    def identity_holds(self) -> bool:
        """initial + conceived == present (alive or in utero) + dead."""
        return self.initial_count + self.total_conceived == self.size + self.total_deaths


_DEFAULTS = {
    "id": 0, "sex": 0, "cstep": 0, "q": 1.0, "stratum": 0, "group": 0, "fgroup": 0, "order": 1,
    "order_ok": False, "father": NO_ID, "mother": NO_ID, "partner": NO_ID, "conceptions": 0,
    "complete": True, "abstinence": 0.0, "drafted": False, "screened": False, "busy_until": -(2**62),
}


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------


@dataclass
class LifeTally:
    """Step-resolution life-table tallies from the statistics window.

    Arrays have shape (sex, age step, natal stratum): person-steps at risk,
    deaths, and the sum of current quality over person-steps.
    """

    at_risk: np.ndarray
    deaths: np.ndarray
    q_sum: np.ndarray
    dt: float
    weights: tuple[np.ndarray, np.ndarray]

    def merged(self, other: "LifeTally") -> "LifeTally":
        return LifeTally(self.at_risk + other.at_risk, self.deaths + other.deaths, self.q_sum + other.q_sum, self.dt, self.weights)


@dataclass
class Trajectory:
    """Recorded output of one run.

    ``series`` maps names to arrays with one row per record time; grouped
    series have one column per father group.  Counts in a row cover the
    interval since the previous record.
    """

    times: np.ndarray
    series: dict
    profile_edges: np.ndarray
    profiles_m: np.ndarray
    profiles_f: np.ndarray
    life: LifeTally
    order_expected: np.ndarray  # (max_order + 1, 2): expected births by father birth order
    order_realised: np.ndarray
    sr0_window: tuple[float, float]
    extinct: bool
    extinction_time: Optional[float]
    steps_checked: int
    seed: int
    gestation_steps: int
    smoothing_width: int = 3

    # -- birth cohorts ----------------------------------------------------
    def _births(self, group: Optional[int], kind: str) -> tuple[np.ndarray, np.ndarray]:
        key = "exp" if kind == "expected" else "births"
        m, f = self.series[f"{key}_m"], self.series[f"{key}_f"]
        if group is None:
            return m.sum(axis=1), f.sum(axis=1)
        return m[:, group], f[:, group]

    def sr_tb_series(self, group: Optional[int] = None, kind: str = "expected") -> np.ndarray:
        """SR of each interval's birth cohort (first row is the start, NaN)."""
        m, f = self._births(group, kind)
        return sex_ratio(m, f)

    def sr_tb(self, start: float = -np.inf, end: float = np.inf, group: Optional[int] = None, kind: str = "expected") -> float:
        """Birth-cohort SR pooled over record intervals ending in (start, end]."""
        m, f = self._births(group, kind)
        sel = (self.times > start) & (self.times <= end + 1e-9)
        return float(sex_ratio(m[sel].sum(), f[sel].sum()))

    def sr0(self, start: float = -np.inf, end: float = np.inf, group: Optional[int] = None) -> float:
        """Conception SR pooled over record intervals ending in (start, end]."""
        pm, pf = self.series["conc_pm"], self.series["conc_pf"]
        if group is None:
            pm, pf = pm.sum(axis=1), pf.sum(axis=1)
        else:
            pm, pf = pm[:, group], pf[:, group]
        sel = (self.times > start) & (self.times <= end + 1e-9)
        return float(sex_ratio(pm[sel].sum(), pf[sel].sum()))

    # -- life table -------------------------------------------------------
    def period_table(self) -> CohortTable:
        return life_table(self.life, self.sr0_window[0], self.sr0_window[1])

    def parity_age(self) -> float:
        tab = self.period_table()
        try:
            return parity_age_numbers(tab)
        except NoParityCrossing as exc:
            # an unobserved stratum cut the table short; that says nothing about older ages
            if exc.cause == "never_crosses" and tab.ages[-1] < self.life.at_risk.shape[1] * self.life.dt - 1e-9:
                raise NoParityCrossing("truncated") from None
            raise

    def quality_parity_age(self) -> float:
        tab = self.period_table()
        return parity_age_quality(tab.q_ages, tab.qbar_m, tab.qbar_f)

    # -- birth order ------------------------------------------------------
    def sr_by_order(self, kind: str = "expected") -> np.ndarray:
        """SR[i] for i = 1..max_order (index 0 is SR[1])."""
        tab = self.order_expected if kind == "expected" else self.order_realised
        return sex_ratio(tab[1:, 1], tab[1:, 0])

    def profiles_sr(self) -> np.ndarray:
        return sex_ratio(self.profiles_m, self.profiles_f)

    def renewal_rate(self) -> float:
        """Births per year after the initial record."""
        span = self.times[-1] - self.times[0]
        total = self.series["births_m"][1:].sum() + self.series["births_f"][1:].sum()
        return float(total / span) if span > 0 else 0.0


def life_table(life: LifeTally, pm: float, pf: float) -> CohortTable:
    """Synthetic-cohort table from step-resolution tallies.

    Per stratum, survival over each step is ``1 - deaths / at_risk``;
    strata are recombined with the natal weights, which removes the
    sampling noise of who happened to be born into which stratum.  The
    table stops at the first age where any stratum has no one at risk.
    """
    ar, de, qs = life.at_risk, life.deaths, life.q_sum
    with np.errstate(divide="ignore", invalid="ignore"):
        surv = np.where(ar > 0, 1.0 - de / ar, np.nan)
        qbar_cell = np.where(ar > 0, qs / ar, np.nan)
    # usable ages: every stratum observed for both sexes
    ok = np.all(ar > 0, axis=(0, 2))
    n = int(np.argmin(ok)) if not ok.all() else len(ok)
    out_l, out_q = [], []
    for s in (1, 0):
        w = life.weights[s]
        l_k = np.vstack([np.ones(surv.shape[2]), np.cumprod(surv[s, :n], axis=0)])
        l = l_k @ w
        with np.errstate(divide="ignore", invalid="ignore"):
            qb = (l_k[:n] * qbar_cell[s, :n]) @ w / l[:n]
        out_l.append(l)
        out_q.append(qb)
    ages = np.arange(n + 1) * life.dt
    sr0 = float(sex_ratio(pm, pf))
    return CohortTable(ages, out_l[0], out_l[1], sr0, ages[:n], out_q[0], out_q[1])


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def _as_scenario(cfg: Optional[SimConfig], scenario: Optional[Scenario]) -> Scenario:
    if scenario is None:
        if cfg is None:
            raise ConfigError("run needs a config or a scenario")
        return Scenario(name="custom", config=validate(cfg))
    if cfg is not None:
        return scenario.with_config(cfg)
    validate(scenario.config)
    return scenario


class Simulation:
    """One replicate: owns its state, environment and random streams."""

    def __init__(self, scenario: Scenario, seed: int):
        if scenario.mode == "tracking":
            raise ConfigError("tracking scenarios run through sexratio.tracking")
        self.scenario = scenario
        self.cfg = cfg = validate(scenario.config)
        self.seed = seed
        self.rng = spawn_streams(seed)
        self.dt = dt = cfg.dt
        self.n_gest = cfg.gestation_steps
        self.n_max = int(round(cfg.max_age / dt))
        self.k0 = -int(round(cfg.burn_in / dt))
        self.k_end = int(round(cfg.horizon / dt))
        self.rec_steps = max(1, int(round(cfg.record_interval / dt)))
        self.n_groups = len(cfg.population.group_fractions) + 1
        self.max_order = cfg.max_birth_order
        self.genetic_only = cfg.quality.weights[0] == 1.0
        hp = cfg.hazard
        self.gamma = np.array([hp.gamma_f, hp.gamma_m])
        self.kappa = np.array([hp.kappa_f, hp.kappa_m])
        self.base = np.vstack([
            baseline_by_step(hp, Sex.FEMALE, self.n_max, dt, self.n_gest),
            baseline_by_step(hp, Sex.MALE, self.n_max, dt, self.n_gest),
        ])
        # quadrature nodes of natal quality, for expected fetal survival
        self.nodes = [natal_strata(cfg.natal, Sex(s), 32, 4) for s in (0, 1)]
        fetal_ages = np.arange(self.n_gest) * dt
        self.node_qpow = np.stack([
            quality_array(self.nodes[s][0][None, :], fetal_ages[:, None], cfg.quality) ** self.kappa[s] for s in (0, 1)
        ], axis=1)  # (n_gest, 2, K)
        self.cum = np.zeros((self.n_gest, 2, self.node_qpow.shape[2]))
        self.pend = np.zeros((self.n_gest, self.n_groups, self.max_order + 1, 2))
        self.beta_ab = [natal_beta(cfg.natal, Sex(s)) for s in (0, 1)]

        self.env = EnvironmentState.start(scenario.harshness, scenario.nutrition, scenario.drift, cfg.sensor.lag, t=self.k0 * dt)
        self.events: list[Event] = list(scenario.events)
        self.next_event = 0
        self.draft: Optional[Event] = None
        self.away: dict[int, Event] = {}
        self.comfort_since: Optional[float] = None

        S = LIFE_STRATA
        shape = (2, self.n_max + 1, S)
        w = np.full(S, 1.0 / S)
        self.life = LifeTally(np.zeros(shape), np.zeros(shape), np.zeros(shape), dt, (w, w))
        self.order_exp = np.zeros((self.max_order + 1, 2))
        self.order_real = np.zeros((self.max_order + 1, 2))
        self.win_pm = 0.0
        self.win_pf = 0.0
        self.steps_checked = 0
        self._reset_interval()
        self.records: list[dict] = []
        self.state = self._initial_state()

    # -- setup ------------------------------------------------------------
    def _stratum(self, q: np.ndarray, sex: np.ndarray) -> np.ndarray:
        a = np.where(sex == 1, self.beta_ab[1][0], self.beta_ab[0][0])
        b = np.where(sex == 1, self.beta_ab[1][1], self.beta_ab[0][1])
        u = sps.beta.cdf(q, a, b)
        return np.clip((u * LIFE_STRATA).astype(np.int16), 0, LIFE_STRATA - 1)

    def _group_of(self, u: np.ndarray) -> np.ndarray:
        fr = self.cfg.population.group_fractions
        if not fr:
            return np.zeros(len(u), np.int8)
        g = np.searchsorted(np.cumsum(fr), u, side="right")
        # u beyond the last fraction falls in the general group 0
        return np.where(g >= len(fr), 0, g + 1).astype(np.int8)

    def _initial_state(self) -> PopulationState:
        cfg = self.cfg
        st = PopulationState.empty(self.k0, self.dt)
        n = cfg.population.size
        if cfg.birth_stream.enabled or cfg.population.init == "empty" or n == 0:
            return st
        rng = self.rng["init"]
        cells = 256
        H0 = self.scenario.harshness.at(self.k0 * self.dt)
        nut0 = self.scenario.nutrition.at(self.k0 * self.dt)
        mult = maternal_multiplier(nut0, cfg.maternal)
        p0 = float(preconception_sr_array(cfg.preconception.q_ref, H0, cfg.preconception))
        ages = np.arange(self.n_max) * self.dt
        tables = []
        qcells = []
        for s in (0, 1):
            a, b = self.beta_ab[s]
            qc = np.clip(sps.beta.ppf((np.arange(cells) + 0.5) / cells, a, b), 1e-6, 1.0)
            qa = quality_array(qc[None, :], ages[:, None], cfg.quality)
            h = self.base[s][:, None] * (1.0 + H0) ** self.gamma[s] / qa ** self.kappa[s]
            if s == 1:
                h[: self.n_gest] *= mult
            l = np.exp(-np.vstack([np.zeros(cells), np.cumsum(h * self.dt, axis=0)[:-1]]))
            tables.append(l * (p0 if s == 1 else 1.0 - p0))
            qcells.append(qc)
        prob = np.stack(tables).ravel()
        idx = rng.choice(prob.size, size=n, p=prob / prob.sum())
        sex, rem = np.divmod(idx, self.n_max * cells)
        age, cell = np.divmod(rem, cells)
        a = np.where(sex == 1, self.beta_ab[1][0], self.beta_ab[0][0])
        b = np.where(sex == 1, self.beta_ab[1][1], self.beta_ab[0][1])
        q = np.clip(sps.beta.ppf((cell + rng.random(n)) / cells, a, b), 1e-6, 1.0)
        order = np.lexsort((cell, age, sex))  # deterministic layout
        sex, age, q = sex[order], age[order], q[order]
        lo_m = cfg.pairing.male_window[0]
        group = self._group_of(rng.random(n))
        cols = dict(
            sex=sex.astype(np.int8),
            cstep=self.k0 - age,
            q=q,
            stratum=self._stratum(q, sex),
            group=group,
            fgroup=group,
            complete=~((sex == 1) & (age * self.dt >= lo_m)),
        )
        st.append(**cols)
        st.initial_count = n
        # give the initial fetuses mothers
        fetal = np.nonzero(age < self.n_gest)[0]
        lo, hi = cfg.pairing.female_window
        women = np.nonzero((sex == 0) & (age * self.dt >= lo) & (age * self.dt < hi))[0]
        if len(fetal) and len(women):
            pick = rng.choice(women, size=len(fetal), replace=len(fetal) > len(women))
            st.arrays["mother"][fetal] = st.arrays["id"][pick]
            st.arrays["busy_until"][pick] = self.k0 + (self.n_gest - age[fetal])
        return st

    # -- helpers ----------------------------------------------------------
    def _reset_interval(self) -> None:
        G = self.n_groups
        self.iv = {
            "births_m": np.zeros(G), "births_f": np.zeros(G),
            "exp_m": np.zeros(G), "exp_f": np.zeros(G),
            "conc_pm": np.zeros(G), "conc_pf": np.zeros(G),
            "conceptions": 0.0, "deaths": 0.0, "fetal_deaths": 0.0,
        }

    def _quality(self, st: PopulationState, ages: np.ndarray) -> np.ndarray:
        if self.genetic_only:
            return st.q
        return quality_array(st.q, ages * self.dt, self.cfg.quality)

    def _away_mask(self, st: PopulationState, t: float) -> np.ndarray:
        away = np.zeros(st.size, bool)
        for g, ev in self.away.items():
            phase = ((t - ev.t) % ev.period) / ev.period
            if phase < ev.duty:
                away |= (st.group == g) & (st.sex == 1)
        return away

    def _apply_events(self, t: float, st: PopulationState, q_now: np.ndarray, ages: np.ndarray) -> None:
        while self.next_event < len(self.events) and self.events[self.next_event].t <= t + 1e-9:
            ev = self.events[self.next_event]
            self.next_event += 1
            if ev.kind == "draft_on":
                self.draft = ev
                st.arrays["screened"][:] = False
                self._screen(st, q_now, ages, new_only=False)
            elif ev.kind == "draft_off":
                self.draft = None
                st.arrays["drafted"][:] = False
            elif ev.kind == "away_on":
                self.away[ev.group] = ev
            elif ev.kind == "away_off":
                self.away.pop(ev.group, None)

    def _screen(self, st: PopulationState, q_now: np.ndarray, ages: np.ndarray, new_only: bool) -> None:
        lo, hi = self.cfg.pairing.male_window
        yrs = ages * self.dt
        pool = (st.sex == 1) & (yrs >= lo) & (yrs < hi)
        if new_only:
            pool &= ~st.screened
        idx = np.nonzero(pool)[0]
        if len(idx) == 0:
            return
        ev = self.draft
        cap = int(math.floor(ev.fraction * len(idx) + (self.rng["pairing"].random() if new_only else 1e-9)))
        mask = draft_mask(q_now[idx], ev.q_threshold, ev.fraction, cap=cap)
        st.arrays["drafted"][idx[mask]] = True
        st.arrays["screened"][idx] = True

    # -- the step ---------------------------------------------------------
    def step(self) -> None:
        st = self.state
        cfg = self.cfg
        dt = self.dt
        k = st.step
        t = k * dt
        # (1) environment at the start of the interval
        self.env.advance_to(t)
        H = self.env.harshness
        mult = maternal_multiplier(self.env.nutrition, cfg.maternal)
        hfac = (1.0 + H) ** self.gamma
        ages = st.ages()
        sex = st.sex
        male = sex == 1
        fetal = ages < self.n_gest
        q_now = self._quality(st, ages)
        in_window = t >= 0.0

        # (2) + (4) deaths; fetal and post-natal hazards share one draw
        age_idx = np.minimum(ages, self.n_max - 1)
        h = self.base[sex, age_idx] * hfac[sex] / q_now ** self.kappa[sex]
        h[fetal & male] *= mult
        die = self.rng["deaths"].random(st.size) < -np.expm1(-h * dt)
        die |= ages >= self.n_max - 1
        if in_window:
            self._tally_life(st, ages, die, q_now)

        # expected fetal survival of each conception cohort
        hn = (cfg.hazard.fetal_f * hfac[0], cfg.hazard.fetal_m * hfac[1] * mult)
        self.cum += np.stack([hn[0] / self.node_qpow[:, 0], hn[1] / self.node_qpow[:, 1]], axis=1) * dt
        surv = np.array([np.exp(-self.cum[-1, s]) @ self.nodes[s][1] for s in (0, 1)])
        matured = self.pend[-1]  # (groups, orders, sex)
        exp_f = matured[:, :, 0] * surv[0]
        exp_m = matured[:, :, 1] * surv[1]

        # (3) births at the end of this step
        born = (~die) & (ages == self.n_gest - 1)
        t_next = (k + 1) * dt
        if t_next >= 0.0:
            bm = born & male
            bf = born & ~male
            self.iv["births_m"] += np.bincount(st.fgroup[bm], minlength=self.n_groups)
            self.iv["births_f"] += np.bincount(st.fgroup[bf], minlength=self.n_groups)
            self.iv["exp_m"] += exp_m.sum(axis=1)
            self.iv["exp_f"] += exp_f.sum(axis=1)
            self.order_exp[:, 1] += exp_m.sum(axis=0)
            self.order_exp[:, 0] += exp_f.sum(axis=0)
            ok = born & st.order_ok
            o = np.minimum(st.order[ok], self.max_order)
            self.order_real[:, 1] += np.bincount(o[male[ok]], minlength=self.max_order + 1)
            self.order_real[:, 0] += np.bincount(o[~male[ok]], minlength=self.max_order + 1)
        self.cum[1:] = self.cum[:-1].copy()
        self.cum[0] = 0.0
        self.pend[1:] = self.pend[:-1].copy()
        self.pend[0] = 0.0

        # bookkeeping for the dead
        n_dead = int(die.sum())
        if n_dead:
            dead_ids = st.id[die]
            fd = die & fetal
            if fd.any():
                midx = st.index_of(st.mother[fd])
                midx = midx[midx >= 0]
                st.arrays["busy_until"][midx] = k + 1
            widowed = (st.partner >= 0) & np.isin(st.partner, dead_ids)
            st.arrays["partner"][widowed] = NO_ID
            self.iv["deaths"] += n_dead
            self.iv["fetal_deaths"] += int(fd.sum())
            keep = ~die
            st.keep(keep)
            st.total_deaths += n_dead
            ages, q_now = ages[keep], q_now[keep]

        # (5) events
        self._apply_events(t, st, q_now, ages)
        if self.draft is not None:
            self._screen(st, q_now, ages, new_only=True)

        # (6) unions and conception
        self._reproduce(st, ages, q_now, t)

        st.step = k + 1
        if not st.identity_holds():
            raise AccountingError(f"accounting identity broken at step {st.step}")
        self.steps_checked += 1
        alive = np.sum(st.ages() >= self.n_gest) if st.size else 0
        # an exogenous birth stream starts empty and cannot die out
        if alive == 0 and not st.extinct and not self.cfg.birth_stream.enabled:
            st.extinct = True
            st.extinction_time = st.t
        # (7) records
        if st.step >= 0 and st.step % self.rec_steps == 0:
            self._record()

    def _tally_life(self, st, ages, die, q_now) -> None:
        n_age = self.n_max + 1
        cell = (st.sex.astype(np.int64) * n_age + np.minimum(ages, self.n_max)) * LIFE_STRATA + st.stratum
        size = 2 * n_age * LIFE_STRATA
        shape = self.life.at_risk.shape
        self.life.at_risk += np.bincount(cell, minlength=size).reshape(shape)
        self.life.deaths += np.bincount(cell[die], minlength=size).reshape(shape)
        self.life.q_sum += np.bincount(cell, weights=q_now, minlength=size).reshape(shape)

    def _reproduce(self, st: PopulationState, ages: np.ndarray, q_now: np.ndarray, t: float) -> None:
        cfg = self.cfg
        pr = cfg.pairing
        dt = self.dt
        k = st.step
        n_alive = int(np.sum(ages >= self.n_gest))
        reg = min(1.0, (cfg.capacity / n_alive) ** DENSITY_EXPONENT) if n_alive else 1.0
        bs = cfg.birth_stream
        if bs.enabled:
            self._conceive_stream(st, bs.per_step, bs.p_male)
            return

        yrs = ages * dt
        male = st.sex == 1
        away = self._away_mask(st, t)
        fem_win = (~male) & (yrs >= pr.female_window[0]) & (yrs < pr.female_window[1])
        mal_win = male & (yrs >= pr.male_window[0]) & (yrs < pr.male_window[1])

        # unions end when either partner leaves the window
        partner = st.partner
        has = partner >= 0
        leaving = has & ~(fem_win | mal_win)
        if leaving.any():
            other = st.index_of(partner[leaving])
            st.arrays["partner"][other[other >= 0]] = NO_ID
            st.arrays["partner"][leaving] = NO_ID

        # pairing of singles
        single = st.partner < 0
        pool_m = np.nonzero(mal_win & single & ~st.drafted & ~away)[0]
        pool_f = np.nonzero(fem_win & single)[0]
        if len(pool_m) and len(pool_f):
            mi, fi = pair_indices(yrs[pool_m], q_now[pool_m], yrs[pool_f], q_now[pool_f], pr, self.rng["pairing"])
            a, b = pool_m[mi], pool_f[fi]
            st.arrays["partner"][a] = st.id[b]
            st.arrays["partner"][b] = st.id[a]
            st.arrays["abstinence"][a] = 0.0

        # conception within unions
        wives = np.nonzero((~male) & (st.partner >= 0))[0]
        husbands = st.index_of(st.partner[wives])
        rng = self.rng["conception"]
        if len(wives):
            can = (st.busy_until[wives] <= k) & ~away[husbands]
            rate = pr.conception_rate * reg * np.where(st.drafted[husbands], self.draft.availability if self.draft else 1.0, 1.0)
            if pr.paternity == "quality":
                rate = rate * (q_now[husbands] / cfg.preconception.q_ref) ** pr.paternity_exponent
            hit = can & (rng.random(len(wives)) < -np.expm1(-rate * dt))
            mothers, fathers = wives[hit], husbands[hit]
        else:
            mothers = fathers = np.empty(0, np.int64)

        comfort = self._comfort(t)
        if len(fathers):
            h_perc = np.maximum(0.0, self.env.sensed_harshness() + abstinence_load(st.abstinence[fathers], cfg.sensor))
            p = preconception_sr_array(q_now[fathers], h_perc, cfg.preconception, comfort=np.full(len(fathers), comfort))
            self._add_conceptions(st, p, mothers, fathers, q_now)

        # parthenogenesis in the comfortable limit (plant mode only)
        if comfort and self.scenario.mode == "plant":
            n0 = len(fem_win)  # conceptions above appended fetuses past this point
            solo = np.nonzero(fem_win & (st.partner[:n0] < 0) & (st.busy_until[:n0] <= k))[0]
            hit = solo[rng.random(len(solo)) < -np.expm1(-pr.conception_rate * reg * dt)]
            if len(hit):
                self._add_conceptions(st, np.full(len(hit), cfg.preconception.p_floor), hit, None, q_now)

        # abstinence clocks
        men = np.nonzero(male)[0]
        if len(men):
            accum = (st.partner[men] < 0) | st.drafted[men] | away[men]
            clk = st.abstinence[men]
            st.arrays["abstinence"][men] = np.where(accum, clk + dt, np.maximum(0.0, clk - cfg.sensor.recovery_rate * dt))

    def _comfort(self, t: float) -> bool:
        p = self.cfg.preconception
        if not p.comfort_collapse:
            return False
        if self.env.sensed_harshness() < p.h_comf:
            if self.comfort_since is None:
                self.comfort_since = t
            return t - self.comfort_since >= p.comfort_duration - 1e-9
        self.comfort_since = None
        return False

    def _add_conceptions(self, st, p, mothers, fathers, q_now) -> None:
        cfg = self.cfg
        rng = self.rng["conception"]
        n = len(p)
        sex = (rng.random(n) < p).astype(np.int8)
        parent_q = None
        if fathers is not None and cfg.natal.heritability > 0:
            parent_q = 0.5 * (q_now[fathers] + q_now[mothers])
        q = sample_natal_q(cfg.natal, sex, rng, parent_q)
        group = self._group_of(rng.random(n))
        k = st.step
        if fathers is not None:
            order = st.conceptions[fathers] + 1
            order_ok = st.complete[fathers]
            fgroup = st.group[fathers]
            father_ids = st.id[fathers]
            st.arrays["conceptions"][fathers] = order
            st.arrays["abstinence"][fathers] = 0.0
        else:
            order = np.ones(n, np.int32)
            order_ok = np.zeros(n, bool)
            fgroup = np.zeros(n, np.int8)
            father_ids = np.full(n, NO_ID)
        mother_ids = st.id[mothers]
        st.arrays["busy_until"][mothers] = k + 1 + self.n_gest
        self._book(p, fgroup, order, order_ok)
        st.append(
            sex=sex, cstep=np.full(n, k + 1), q=q, stratum=self._stratum(q, sex), group=group, fgroup=fgroup,
            order=order, order_ok=order_ok, father=father_ids, mother=mother_ids,
            complete=np.ones(n, bool),
        )
        st.total_conceived += n

    def _book(self, p, fgroup, order, order_ok) -> None:
        o = np.where(order_ok, np.minimum(order, self.max_order), 0)
        np.add.at(self.pend[0], (fgroup, o, 1), p)
        np.add.at(self.pend[0], (fgroup, o, 0), 1.0 - p)
        if (self.state.step + 1) * self.dt >= 0.0:
            self.iv["conc_pm"] += np.bincount(fgroup, weights=p, minlength=self.n_groups)
            self.iv["conc_pf"] += np.bincount(fgroup, weights=1.0 - p, minlength=self.n_groups)
            self.iv["conceptions"] += len(p)
            self.win_pm += float(p.sum())
            self.win_pf += float((1.0 - p).sum())

    def _conceive_stream(self, st, n: int, p_male: float) -> None:
        if n <= 0:
            return
        cfg = self.cfg
        rng = self.rng["conception"]
        p = np.full(n, p_male)
        sex = (rng.random(n) < p).astype(np.int8)
        q = sample_natal_q(cfg.natal, sex, rng)
        zeros = np.zeros(n, np.int8)
        self._book(p, zeros, np.ones(n, np.int32), np.ones(n, bool))
        st.append(sex=sex, cstep=np.full(n, st.step + 1), q=q, stratum=self._stratum(q, sex), order_ok=np.ones(n, bool))
        st.total_conceived += n

    # -- recording --------------------------------------------------------
    def _record(self) -> None:
        st = self.state
        ages = st.ages()
        edges = np.asarray(self.cfg.profile_edges)
        yrs = ages * self.dt
        idx = np.searchsorted(edges, yrs, side="right") - 1
        nb = len(edges) - 1
        ok = (idx >= 0) & (idx < nb)
        male = st.sex == 1
        alive = ages >= self.n_gest
        q = self._quality(st, ages)
        rec = {
            "t": st.t,
            "profile_m": np.bincount(idx[ok & male], minlength=nb),
            "profile_f": np.bincount(idx[ok & ~male], minlength=nb),
            "alive_m": int(np.sum(alive & male)),
            "alive_f": int(np.sum(alive & ~male)),
            "in_utero_m": int(np.sum(~alive & male)),
            "in_utero_f": int(np.sum(~alive & ~male)),
            "qbar_m": float(q[alive & male].mean()) if np.any(alive & male) else np.nan,
            "qbar_f": float(q[alive & ~male].mean()) if np.any(alive & ~male) else np.nan,
            "drafted": int(st.drafted.sum()),
            "extinct": bool(st.extinct),
        }
        rec.update({k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.iv.items()})
        self.records.append(rec)
        self._reset_interval()

    def run(self) -> Trajectory:
        if self.state.step == 0:
            self._record()
        while self.state.step < self.k_end and not self.state.extinct:
            self.step()
        return self.trajectory()

    def trajectory(self) -> Trajectory:
        recs = self.records
        times = np.array([r["t"] for r in recs])
        keys = [k for k in recs[0] if k not in ("t", "profile_m", "profile_f")] if recs else []
        series = {k: np.array([r[k] for r in recs]) for k in keys}
        st = self.state
        return Trajectory(
            times=times,
            series=series,
            profile_edges=np.asarray(self.cfg.profile_edges, float),
            profiles_m=np.array([r["profile_m"] for r in recs]),
            profiles_f=np.array([r["profile_f"] for r in recs]),
            life=self.life,
            order_expected=self.order_exp.copy(),
            order_realised=self.order_real.copy(),
            sr0_window=(self.win_pm, self.win_pf),
            extinct=st.extinct,
            extinction_time=st.extinction_time,
            steps_checked=self.steps_checked,
            seed=self.seed,
            gestation_steps=self.n_gest,
            smoothing_width=self.cfg.smoothing_width,
        )


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def step(sim: Simulation) -> PopulationState:
    """Advance ``sim`` by one time step and return its state."""
    sim.step()
    return sim.state


def run(cfg: Optional[SimConfig] = None, scenario: Optional[Scenario] = None, seed: Optional[int] = None) -> Trajectory:
    """Run one replicate from ``-burn_in`` to ``horizon``.

    Identical (config, scenario, seed) give identical trajectories.
    """
    if seed is None:
        raise ConfigError("a seed is required; runs are never seeded implicitly")
    return Simulation(_as_scenario(cfg, scenario), int(seed)).run()


@dataclass(frozen=True)
class ReplicateSummary:
    """Per-statistic mean and 95% CI across replicates (normal approximation)."""

    n: int
    stats: dict  # name -> (mean, lo, hi)
    values: dict  # name -> per-replicate values
    trajectories: list = field(repr=False, compare=False, default_factory=list)

    def mean(self, name: str) -> float:
        return self.stats[name][0]

    def ci(self, name: str) -> tuple[float, float]:
        return self.stats[name][1], self.stats[name][2]


def summary_values(tr: Trajectory) -> dict:
    """Headline statistics of one trajectory (NaN where undefined)."""
    out = {"sr_tb": tr.sr_tb(start=0.0), "sr0": tr.sr0(start=0.0), "renewal_rate": tr.renewal_rate()}
    try:
        out["t_p"] = tr.parity_age()
    except NoParityCrossing:
        out["t_p"] = np.nan
    try:
        out["t_pQ"] = tr.quality_parity_age()
    except NoQualityParity:
        out["t_pQ"] = np.nan
    sro = tr.sr_by_order()
    for i in range(min(3, len(sro))):
        out[f"sr_order_{i + 1}"] = float(sro[i])
    out["extinct"] = float(tr.extinct)
    return out


def run_replicates(cfg: Optional[SimConfig], scenario: Optional[Scenario], seeds: Sequence[int], keep: bool = False) -> ReplicateSummary:
    """Independent replicates, one per seed, aggregated."""
    if len(seeds) < 2:
        raise ConfigError("run_replicates needs at least two seeds")
    sc = _as_scenario(cfg, scenario)
    trajs = [Simulation(sc, int(s)).run() for s in seeds]
    vals = [summary_values(tr) for tr in trajs]
    names = list(vals[0])
    values = {k: np.array([v[k] for v in vals]) for k in names}
    stats = {k: mean_ci(values[k]) for k in names}
    return ReplicateSummary(len(seeds), stats, values, trajs if keep else [])
