"""Generative mechanisms: the father's sex-ratio setting, the maternal
filter, union formation, conception, and the wartime draft."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from sexratio.environment import EnvironmentState, perceived_harshness
from sexratio.model import DomainError, Individual, LifeState, Sex, quality, sample_natal_q
from sexratio.params import MaternalFilterParams, PairingParams, PreconceptionParams, SimConfig


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def collapse_gate(h, params: PreconceptionParams):
    """Logistic gate that closes once perceived harshness passes ``h_cat``."""
    z = np.clip(params.s_cat * (np.asarray(h, float) - params.h_cat), -700, 700)
    return 1.0 / (1.0 + np.exp(z))


def base_logit(params: PreconceptionParams) -> float:
    """Intercept chosen so the output equals ``p_base`` at (q_ref, h_ref)."""
    g = float(collapse_gate(params.h_ref, params))
    target = params.p_floor + (params.p_base - params.p_floor) / g
    return _logit(target) - params.alpha_h * min(params.h_ref, params.h_cat)


def preconception_sr_array(q_father, h_perceived, params: PreconceptionParams, comfort=None) -> np.ndarray:
    """Vectorised :func:`preconception_sr`.

    ``comfort`` is an optional boolean mask of fathers in the sustained
    comfortable regime; they are pushed to ``p_floor`` when
    ``comfort_collapse`` is on.
    """
    q = np.asarray(q_father, float)
    h = np.asarray(h_perceived, float)
    core = base_logit(params) + params.alpha_q * (params.q_ref - q) + params.alpha_h * np.minimum(h, params.h_cat)
    sig = 1.0 / (1.0 + np.exp(-core))
    p = params.p_floor + collapse_gate(h, params) * (sig - params.p_floor)
    if comfort is not None and params.comfort_collapse:
        p = np.where(comfort, params.p_floor, p)
    return p


def preconception_sr(q_father: float, h_perceived: float, params: PreconceptionParams, comfortable: bool = False) -> float:
    """Probability that a conception by this father is male.

    Lower quality and moderate harshness raise it; past the catastrophic
    threshold it collapses to ``p_floor``.
    """
    if not 0.0 < q_father <= 1.0:
        raise DomainError(f"father quality must lie in (0, 1], got {q_father}")
    if not h_perceived >= 0.0:
        raise DomainError(f"perceived harshness must be >= 0, got {h_perceived}")
    return float(preconception_sr_array(q_father, h_perceived, params, comfort=comfortable))


def maternal_multiplier(nutrition, params: MaternalFilterParams):
    """Male fetal hazard multiplier: 1 when fed, rising to ``m_max`` at starvation.

    Works on scalars and arrays.
    """
    n = np.asarray(nutrition, float)
    if np.any((n <= 0) | (n > 1)):
        raise DomainError(f"nutrition must lie in (0, 1], got {nutrition}")
    deficit = np.clip((params.n_crit - n) / params.n_crit, 0.0, 1.0)
    out = 1.0 + (params.m_max - 1.0) * deficit**params.exponent
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# pairing
# ---------------------------------------------------------------------------


def _monotone_match(small_keys: np.ndarray, large_keys: np.ndarray) -> np.ndarray:
    """Order-preserving assignment of each (sorted) small key to a distinct
    (sorted) large key, steering each one toward its nearest neighbour."""
    n, m = len(small_keys), len(large_keys)
    pos = np.searchsorted(large_keys, small_keys)
    left = np.clip(pos - 1, 0, m - 1)
    right = np.clip(pos, 0, m - 1)
    nearest = np.where(
        np.abs(large_keys[left] - small_keys) <= np.abs(large_keys[right] - small_keys), left, right
    )
    i = np.arange(n)
    slack = np.maximum.accumulate(np.clip(nearest - i, 0, m - n))
    return i + slack


def pair_indices(
    age_m: np.ndarray,
    q_m: np.ndarray,
    age_f: np.ndarray,
    q_f: np.ndarray,
    params: PairingParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy rank matching on noisy age/quality keys.

    The male key is shifted by the mean age and quality offsets, so when the
    larger pool has room the chosen partners sit ``delta_age`` years and
    ``delta_q`` quality units above the women they are matched to.  Returns
    index arrays into the male and female pools; every member of the smaller
    pool is paired exactly once.
    """
    nm, nf = len(age_m), len(age_f)
    if nm == 0 or nf == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    key_m = np.asarray(age_m) - params.delta_age + params.q_weight * (np.asarray(q_m) - params.delta_q)
    key_f = np.asarray(age_f) + params.q_weight * np.asarray(q_f)
    if params.noise > 0:
        key_m = key_m + params.noise * rng.standard_normal(nm)
        key_f = key_f + params.noise * rng.standard_normal(nf)
    om = np.argsort(key_m, kind="stable")
    of = np.argsort(key_f, kind="stable")
    if nf <= nm:
        picks = _monotone_match(key_f[of], key_m[om])
        return om[picks], of
    picks = _monotone_match(key_m[om], key_f[of])
    return om, of[picks]


def pair(
    eligible_males: Sequence[Individual],
    eligible_females: Sequence[Individual],
    params: PairingParams,
    rng: np.random.Generator,
    t: float,
) -> list[tuple[Individual, Individual]]:
    """Object-level wrapper around :func:`pair_indices` (ages taken at ``t``)."""
    for ind in list(eligible_males) + list(eligible_females):
        if ind.state is not LifeState.ALIVE:
            raise DomainError("only living individuals can pair")
    age_m = np.array([t - m.t_conceived for m in eligible_males])
    age_f = np.array([t - f.t_conceived for f in eligible_females])
    q_m = np.array([m.q_genetic for m in eligible_males])
    q_f = np.array([f.q_genetic for f in eligible_females])
    mi, fi = pair_indices(age_m, q_m, age_f, q_f, params, rng)
    return [(eligible_males[i], eligible_females[j]) for i, j in zip(mi, fi)]


# ---------------------------------------------------------------------------
# conception
# ---------------------------------------------------------------------------


@dataclass
class Union:
    """A couple plus the father's running reproductive state."""

    father: Individual
    mother: Individual
    father_conceptions: int = 0
    abstinence: float = 0.0
    rate_factor: float = 1.0


@dataclass
class _Ids:
    next_id: int = 0

    def take(self) -> int:
        self.next_id += 1
        return self.next_id - 1


_default_ids = _Ids(1_000_000_000)


def conceive(
    union: Union,
    env: EnvironmentState,
    cfg: SimConfig,
    rng: np.random.Generator,
    ids: Optional[_Ids] = None,
    p_male: Optional[float] = None,
) -> Optional[Individual]:
    """One time step of conception chance for a couple.

    Conception happens with probability ``1 - exp(-rate * dt)``.  The sex is
    drawn from the father's preconception setting (or ``p_male`` if forced);
    the father's conception count increments and his abstinence clock
    resets.
    """
    ids = ids or _default_ids
    rate = cfg.pairing.conception_rate * union.rate_factor
    if rate <= 0 or rng.random() >= 1.0 - math.exp(-rate * cfg.dt):
        return None
    father = union.father
    if p_male is None:
        qf = quality(father, env.t, cfg.quality)
        h = perceived_harshness(father, env, union.abstinence, cfg.sensor)
        p_male = preconception_sr(qf, h, cfg.preconception)
    sex = Sex.MALE if rng.random() < p_male else Sex.FEMALE
    q = float(sample_natal_q(cfg.natal, [sex], rng)[0])
    union.father_conceptions += 1
    union.abstinence = 0.0
    return Individual(
        id=ids.take(),
        sex=sex,
        t_conceived=env.t,
        q_genetic=q,
        father_birth_order=union.father_conceptions,
        state=LifeState.IN_UTERO,
        father_id=father.id,
        mother_id=union.mother.id,
    )


# ---------------------------------------------------------------------------
# draft
# ---------------------------------------------------------------------------


def draft_mask(q: np.ndarray, q_threshold: float, fraction: float, cap: Optional[int] = None) -> np.ndarray:
    """Boolean mask of drafted men: quality >= threshold, best first,
    at most ``fraction`` of the pool (or ``cap`` men when given)."""
    q = np.asarray(q, float)
    n = len(q)
    if cap is None:
        cap = int(math.floor(fraction * n + 1e-9))
    fit = np.nonzero(q >= q_threshold)[0]
    if len(fit) > cap:
        order = np.argsort(-q[fit], kind="stable")
        fit = fit[order[:cap]]
    mask = np.zeros(n, dtype=bool)
    mask[fit] = True
    return mask


def draft_filter(males: Sequence[Individual], q_threshold: float, draft_fraction: float, t: float = 0.0, cfg: Optional[SimConfig] = None):
    """Split men into (drafted, exempt) lists by the medical commission rule."""
    qcfg = (cfg or SimConfig()).quality
    q = np.array([quality(m, t, qcfg) for m in males]) if males else np.empty(0)
    mask = draft_mask(q, q_threshold, draft_fraction)
    drafted = [m for m, d in zip(males, mask) if d]
    exempt = [m for m, d in zip(males, mask) if not d]
    return drafted, exempt
