import dataclasses

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from sexratio.demography import cohort_solve
from sexratio.environment import DriftSpec, EnvironmentState, HarshnessSchedule, NutritionSchedule
from sexratio.model import DomainError, Individual, LifeState, Sex
from sexratio.params import MaternalFilterParams, PairingParams, PreconceptionParams, SimConfig
from sexratio.reproduction import (
    Union,
    conceive,
    draft_filter,
    draft_mask,
    maternal_multiplier,
    pair,
    pair_indices,
    preconception_sr,
    preconception_sr_array,
)
from sexratio.scenarios import builtin

P = PreconceptionParams()


def person(i, sex, age, q=0.6, t=0.0):
    return Individual(id=i, sex=sex, t_conceived=t - age, q_genetic=q)


# -- preconception setting ------------------------------------------------------

def test_reference_point_gives_sr0_150():
    p = preconception_sr(P.q_ref, P.h_ref, P)
    assert p == pytest.approx(0.6, abs=1e-12)
    assert 100 * p / (1 - p) == pytest.approx(150.0)
    assert 120 <= 100 * p / (1 - p) <= 180


def test_catastrophe_collapses_to_floor():
    p = preconception_sr(P.q_ref, P.h_cat + 6 / P.s_cat, P)
    assert abs(p - P.p_floor) < 0.01
    assert 100 * p / (1 - p) < 2.5


def test_far_past_catastrophe_equals_floor():
    assert preconception_sr(0.5, 1e4, P) == pytest.approx(P.p_floor, abs=1e-6)


def test_comfort_collapse_when_flagged():
    params = dataclasses.replace(P, comfort_collapse=True, h_comf=0.1)
    assert preconception_sr(0.6, 0.05, params, comfortable=True) == P.p_floor
    # without the flag the caller's comfort state is ignored
    assert preconception_sr(0.6, 0.05, P, comfortable=True) > 0.5


def test_preconception_domain():
    with pytest.raises(DomainError):
        preconception_sr(0.0, 0.3, P)
    with pytest.raises(DomainError):
        preconception_sr(0.5, -0.1, P)


def test_decreasing_in_quality_on_grid():
    q = np.linspace(0.01, 1.0, 100)
    for h in np.linspace(0.0, P.h_cat - 0.01, 12):
        p = preconception_sr_array(q, h, P)
        assert np.all(np.diff(p) < 0)


@settings(max_examples=200)
@given(q1=st.floats(0.001, 1.0), q2=st.floats(0.001, 1.0), h=st.floats(0.0, P.h_cat - 1e-6))
def test_lower_quality_father_sets_higher_ratio(q1, q2, h):
    # strictness is only visible above float resolution
    assume(abs(q1 - q2) > 1e-9)
    lo, hi = sorted((q1, q2))
    assert preconception_sr(lo, h, P) > preconception_sr(hi, h, P)


@given(q=st.floats(0.01, 1.0))
def test_unimodal_in_harshness(q):
    rise = np.linspace(0.0, P.h_cat - 3 / P.s_cat, 200)
    assert np.all(np.diff(preconception_sr_array(q, rise, P)) >= 0)
    h = np.linspace(0.0, P.h_cat + 60, 2000)
    p = preconception_sr_array(q, h, P)
    peak = int(np.argmax(p))
    assert np.all(np.diff(p[: peak + 1]) >= 0)
    assert np.all(np.diff(p[peak:]) <= 1e-15)
    assert p[-1] < P.p_base


# -- maternal filter -----------------------------------------------------------------

def test_fed_mothers_no_excess():
    assert maternal_multiplier(1.0, MaternalFilterParams()) == 1.0


def test_multiplier_range_and_limit():
    m = MaternalFilterParams(n_crit=0.6, m_max=5.0)
    assert maternal_multiplier(1e-9, m) == pytest.approx(5.0, rel=1e-6)
    with pytest.raises(DomainError):
        maternal_multiplier(0.0, m)


@given(a=st.floats(1e-6, 1.0), b=st.floats(1e-6, 1.0), n_crit=st.floats(0.05, 0.95), m_max=st.floats(1.0, 20.0), e=st.floats(0.2, 4))
def test_multiplier_monotone_and_bounded(a, b, n_crit, m_max, e):
    m = MaternalFilterParams(n_crit=n_crit, m_max=m_max, exponent=e)
    lo, hi = sorted((a, b))
    vlo, vhi = maternal_multiplier(lo, m), maternal_multiplier(hi, m)
    assert 1.0 <= vhi <= vlo <= m_max + 1e-12
    if lo >= n_crit:
        assert vlo == 1.0


def test_multiplier_continuous_at_threshold():
    m = MaternalFilterParams(n_crit=0.6, m_max=8.0)
    assert maternal_multiplier(0.6 - 1e-9, m) == pytest.approx(1.0, abs=1e-6)


def test_famine_pushes_fetal_parity_below_gestation():
    # calibrated blockade maternal filter at the worst nutrition level
    sc = builtin("blockade")
    cfg = sc.config
    tab = cohort_solve(cfg, 100 * P.p_base / (1 - P.p_base), harshness=0.5, nutrition=0.3)
    assert tab.parity_age() < cfg.gestation


# -- pairing ----------------------------------------------------------------------

def test_one_couple():
    rng = np.random.default_rng(0)
    pairs = pair([person(1, Sex.MALE, 30)], [person(2, Sex.FEMALE, 28)], PairingParams(), rng, 0.0)
    assert [(m.id, f.id) for m, f in pairs] == [(1, 2)]


def test_no_men_no_pairs():
    assert pair([], [person(2, Sex.FEMALE, 28)], PairingParams(), np.random.default_rng(0), 0.0) == []


def test_pairing_needs_living():
    dead = dataclasses.replace(person(1, Sex.MALE, 30), state=LifeState.DEAD, t_death=0.0)
    with pytest.raises(DomainError):
        pair([dead], [person(2, Sex.FEMALE, 28)], PairingParams(), np.random.default_rng(0), 0.0)


def test_mean_age_gap_in_large_pools():
    rng = np.random.default_rng(0)
    n = 10_000
    age_f = rng.uniform(18, 45, n)
    q_f = rng.beta(9.8, 4.2, n)
    age_m = rng.uniform(20, 47, n)
    q_m = np.clip(rng.beta(9.8, 4.2, n) + 0.02, 0, 1)
    mi, fi = pair_indices(age_m, q_m, age_f, q_f, PairingParams(delta_age=2.0), rng)
    gap = age_m[mi] - age_f[fi]
    assert 1.8 <= gap.mean() <= 2.2
    # partners are close in age, unlike a random pairing (sd about 11)
    assert gap.std() < 3.0


@settings(max_examples=60, deadline=None)
@given(nm=st.integers(0, 300), nf=st.integers(0, 300), seed=st.integers(0, 2**32 - 1), noise=st.floats(0, 5))
def test_pairing_is_a_matching_of_the_smaller_pool(nm, nf, seed, noise):
    rng = np.random.default_rng(seed)
    mi, fi = pair_indices(rng.uniform(20, 60, nm), rng.random(nm), rng.uniform(18, 45, nf), rng.random(nf),
                          PairingParams(noise=noise), rng)
    assert len(mi) == len(fi) == min(nm, nf)
    assert len(set(mi.tolist())) == len(mi) and len(set(fi.tolist())) == len(fi)
    assert np.all((mi >= 0) & (mi < max(nm, 1))) and np.all((fi >= 0) & (fi < max(nf, 1)))


# -- conception ------------------------------------------------------------------------

def _union(q=0.6):
    return Union(father=person(1, Sex.MALE, 30, q), mother=person(2, Sex.FEMALE, 28))


def _env():
    return EnvironmentState.start(HarshnessSchedule.constant(0.3), NutritionSchedule(), DriftSpec(), 0.25, t=10.0)


def test_zero_rate_never_conceives():
    cfg = dataclasses.replace(SimConfig(), pairing=PairingParams(conception_rate=0.0))
    u, rng = _union(), np.random.default_rng(0)
    assert all(conceive(u, _env(), cfg, rng) is None for _ in range(500))


def test_forced_male():
    cfg = dataclasses.replace(SimConfig(), pairing=PairingParams(conception_rate=1e6))
    u, rng = _union(), np.random.default_rng(0)
    kids = [conceive(u, _env(), cfg, rng, p_male=1.0) for _ in range(200)]
    assert all(k.sex is Sex.MALE for k in kids)


def test_conception_bookkeeping():
    cfg = dataclasses.replace(SimConfig(), pairing=PairingParams(conception_rate=1e6))
    u, rng = _union(), np.random.default_rng(3)
    u.abstinence = 2.0
    kids = [conceive(u, _env(), cfg, rng) for _ in range(5)]
    assert [k.father_birth_order for k in kids] == [1, 2, 3, 4, 5]
    assert u.father_conceptions == max(k.father_birth_order for k in kids)
    assert u.abstinence == 0.0
    assert all(k.state is LifeState.IN_UTERO and k.father_id == 1 and k.mother_id == 2 for k in kids)


def test_male_fraction_binomial():
    # 1e5 conceptions at p = 0.6: the 99.9% binomial band is about +-0.0051
    cfg = dataclasses.replace(SimConfig(), pairing=PairingParams(conception_rate=1e6))
    u, rng, env = _union(), np.random.default_rng(7), _env()
    n = 100_000
    males = sum(conceive(u, env, cfg, rng, p_male=0.6).sex is Sex.MALE for _ in range(n))
    assert 0.596 <= males / n <= 0.604


# -- draft -----------------------------------------------------------------------------------

def test_draft_everyone():
    men = [person(i, Sex.MALE, 25, q) for i, q in enumerate(np.linspace(0.1, 0.9, 9))]
    drafted, exempt = draft_filter(men, 0.0, 1.0)
    assert len(drafted) == 9 and exempt == []


def test_median_threshold_takes_the_fit():
    rng = np.random.default_rng(1)
    men = [person(i, Sex.MALE, 25, q) for i, q in enumerate(rng.beta(4, 2, 501))]
    med = float(np.median([m.q_genetic for m in men]))
    drafted, exempt = draft_filter(men, med, 1.0)
    assert np.mean([m.q_genetic for m in drafted]) > np.mean([m.q_genetic for m in exempt])


def test_cap_takes_highest_quality_first():
    q = np.array([0.9, 0.2, 0.95, 0.7, 0.8])
    assert draft_mask(q, 0.5, 0.4).tolist() == [True, False, True, False, False]


@given(q=st.lists(st.floats(0.001, 1.0), max_size=200), thr=st.floats(0, 1), frac=st.floats(0, 1))
def test_draft_partitions_the_pool(q, thr, frac):
    men = [person(i, Sex.MALE, 25, v) for i, v in enumerate(q)]
    drafted, exempt = draft_filter(men, thr, frac)
    ids_d, ids_e = {m.id for m in drafted}, {m.id for m in exempt}
    assert ids_d.isdisjoint(ids_e) and ids_d | ids_e == {m.id for m in men}
    assert all(m.q_genetic >= thr for m in drafted)
    assert len(drafted) <= frac * len(men) + 1e-9
