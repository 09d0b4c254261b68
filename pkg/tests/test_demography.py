import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sexratio.demography import (
    CohortTable,
    NoParityCrossing,
    NoQualityParity,
    UnsupportedConfiguration,
    cohort_solve,
    count_inversions,
    hazard,
    parity_age_numbers,
    parity_age_quality,
    renewal_rate,
    smooth,
    sr_by_birth_order,
    sr_profile,
)
from sexratio.environment import HarshnessSchedule
from sexratio.model import DomainError, Sex, natal_strata
from sexratio.params import HazardParams, SimConfig

F, M = Sex.FEMALE, Sex.MALE


def flat_hazards(b_m, b_f, kappa_m=0.0, kappa_f=0.0, gamma=0.0):
    """One band for everybody, fetal rate equal to the band rate."""
    return HazardParams(
        band_edges=(0.0,), male_rates=(b_m,), female_rates=(b_f,),
        fetal_m=b_m, fetal_f=b_f, kappa_m=kappa_m, kappa_f=kappa_f, gamma_m=gamma, gamma_f=gamma,
    )


def cfg_with(hp, **kw):
    return SimConfig(hazard=hp, **kw)


# -- hazard ----------------------------------------------------------------

def test_neutral_exponents_return_baseline():
    hp = flat_hazards(0.01, 0.01, kappa_m=2, gamma=1.5)
    assert hazard(M, 10.0, 1.0, 0.0, hp) == pytest.approx(0.01)
    hp0 = flat_hazards(0.01, 0.01)
    assert hazard(M, 10.0, 0.3, 2.0, hp0) == pytest.approx(0.01)


def test_quality_exponent_arithmetic():
    assert hazard(M, 10.0, 0.5, 0.0, flat_hazards(0.01, 0.01, kappa_m=1.0)) == pytest.approx(0.02)


def test_male_excess_follows_baseline():
    hp = HazardParams()
    for age in (0.1, 1.0, 20.0, 70.0):
        assert hazard(M, age, 1.0, 0.4, hp) > hazard(F, age, 1.0, 0.4, hp)


def test_hazard_domain():
    with pytest.raises(DomainError):
        hazard(M, 1.0, 0.0, 0.0, HazardParams())


def test_fetal_multiplier_only_for_males():
    hp = HazardParams()
    assert hazard(M, 0.2, 1.0, 0.0, hp, multiplier=3.0) == pytest.approx(3 * hp.fetal_m)
    assert hazard(F, 0.2, 1.0, 0.0, hp, multiplier=3.0) == pytest.approx(hp.fetal_f)


# -- profiles ---------------------------------------------------------------

def test_profile_ratio():
    p = sr_profile([1.0] * 205, [M] * 105 + [F] * 100, [0.0, 5.0])
    assert p.sr[0] == pytest.approx(105.0)


def test_profile_sentinel_without_females():
    p = sr_profile([1.0, 1.0, 1.0], [M, M, M], [0.0, 5.0])
    assert math.isnan(p.sr[0])


def test_all_female_profile_is_zero():
    p = sr_profile([1.0, 7.0, 12.0], [F, F, F], [0.0, 5.0, 10.0, 15.0])
    assert list(p.sr) == [0.0, 0.0, 0.0]


def test_profile_csv_columns():
    p = sr_profile([1.0, 2.0], [M, F], [0.0, 5.0])
    assert p.to_csv().splitlines() == ["bin_start,bin_end,males,females,SR", "0.0,5.0,1,1,100.0"]


def test_profile_grid_must_increase():
    with pytest.raises(ValueError):
        sr_profile([1.0], [M], [0.0, 0.0])


# -- parity ages -------------------------------------------------------------

def test_parity_linear_interpolation():
    assert parity_age_numbers(([0.0, 40.0], [120.0, 80.0])) == pytest.approx(20.0)


def test_parity_exponential_closed_form():
    # SR = 120 exp(-lambda t) with lambda = ln(1.2)/25 crosses 100 at 25
    lam = math.log(1.2) / 25.0
    t = np.linspace(0.0, 60.0, 6001)
    assert parity_age_numbers((t, 120.0 * np.exp(-lam * t))) == pytest.approx(25.0, abs=1e-6)


def test_parity_causes():
    with pytest.raises(NoParityCrossing) as e:
        parity_age_numbers(([0.0, 1.0], [95.0, 90.0]))
    assert e.value.cause == "starts_below"
    with pytest.raises(NoParityCrossing) as e:
        parity_age_numbers(([0.0, 1.0], [120.0, 110.0]))
    assert e.value.cause == "never_crosses"


def test_quality_parity_linear():
    t = np.linspace(0.0, 50.0, 51)
    assert parity_age_quality(t, 0.9 + 0.01 * t, 1.0 + 0.005 * t) == pytest.approx(20.0)


def test_quality_parity_degenerate():
    t = np.linspace(3.0, 50.0, 20)
    assert parity_age_quality(t, np.full(20, 0.7), np.full(20, 0.7)) == 3.0


def test_quality_parity_missing():
    with pytest.raises(NoQualityParity):
        parity_age_quality([0.0, 1.0], [0.5, 0.6], [0.8, 0.9])


def test_smoothing_and_inversions():
    assert list(smooth([3.0, 6.0, 9.0, 12.0], 3)) == [4.5, 6.0, 9.0, 10.5]
    assert count_inversions([5.0, 4.0, 4.5, 3.0, np.nan, 2.0]) == 1


# -- birth order and renewal ---------------------------------------------------

def test_birth_order_definition():
    sr = sr_by_birth_order([(M, 1), (M, 1), (F, 1)])
    assert sr[0] == 200.0
    assert math.isnan(sr[1])


def test_renewal_rate_zero_births():
    r = renewal_rate([0.0, 1.0, 2.0], [100, 100, 100], [0, 0, 0])
    assert r.rate == 0.0 and r.stationary


def test_renewal_rate_flags_drift():
    r = renewal_rate([0.0, 1.0, 2.0], [100, 110, 120], [5, 5, 5])
    assert r.rate == 5.0 and not r.stationary


def test_renewal_rate_unit_consistency():
    # the same births counted on a coarser grid give the same rate
    fine = renewal_rate(np.arange(0, 10.5, 0.5), np.full(21, 50), np.r_[0, np.full(20, 3.0)])
    coarse = renewal_rate(np.arange(0, 11.0, 1.0), np.full(11, 50), np.r_[0, np.full(10, 6.0)])
    assert fine.rate == coarse.rate == 6.0


# -- cohort oracle -----------------------------------------------------------------

def test_equal_hazards_keep_sr():
    tab = cohort_solve(cfg_with(flat_hazards(0.02, 0.02)), 130.0, harshness=0.5)
    assert np.allclose(tab.sr, 130.0, rtol=1e-12)


def test_exponential_sr_closed_form():
    b_m, b_f, sr0 = 0.031, 0.012, 140.0
    tab = cohort_solve(cfg_with(flat_hazards(b_m, b_f)), sr0)
    expect = sr0 * np.exp(-(b_m - b_f) * tab.ages)
    np.testing.assert_allclose(tab.sr, expect, rtol=1e-6)


def test_quality_selection_matches_hand_computation():
    # oracle: mixture survival with constant baseline, written out directly
    b, kappa = 0.05, 2.0
    cfg = cfg_with(flat_hazards(b, b, kappa_m=kappa))
    tab = cohort_solve(cfg, 120.0, strata=2)
    q, w = natal_strata(cfg.natal, M, 2)
    ages = tab.ages
    surv = np.exp(-b * ages[:, None] / q[None, :] ** kappa)
    qbar = (surv * q) @ w / (surv @ w)
    np.testing.assert_allclose(tab.qbar_m, qbar, rtol=1e-9)
    assert np.all(np.diff(tab.qbar_m) >= -1e-12)
    # a two-point check on the first steps by hand
    s1 = [math.exp(-b * 0.05 / qi**kappa) for qi in q]
    l1 = sum(wi * si for wi, si in zip(w, s1))
    assert tab.l_m[1] == pytest.approx(l1, rel=1e-12)


def test_oracle_rejects_varying_environment():
    with pytest.raises(UnsupportedConfiguration):
        cohort_solve(SimConfig(), 150.0, harshness=HarshnessSchedule(((0.0, 0.1), (5.0, 0.4))))


def test_oracle_strata_convergence():
    a = cohort_solve(SimConfig(), 150.0, harshness=0.3, strata=32).sr
    b = cohort_solve(SimConfig(), 150.0, harshness=0.3, strata=64).sr
    assert np.nanmax(np.abs(a - b)) < 0.1


def test_default_oracle_has_parity_age():
    tab = cohort_solve(SimConfig(), 150.0, harshness=0.3)
    assert 10.0 < tab.parity_age() < 60.0
    assert tab.qbar_m[0] < tab.qbar_f[0]
    tab.quality_parity_age()


hp_strategy = st.builds(
    lambda bf, dm, kf, dk, g: flat_hazards(bf + dm, bf, kappa_m=kf + dk, kappa_f=kf, gamma=g),
    st.floats(0.001, 0.05), st.floats(0.0005, 0.05), st.floats(0, 2), st.floats(0, 2), st.floats(0, 2),
)


# female hazards blind to quality, as in the default model
unselected_females = st.builds(
    lambda bf, dm, km, g: flat_hazards(bf + dm, bf, kappa_m=km, kappa_f=0.0, gamma=g),
    st.floats(0.001, 0.05), st.floats(0.0005, 0.05), st.floats(0, 4), st.floats(0, 2),
)


@settings(max_examples=30, deadline=None)
@given(hp=unselected_females, H=st.floats(0, 1.5))
def test_sr_strictly_decreasing_when_males_die_faster(hp, H):
    tab = cohort_solve(cfg_with(hp, max_age=40.0), 150.0, harshness=H, strata=8)
    sr = tab.sr[~np.isnan(tab.sr)]
    assert np.all(np.diff(sr) < 0)


def test_sr_can_turn_up_when_both_sexes_are_selected():
    # males start lower in quality; once selection has left male survivors
    # fitter than female ones, the male mean hazard drops below the female
    hp = flat_hazards(0.048828125, 0.046875, kappa_m=2.0, kappa_f=2.0)
    tab = cohort_solve(cfg_with(hp, max_age=40.0), 150.0, harshness=0.0, strata=8)
    sr = tab.sr[~np.isnan(tab.sr)]
    low = int(np.argmin(sr))
    assert 0 < low < len(sr) - 1
    assert np.all(np.diff(sr[:low + 1]) < 0) and np.all(np.diff(sr[low:]) > 0)


def _qbars(hp, H):
    tab = cohort_solve(cfg_with(hp, max_age=40.0), 150.0, harshness=H, strata=8)
    ok = np.isfinite(tab.qbar_m) & np.isfinite(tab.qbar_f)
    return tab.qbar_m[ok], tab.qbar_f[ok]


@settings(max_examples=30, deadline=None)
@given(hp=hp_strategy, H=st.floats(0, 1.5))
def test_mean_quality_non_decreasing(hp, H):
    for qb in _qbars(hp, H):
        assert np.all(np.diff(qb) >= -1e-12)


@settings(max_examples=30, deadline=None)
@given(hp=unselected_females, H=st.floats(0, 1.5))
def test_quality_ratio_non_decreasing(hp, H):
    qm, qf = _qbars(hp, H)
    assert np.all(np.diff(qm / qf) >= -1e-12)


def test_quality_ratio_can_turn_down_when_females_are_selected_too():
    # both means climb towards the top of the natal range, so once males
    # overtake, the ratio must drift back towards 1
    qm, qf = _qbars(flat_hazards(0.0625, 0.03125, kappa_m=2.0, kappa_f=1.0, gamma=2.0), 1.0)
    ratio = qm / qf
    peak = int(np.argmax(ratio))
    assert ratio[peak] > 1.0 and 0 < peak < len(ratio) - 1
    assert np.all(np.diff(ratio[peak:]) < 0)
