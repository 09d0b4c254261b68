import dataclasses

import numpy as np
import pytest

from sexratio.demography import NoParityCrossing, cohort_solve
from sexratio.engine import Simulation, run, run_replicates, spawn_streams, step
from sexratio.environment import HarshnessSchedule, NutritionSchedule
from sexratio.io import TABLES, csv_text
from sexratio.params import BirthStream, ConfigError, HazardParams, PairingParams, PopulationSpec, SimConfig
from sexratio.reproduction import maternal_multiplier
from sexratio.scenarios import CalibrationSpec, Scenario, builtin, set_param
from sexratio.stats import proportion_ci


def small(name="baseline_peace", size=2000, horizon=3.0, **extra):
    return builtin(name, {"population": {"size": size}, "horizon": horizon, **extra})


def table_texts(tr):
    return {k: csv_text(h, fn(tr, 0)) for k, (h, fn) in TABLES.items()}


def test_streams_are_independent_and_reproducible():
    a, b = spawn_streams(5), spawn_streams(5)
    assert a["deaths"].random() == b["deaths"].random()
    assert spawn_streams(5)["deaths"].random() != spawn_streams(5)["pairing"].random()


def test_null_dynamics():
    zero = HazardParams(female_rates=(0.0,) * 11, male_rates=(0.0,) * 11, fetal_m=0.0, fetal_f=0.0)
    cfg = SimConfig(hazard=zero, pairing=PairingParams(conception_rate=0.0), population=PopulationSpec(size=500), horizon=1.0)
    sim = Simulation(Scenario("null", config=cfg), seed=3)
    young = sim.state.ages() < sim.n_max - 30
    before = {k: v[young].copy() for k, v in sim.state.arrays.items() if k not in ("abstinence", "partner")}
    for _ in range(20):
        step(sim)
    st = sim.state
    assert st.total_conceived == 0
    pos = st.index_of(before["id"])
    assert np.all(pos >= 0)
    for k in ("sex", "cstep", "q", "order", "group"):
        np.testing.assert_array_equal(st.arrays[k][pos], before[k])
    assert st.t == pytest.approx(1.0)


def test_identity_checked_every_step():
    sc = small("war_draft", horizon=2.0)
    sim = Simulation(sc, seed=1)
    for _ in range(40):
        step(sim)
        assert sim.state.identity_holds()
        live = sim.state.partner[sim.state.partner >= 0]
        assert np.all(sim.state.index_of(live) >= 0)
    assert sim.steps_checked == 40


def test_fetal_death_probability():
    # 1e6 male fetuses for one step under maternal multiplier m
    n, u, dt = 1_000_000, 0.12, 0.05
    hp = dataclasses.replace(HazardParams(), fetal_m=u, kappa_m=0.0, gamma_m=0.0, gamma_f=0.0)
    cfg = SimConfig(hazard=hp, birth_stream=BirthStream(True, n, 1.0), horizon=1.0)
    sc = Scenario("fetal", config=cfg, harshness=HarshnessSchedule.constant(0.0), nutrition=NutritionSchedule(((0.0, 0.3),)))
    sim = Simulation(sc, seed=11)
    step(sim)
    first = sim.state.id.copy()
    step(sim)
    died = n - int(np.sum(sim.state.index_of(first) >= 0))
    m = maternal_multiplier(0.3, cfg.maternal)
    expect = -np.expm1(-u * m * dt)
    est, lo, hi = proportion_ci(died, n, 0.99)
    assert lo <= expect <= hi


def test_short_window_parity_age_is_truncated_not_absent():
    tr = run(None, small(size=1500, horizon=1.0), seed=1)
    assert tr.period_table().ages[-1] < tr.life.at_risk.shape[1] * tr.life.dt
    with pytest.raises(NoParityCrossing) as e:
        tr.parity_age()
    assert e.value.cause == "truncated"


def test_horizon_zero_records_initial_snapshot():
    tr = run(None, small(horizon=0.0), seed=1)
    assert list(tr.times) == [0.0]


def test_recording_times_increase():
    tr = run(None, small(horizon=3.0), seed=1)
    assert np.all(np.diff(tr.times) > 0)
    assert tr.steps_checked == 60


def test_same_seed_same_tables():
    sc = small("war_draft", horizon=2.0)
    assert table_texts(run(None, sc, seed=9)) == table_texts(run(None, sc, seed=9))
    assert table_texts(run(None, sc, seed=9)) != table_texts(run(None, sc, seed=10))


def test_seed_is_required():
    with pytest.raises(ConfigError):
        run(None, small(), seed=None)


def test_invalid_config_reported_before_stepping():
    with pytest.raises(ConfigError):
        run(SimConfig(dt=0.5), None, seed=1)


def test_identical_seeds_give_zero_width_ci():
    s = run_replicates(None, small(size=500, horizon=2.0), [4, 4])
    lo, hi = s.ci("sr_tb")
    assert lo == hi == s.mean("sr_tb")


def test_replicates_need_two_seeds():
    with pytest.raises(ConfigError):
        run_replicates(None, small(), [1])


def test_ci_width_shrinks_with_replicates():
    sc = small(size=300, horizon=2.0)
    widths = {}
    for r in (4, 16, 64):
        s = run_replicates(None, sc, list(range(1000, 1000 + r)))
        lo, hi = s.ci("sr0")
        widths[r] = hi - lo
    # 1/sqrt(R): each fourfold increase halves the width
    assert 1.3 < widths[4] / widths[16] < 3.0
    assert 1.3 < widths[16] / widths[64] < 3.0


def test_renewal_rate_matches_size_over_lifespan():
    sc = small(size=10_000, horizon=10.0)
    tr = run(None, sc, seed=1)
    alive = (tr.series["alive_m"] + tr.series["alive_f"]).mean()
    # life expectancy at birth from the cohort oracle, by the birth sex mix
    tab = cohort_solve(sc.config, 150.0, harshness=0.3)
    g, dt = sc.config.gestation_steps, sc.config.dt
    e0 = [np.trapezoid(l[g:], dx=dt) / l[g] for l in (tab.l_m, tab.l_f)]
    wm, wf = 0.6 * tab.l_m[g], 0.4 * tab.l_f[g]
    life = (wm * e0[0] + wf * e0[1]) / (wm + wf)
    assert tr.renewal_rate() == pytest.approx(alive / life, rel=0.10)


def test_peace_time_birth_cohort_ratio_large_population():
    tr = run(None, builtin("baseline_peace", {"population": {"size": 100_000}, "horizon": 5.0}), seed=2)
    assert 104.0 <= tr.sr_tb(start=0.0) <= 106.0


def test_draft_raises_birth_ratio_paired():
    base = builtin("war_draft", {"population": {"size": 4000}})
    peace = dataclasses.replace(base, events=(), targets=(), calibration=CalibrationSpec())
    seeds = list(range(32))
    war = run_replicates(None, base, seeds)
    calm = run_replicates(None, peace, seeds)
    uplift = war.values["sr_tb"] - calm.values["sr_tb"]
    m, se = uplift.mean(), uplift.std(ddof=1) / np.sqrt(len(uplift))
    assert m - 1.96 * se > 0


def test_tracking_scenario_is_rejected_here():
    with pytest.raises(ConfigError):
        Simulation(builtin("tracking_race"), seed=1)


def test_groups_of_fathers_are_tracked():
    tr = run(None, small("mountain_abstinence", size=3000, horizon=2.0), seed=1)
    assert tr.series["exp_m"].shape[1] == 2
    assert tr.series["births_m"][:, 1].sum() > 0
