import numpy as np
import pytest
from scipy import stats

from bdvax.engine import STOCHASTIC, id_rank
from bdvax.errors import ConfigError, DimensionError, ParseError
from bdvax.indices import IndexTable
from bdvax.strategies import (SCENARIOS, AcceptanceScenario, StrategyKind, comprehensive_score,
                              income_quintiles, make_plan, priority_score, svi_score)

from conftest import hand_world, small_world

RANKED = [StrategyKind.AGE, StrategyKind.INCOME, StrategyKind.OCCUPATION, StrategyKind.REVERSE_AGE,
          StrategyKind.REVERSE_INCOME, StrategyKind.REVERSE_OCCUPATION, StrategyKind.SVI]
ALL_SCENARIOS = [AcceptanceScenario.preset(k) for k in SCENARIOS]


def test_full_budget_vaccinates_everyone(synth40):
    for kind in RANKED + [StrategyKind.HOMOGENEOUS, StrategyKind.REAL_WORLD]:
        plan = make_plan(synth40, kind, 1.0)
        assert np.allclose(plan.fraction, 1.0, atol=1e-12), kind


def test_income_rank_fill_hand_trace():
    w = hand_world(population=(100.0, 100.0, 100.0), income=(10.0, 20.0, 30.0))
    plan = make_plan(w, "income", 1 / 3)
    assert plan.fraction.tolist() == pytest.approx([1.0, 0.0, 0.0], abs=1e-12)


def test_marginal_community_gets_fraction():
    w = hand_world(population=(100.0, 200.0, 300.0), income=(10.0, 20.0, 30.0))
    plan = make_plan(w, "income", 0.25)      # 150 persons: 100 to c0, 50 to c1
    assert plan.fraction.tolist() == pytest.approx([1.0, 0.25, 0.0])


def test_hypo3_bottom_quintile_cap(synth40):
    hypo3 = AcceptanceScenario.preset("Hypo-3")
    assert hypo3.acceptance_by_income_quintile == (0.1, 0.3, 0.5, 0.7, 1.0)
    caps = hypo3.caps(synth40)
    q = income_quintiles(synth40)
    assert np.all(caps[q == 0] == 0.1)
    plan = make_plan(synth40, "income", 0.3, hypo3)
    assert np.all(plan.fraction[q == 0] <= 0.1 + 1e-12)


def test_scenario_vectors():
    assert SCENARIOS["hypo1"] == (0.6, 0.7, 0.8, 0.9, 1.0)
    assert SCENARIOS["hypo2"] == (0.2, 0.4, 0.6, 0.8, 1.0)


@pytest.mark.parametrize("scenario", ALL_SCENARIOS, ids=lambda s: s.name)
@pytest.mark.parametrize("budget", [0.0, 0.05, 0.3, 0.8, 1.0])
def test_caps_and_budget_respected(synth40, scenario, budget):
    caps = scenario.caps(synth40)
    pop = synth40.population
    for kind in RANKED + [StrategyKind.HOMOGENEOUS, StrategyKind.REAL_WORLD]:
        plan = make_plan(synth40, kind, budget, scenario)
        assert np.all(plan.fraction <= caps + 1e-12)
        cov = plan.coverage(pop)
        assert cov <= budget + 1e-9
        if plan.has_shortfall:
            assert np.allclose(plan.fraction, caps)
            assert plan.shortfall == pytest.approx(budget - cov)
        else:
            assert cov == pytest.approx(budget, abs=1e-9)


def test_monotone_in_rank(synth40):
    hypo2 = AcceptanceScenario.preset("hypo2")
    caps = hypo2.caps(synth40)
    for kind in RANKED:
        plan = make_plan(synth40, kind, 0.3, hypo2)
        score = priority_score(synth40, kind)
        order = np.lexsort((id_rank(synth40), -score))
        rel = plan.fraction[order] / caps[order]
        assert np.all(np.diff(rel) <= 1e-12), kind


def test_affine_rescaling_keeps_plan(synth40):
    from dataclasses import replace
    dollars = replace(synth40, income=synth40.income * 0.92 + 1000.0)
    for kind in RANKED:
        a = make_plan(synth40, kind, 0.2).fraction
        b = make_plan(dollars, kind, 0.2).fraction
        assert np.array_equal(a, b), kind


def test_full_acceptance_reduces_to_none(synth40, tmp_path):
    f = tmp_path / "acc.csv"
    f.write_text("quintile,acceptance\n" + "".join(f"{q},1\n" for q in range(5)))
    custom = AcceptanceScenario.parse(f"custom:{f}")
    for kind in RANKED + [StrategyKind.HOMOGENEOUS]:
        assert np.array_equal(make_plan(synth40, kind, 0.25, custom).fraction,
                              make_plan(synth40, kind, 0.25).fraction)


def test_custom_scenario_errors(tmp_path):
    f = tmp_path / "acc.csv"
    f.write_text("quintile,acceptance\n0,0.5\n1,x\n")
    with pytest.raises(ParseError):
        AcceptanceScenario.parse(f"custom:{f}")
    f.write_text("quintile,acceptance\n0,0.5\n")
    with pytest.raises(ConfigError):
        AcceptanceScenario.parse(f"custom:{f}")
    with pytest.raises(ConfigError):
        AcceptanceScenario("bad", (0.0, 1, 1, 1, 1))
    with pytest.raises(ConfigError):
        AcceptanceScenario.parse("hypo9")


def test_homogeneous_is_uniform_without_caps(synth40):
    plan = make_plan(synth40, "homogeneous", 0.37)
    assert np.allclose(plan.fraction, 0.37, atol=1e-12)


def test_homogeneous_water_fills_around_caps(synth40):
    hypo3 = AcceptanceScenario.preset("hypo3")
    caps = hypo3.caps(synth40)
    plan = make_plan(synth40, "homogeneous", 0.4, hypo3)
    level = plan.fraction[plan.fraction < caps - 1e-12]
    assert np.allclose(level, level[0])                  # one common level
    assert np.all(plan.fraction[caps < level[0]] == caps[caps < level[0]])


def test_homogeneous_stochastic_is_seeded(synth40):
    a = make_plan(synth40, "homogeneous", 0.3, seed=4, mode=STOCHASTIC)
    b = make_plan(synth40, "homogeneous", 0.3, seed=4, mode=STOCHASTIC)
    c = make_plan(synth40, "homogeneous", 0.3, seed=5, mode=STOCHASTIC)
    assert np.array_equal(a.fraction, b.fraction) and not np.array_equal(a.fraction, c.fraction)
    assert a.coverage(synth40.population) == pytest.approx(0.3)


def test_real_world_follows_coverage_table(synth40):
    table = (1.0, 2.0, 3.0, 4.0, 5.0)
    plan = make_plan(synth40, "real-world", 0.1, coverage_table=table)
    q = income_quintiles(synth40)
    ratio = plan.fraction / np.asarray(table)[q]
    assert np.allclose(ratio, ratio[0])
    for bad in [(1, 2, 3), (1, -1, 1, 1, 1), (0, 0, 0, 0, 0), (1, np.nan, 1, 1, 1)]:
        with pytest.raises(ConfigError):
            make_plan(synth40, "real-world", 0.1, coverage_table=bad)


def test_budget_out_of_range(synth40):
    with pytest.raises(ConfigError):
        make_plan(synth40, "age", 1.5)
    with pytest.raises(ConfigError):
        make_plan(synth40, "age", 0.1, day=-1)


def test_strategy_aliases():
    assert StrategyKind.parse("prioritize-by-age") is StrategyKind.AGE
    assert StrategyKind.parse("reverse_income") is StrategyKind.REVERSE_INCOME
    with pytest.raises(ConfigError):
        StrategyKind.parse("random")


# -- SVI ---------------------------------------------------------------------

def test_svi_hand_case():
    w = hand_world(population=(100.0,) * 5, older=(0.1, 0.2, 0.3, 0.4, 0.5),
                   income=(5.0, 4.0, 3.0, 2.0, 1.0), essential=(0.5, 0.1, 0.2, 0.3, 0.4))
    # mean ranks: 1/3, 1/6, 5/12, 2/3, 11/12 -> re-ranked
    assert svi_score(w).tolist() == pytest.approx([0.25, 0.0, 0.5, 0.75, 1.0])


def test_svi_extremes_and_ties():
    w = hand_world(population=(100.0,) * 4, older=(0.1, 0.5, 0.2, 0.2),
                   income=(5.0, 1.0, 3.0, 3.0), essential=(0.1, 0.6, 0.3, 0.3))
    s = svi_score(w)
    assert s[1] == 1.0 and s[2] == s[3]
    assert np.all((0 <= s) & (s <= 1))


# -- Comprehensive -------------------------------------------------------------

def random_table(n=30, seed=0):
    rng = np.random.default_rng(seed)
    pop = rng.integers(100, 1000, n).astype(float)
    return IndexTable(tuple(f"c{i:03d}" for i in range(n)), pop, rng.random(n), rng.random(n) * pop,
                      rng.random(n) * 0.4, rng.lognormal(10, 0.5, n), rng.random(n))


def test_comprehensive_score_oracle():
    t = random_table()
    w = np.array([0.3, -0.2, 0.1, 0.25, -0.15])
    cols = [t.community_risk, t.societal_harm / t.population, t.older_adult_fraction,
            stats.rankdata(-t.income) - 1, t.essential_worker_fraction]
    z = [(c - c.mean()) / c.std() for c in cols]
    expected = sum(wi * zi for wi, zi in zip(w, z))
    assert np.allclose(comprehensive_score(t, w), expected, atol=1e-12)
    ablated = sum(wi * zi for wi, zi in list(zip(w, z))[2:])
    assert np.allclose(comprehensive_score(t, w, ablation=True), ablated, atol=1e-12)


def test_comprehensive_single_feature_matches_cr_ranking(synth40):
    from bdvax.indices import build_index_table
    t = build_index_table(synth40)
    plan = make_plan(synth40, "comprehensive", 0.2, weights=[1, 0, 0, 0, 0], index_table=t)
    order = np.lexsort((id_rank(synth40), -t.community_risk))
    rel = plan.fraction[order]
    assert np.all(np.diff(rel) <= 1e-12) and rel[0] == 1.0


def test_comprehensive_zero_weights_tie_break_by_id(synth40):
    from bdvax.indices import build_index_table
    t = build_index_table(synth40)
    plan = make_plan(synth40, "comprehensive", 0.2, weights=np.zeros(5), index_table=t)
    order = np.argsort(np.asarray(synth40.community_ids))
    assert np.all(np.diff(plan.fraction[order]) <= 0)


def test_comprehensive_weight_errors(synth40):
    t = random_table(synth40.n_communities)
    with pytest.raises(DimensionError):
        comprehensive_score(t, [1, 2, 3])
    with pytest.raises(ConfigError):
        comprehensive_score(t, [1, np.inf, 0, 0, 0])
    with pytest.raises(ConfigError):
        make_plan(synth40, "comprehensive", 0.1)


def test_small_world_skips_quintiles():
    w = hand_world()
    plan = make_plan(w, "income", 0.5, AcceptanceScenario.preset("hypo3"))
    assert plan.coverage(w.population) == pytest.approx(0.5)


def test_larger_world_plans_are_fast():
    w = small_world(seed=0, n=1000, m=50, days=1)
    for kind in RANKED + [StrategyKind.HOMOGENEOUS]:
        make_plan(w, kind, 0.1, AcceptanceScenario.preset("hypo2"))
