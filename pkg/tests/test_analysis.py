import numpy as np
import pytest

from bdvax.analysis import (TARGETS, adjusted_r2, candidate_weights, generate_instances,
                            index_ablation_study, l1_sphere_samples, learn_weights, ols_fit,
                            read_weights, write_weights)
from bdvax.errors import ConfigError, DimensionError, ParseError, ValidationError
from bdvax.indices import build_index_table

from conftest import small_world


# -- OLS ---------------------------------------------------------------------

def test_ols_exact_line():
    res = ols_fit([[0.0], [1.0], [2.0]], [1.0, 3.0, 5.0])
    assert res.coefficients.tolist() == pytest.approx([2.0])
    assert res.intercept == pytest.approx(1.0)


def test_ols_exact_linear_r2_one():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 4))
    y = X @ [1.0, -2.0, 0.5, 3.0] + 7.0
    res = ols_fit(X, y)
    assert res.adjusted_r2 == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(res.coefficients, [1.0, -2.0, 0.5, 3.0])


def test_ols_noise_r2_near_zero():
    rng = np.random.default_rng(1)
    res = ols_fit(rng.normal(size=(1000, 3)), rng.normal(size=1000))
    assert abs(res.adjusted_r2) < 0.05


def test_ols_matches_lstsq_oracle_and_residuals_orthogonal():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 3)) * [1.0, 100.0, 0.01]
    y = X @ [0.3, 0.02, -40.0] + rng.normal(size=300)
    res = ols_fit(X, y)
    A = np.column_stack([np.ones(300), X])
    coef = np.linalg.solve(A.T @ A, A.T @ y)
    assert np.allclose(np.r_[res.intercept, res.coefficients], coef, rtol=1e-9)
    for col in A.T:
        assert abs(col @ res.residuals) <= 1e-8 * np.linalg.norm(col) * np.linalg.norm(y)
    r2 = 1 - np.sum(res.residuals ** 2) / np.sum((y - y.mean()) ** 2)
    assert res.adjusted_r2 == pytest.approx(1 - (1 - r2) * 299 / 296, abs=1e-12)


def test_adjusted_r2_formula():
    assert adjusted_r2(0.5, 11, 2) == pytest.approx(1 - 0.5 * 10 / 8)


def test_noise_feature_barely_moves_adjusted_r2():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(1000, 3))
    y = X @ [1.0, 0.5, -0.3] + rng.normal(size=1000)
    a = ols_fit(X, y).adjusted_r2
    b = ols_fit(np.column_stack([X, rng.normal(size=1000)]), y).adjusted_r2
    assert abs(b - a) < 0.02


def test_duplicated_column_is_rejected_by_name():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 2))
    with pytest.raises(ValidationError, match="'b_copy'"):
        ols_fit(np.column_stack([X, X[:, 1]]), rng.normal(size=50), ["a", "b", "b_copy"])
    with pytest.raises(ValidationError, match="'c'"):
        ols_fit(np.column_stack([X, np.ones(50)]), rng.normal(size=50), ["a", "b", "c"])


def test_ols_shape_errors():
    with pytest.raises(DimensionError):
        ols_fit(np.ones((5, 1)), np.ones(4))
    with pytest.raises(ValidationError):
        ols_fit([[1.0], [2.0]], [1.0, 2.0])


# -- instances -----------------------------------------------------------------

@pytest.fixture(scope="module")
def world():
    return small_world(seed=6, n=60, m=15, days=40)


def test_full_coverage_instance(world):
    for inst in generate_instances(world, 5, 1.0, seed=0):
        assert inst.communities.tolist() == list(range(world.n_communities))
        assert inst.coverage == pytest.approx(1.0)


def test_instances_are_seeded(world):
    a = generate_instances(world, 20, 0.05, seed=9)
    b = generate_instances(world, 20, 0.05, seed=9)
    assert all(np.array_equal(x.communities, y.communities) for x, y in zip(a, b))


def test_instance_coverage_bound(world):
    insts = generate_instances(world, 1000, 0.05, seed=1)
    share = world.population.max() / world.population.sum()
    cov = np.array([i.coverage for i in insts])
    assert np.all(cov >= 0.05 - 1e-12) and np.all(cov < 0.05 + share)
    # the stopping rule: dropping the last member would fall short
    pop = world.population
    for inst in insts[:50]:
        assert pop[inst.communities].sum() - pop[inst.communities].max() < 0.05 * pop.sum() + 1e-9


def test_instance_features_are_weighted_means(world):
    table = build_index_table(world)
    inst = generate_instances(world, 1, 0.1, seed=2, table=table)[0]
    m = inst.communities
    w = world.population[m]
    assert inst.features["income"] == pytest.approx(np.dot(w, world.income[m]) / w.sum())
    assert inst.features["societal_harm"] == pytest.approx(table.societal_harm[m].sum() / w.sum())


def test_instance_errors(world):
    with pytest.raises(ConfigError):
        generate_instances(world, 3, 0.0)
    with pytest.raises(ConfigError):
        generate_instances(world, 0, 0.1)


def test_ablation_study_shapes(world):
    st = index_ablation_study(world, 40, 0.05, seed=0)
    assert st.outcomes.shape == (40, 4) and st.features.shape == (40, 5)
    assert set(st.gains()) == set(TARGETS)
    for t in TARGETS:
        assert st.with_index[t].feature_names[-1] in ("community_risk", "societal_harm")
        assert len(st.baseline[t].coefficients) == 3


# -- weight learning -----------------------------------------------------------

def test_l1_sphere_samples():
    s = l1_sphere_samples(100, range(5), seed=0)
    assert np.allclose(np.abs(s).sum(axis=1), 1.0)
    abl = candidate_weights(20, seed=0, ablation=True)
    assert np.all(abl[:, :2] == 0) and abl.shape == (23, 5)
    assert candidate_weights(20, seed=0).shape == (25, 5)


def test_single_candidate_returned(world):
    w = np.array([[0.2, -0.3, 0.1, 0.2, 0.2]])
    assert np.array_equal(learn_weights(world, candidates=w).weights, w[0])


def test_argmax_dominates_axes_and_ignores_order(world):
    cands = candidate_weights(6, seed=1)
    a = learn_weights(world, candidates=cands)
    b = learn_weights(world, candidates=cands[::-1])
    assert np.array_equal(a.weights, b.weights)
    axes = np.eye(5)
    ax = learn_weights(world, candidates=axes)
    assert a.performance >= ax.scores.max()


def test_weights_file_round_trip(tmp_path):
    w = np.array([0.1, -0.2, 0.3, -0.25, 0.15])
    write_weights(w, tmp_path / "w.csv")
    assert np.array_equal(read_weights(tmp_path / "w.csv"), w)
    (tmp_path / "bad.csv").write_text("feature,weight\ncommunity_risk,x\n")
    with pytest.raises(ParseError):
        read_weights(tmp_path / "bad.csv")
    (tmp_path / "short.csv").write_text("feature,weight\ncommunity_risk,1\n")
    with pytest.raises(ConfigError):
        read_weights(tmp_path / "short.csv")
