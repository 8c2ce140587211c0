import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorbox.models import (SIGMA_GRID, DecisionTree, LinearModel, MaskedModel, SurrogateFitError,
                              fit_surrogate, load_model, mask_feature, model_from_dict, save_model,
                              surrogate_at_sigma, train_forest, train_linear_regression,
                              train_logistic, train_tree)
from anchorbox.oracle import ClassificationRule, RegressionRule


def gini(labels):
    if len(labels) == 0:
        return 0.0
    _, counts = np.unique(labels, return_counts=True)
    p = counts / len(labels)
    return 1.0 - float(np.sum(p * p))


def best_stump_impurity(X, y):
    """Lowest weighted Gini over every feature and every gap between sorted values."""
    best = np.inf
    n = len(y)
    for f in range(X.shape[1]):
        for t in np.unique(X[:, f])[:-1]:
            m = X[:, f] <= t
            best = min(best, (m.sum() * gini(y[m]) + (~m).sum() * gini(y[~m])) / n)
    return best


def test_sigma_grid():
    assert len(SIGMA_GRID) == 15
    assert SIGMA_GRID[0] == pytest.approx(0.01)
    assert SIGMA_GRID[-1] == pytest.approx(163.84)


def test_logistic_separates_linear_data(rng):
    X = rng.normal(size=(400, 3))
    y = (2 * X[:, 0] - X[:, 2] > 0).astype(int)
    m = train_logistic(X, y)
    assert np.mean(m.predict(X) == y) > 0.97
    np.testing.assert_allclose(m.predict_proba(X).sum(axis=1), 1.0)


def test_logistic_folds_standardization_back(rng):
    X = rng.normal(size=(300, 2)) * [100.0, 0.01] + [5000.0, -3.0]
    y = (X[:, 0] > 5000).astype(int)
    m = train_logistic(X, y)
    assert np.mean(m.predict(X) == y) > 0.95


def test_logistic_constant_labels():
    m = train_logistic(np.zeros((5, 2)), np.ones(5, dtype=int))
    assert m.constant
    assert np.all(m.predict([[3.0, -1.0]]) == 1)


def test_logistic_soft_targets(rng):
    X = rng.normal(size=(300, 2))
    P = np.column_stack([1 / (1 + np.exp(X[:, 0])), 1 - 1 / (1 + np.exp(X[:, 0]))])
    m = train_logistic(X, P, iterations=3000, step=0.5)
    np.testing.assert_allclose(m.predict_proba(X), P, atol=0.05)


def test_linear_regression_exact():
    X = np.array([[0.0, 1], [1, 0], [2, 2], [3, 1]])
    y = 2 * X[:, 0] - X[:, 1] + 0.5
    m = train_linear_regression(X, y)
    np.testing.assert_allclose(m.weights, [2, -1], atol=1e-10)
    np.testing.assert_allclose(m.bias, 0.5, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 30))
def test_stump_matches_exhaustive_split(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, (n, 2)).astype(float)
    y = rng.integers(0, 3, n)
    tree = train_tree(X, y, max_depth=1)
    if tree.n_nodes == 1:
        assert gini(y) == 0 or best_stump_impurity(X, y) == np.inf or \
            best_stump_impurity(X, y) == pytest.approx(gini(y))
        return
    leaves = tree.apply(X)
    got = sum(np.sum(leaves == l) * gini(y[leaves == l]) for l in np.unique(leaves)) / n
    assert got == pytest.approx(best_stump_impurity(X, y))


def test_tree_depth_and_purity(rng):
    X = rng.uniform(-1, 1, (500, 2))
    y = ((X[:, 0] > 0.2) & (X[:, 1] > -0.3)).astype(int)
    t = train_tree(X, y, max_depth=3)
    assert t.depth() <= 3
    assert np.mean(t.predict(X) == y) > 0.95
    full = train_tree(X, y, max_depth=None)
    assert np.all(full.predict(X) == y)


def test_regression_tree(rng):
    X = rng.uniform(0, 1, (200, 1))
    y = np.where(X[:, 0] > 0.5, 3.0, -1.0)
    t = train_tree(X, y, max_depth=1, task="regression")
    np.testing.assert_allclose(t.predict(X), y)


def test_forest_probabilities(rng):
    X = rng.normal(size=(300, 4))
    y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 1).astype(int)
    f = train_forest(X, y, n_estimators=20, rng=rng)
    P = f.predict_proba(X)
    assert P.shape == (300, 3)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    assert np.mean(f.predict(X) == y) > 0.95
    Xt = rng.normal(size=(300, 4))
    yt = (Xt[:, 0] > 0).astype(int) + (Xt[:, 1] > 1).astype(int)
    assert np.mean(f.predict(Xt) == yt) > 0.8


def test_forest_seeded(rng):
    X = rng.normal(size=(100, 3))
    y = (X[:, 0] > 0).astype(int)
    a = train_forest(X, y, 5, rng=np.random.default_rng(1))
    b = train_forest(X, y, 5, rng=np.random.default_rng(1))
    np.testing.assert_array_equal(a.predict_proba(X + 0.1), b.predict_proba(X + 0.1))


def test_model_round_trip(tmp_path, rng):
    X = rng.normal(size=(100, 3))
    y = (X[:, 0] > 0).astype(int)
    models = [train_logistic(X, y), train_tree(X, y), train_forest(X, y, 3, rng=rng),
              mask_feature(train_logistic(X, y), 1, X[0]), train_linear_regression(X, X[:, 0])]
    Q = rng.normal(size=(50, 3))
    for i, m in enumerate(models):
        path = tmp_path / f"m{i}.json"
        save_model(m, path)
        back = load_model(path)
        np.testing.assert_allclose(back(Q), m(Q))
    with pytest.raises(ValueError):
        model_from_dict({"type": "mystery"})


def test_masked_model_ignores_feature(rng):
    f = LinearModel(np.array([[1.0, -1.0], [5.0, -5.0]]), np.zeros(2), "logistic")
    m = mask_feature(f, 1, [0.0, 0.3])
    X = rng.normal(size=(20, 2))
    X2 = X.copy()
    X2[:, 1] += 100.0
    np.testing.assert_array_equal(m(X), m(X2))
    assert isinstance(m, MaskedModel)
    with pytest.raises(IndexError):
        mask_feature(f, 2, [0.0, 0.0])


def test_surrogate_of_linear_model_takes_largest_sigma(rng):
    f = LinearModel(np.array([[2.0, -2.0], [0.0, 0.0]]), np.zeros(2), "logistic")
    fit = fit_surrogate(f, np.array([0.3, 0.0]), "linear", ClassificationRule(), rng)
    # g can copy f, so sigma only stops growing once gradient descent
    # under-fits the saturated targets
    assert fit.sigma >= 10
    assert fit.faithful_fraction >= 0.99


def test_surrogate_sigma_is_largest_passing(rng):
    f = train_forest(rng.normal(size=(200, 2)), (rng.normal(size=200) > 0).astype(int), 10, rng=rng)
    a = np.zeros(2)
    try:
        fit = fit_surrogate(f, a, "tree", ClassificationRule(), rng)
    except SurrogateFitError:
        return
    passing = [s for s, fr in fit.fractions.items() if fr >= 0.99]
    assert fit.sigma in passing
    g, frac, at = surrogate_at_sigma(f, a, "tree", ClassificationRule(), fit.sigma, fit.seed)
    assert frac == fit.faithful_fraction and at


def test_surrogate_failure_on_jagged_model():
    def jagged(X):
        p = (np.sin(1e5 * X[:, 0]) > 0).astype(float)
        return np.column_stack([1 - p, p])

    with pytest.raises(SurrogateFitError, match="sigma"):
        fit_surrogate(jagged, np.array([0.0]), "linear", ClassificationRule(), np.random.default_rng(0))


def test_regression_surrogate(rng):
    f = LinearModel(np.array([1.0, 2.0]), 0.5)
    fit = fit_surrogate(f, np.zeros(2), "linear", RegressionRule(0.01), rng)
    assert fit.sigma == pytest.approx(SIGMA_GRID[-1])


def test_tree_from_arrays_validation():
    t = DecisionTree([-1], [0.0], [-1], [-1], [[0.25, 0.75]])
    assert t.constant
    np.testing.assert_allclose(t.predict_proba([[1.0]]), [[0.25, 0.75]])
