"""Unit tests for learners.trees module."""
import numpy as np
import pytest

from common.errors import DataError, NumericError
from learners.linear import CLASSIFICATION, REGRESSION
from learners.trees import (
    BAGGED,
    BOOSTED,
    TreeEnsemble,
    fit_bagged_trees,
    fit_boosted_trees,
    fit_tree_ensemble,
)


@pytest.fixture
def step_data():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(600, 2))
    y = np.where(X[:, 0] > 0, 5.0, -5.0) + rng.normal(scale=0.1, size=600)
    return X, y


@pytest.fixture
def labelled_data():
    rng = np.random.default_rng(4)
    X = rng.uniform(-1, 1, size=(600, 2))
    y = np.where(X[:, 0] > 0.3, "high", np.where(X[:, 0] < -0.3, "low", "mid"))
    return X, y


class TestBaggedTrees:
    """Test bootstrap-averaged regression and classification trees."""

    def test_regression_fits_step(self, step_data):
        X, y = step_data
        model = fit_bagged_trees(X, y, n_trees=10, min_samples_leaf=5)
        assert model.family == BAGGED
        assert model.train_rmse < 1.0
        assert model.predict(np.array([[0.5, 0.0], [-0.5, 0.0]])) == pytest.approx([5.0, -5.0], abs=0.5)

    def test_classification_probabilities(self, labelled_data):
        X, y = labelled_data
        model = fit_bagged_trees(X, y, task=CLASSIFICATION, n_trees=10, classes=("low", "mid", "high"))
        proba = model.predict_proba(X)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0)
        assert (model.predict(X) == y).mean() > 0.9

    def test_decision_function_is_finite(self, labelled_data):
        """Test that zero leaf probabilities are floored before the log."""
        X, y = labelled_data
        model = fit_bagged_trees(X, y, task=CLASSIFICATION, n_trees=3, classes=("low", "mid", "high", "never"))
        assert np.isfinite(model.decision_function(X)).all()

    def test_same_seed_same_model(self, step_data):
        X, y = step_data
        first = fit_bagged_trees(X, y, n_trees=5, seed=9).predict(X)
        second = fit_bagged_trees(X, y, n_trees=5, seed=9).predict(X)
        np.testing.assert_array_equal(first, second)

    def test_regression_has_no_probabilities(self, step_data):
        model = fit_bagged_trees(*step_data, n_trees=2)
        with pytest.raises(DataError):
            model.predict_proba(step_data[0])

    def test_insufficient_samples(self):
        with pytest.raises(NumericError):
            fit_bagged_trees(np.zeros((6, 1)), np.zeros(6), min_samples_leaf=5)


class TestBoostedTrees:
    """Test gradient-boosted ensembles."""

    def test_regression_improves_on_mean(self, step_data):
        X, y = step_data
        model = fit_boosted_trees(X, y, n_trees=20, max_depth=2)
        assert model.family == BOOSTED
        assert model.train_rmse < 0.2 * y.std()

    def test_more_stages_lower_training_error(self, step_data):
        X, y = step_data
        short = fit_boosted_trees(X, y, n_trees=2, learning_rate=0.1)
        long = fit_boosted_trees(X, y, n_trees=30, learning_rate=0.1)
        assert long.train_rmse < short.train_rmse

    def test_classification(self, labelled_data):
        X, y = labelled_data
        model = fit_boosted_trees(X, y, task=CLASSIFICATION, n_trees=20, max_depth=2)
        assert model.classes == ("high", "low", "mid")
        np.testing.assert_allclose(model.predict_proba(X).sum(axis=1), 1.0)
        assert (model.predict(X) == y).mean() > 0.9


class TestTreePersistence:
    """Test flattening into npz-ready arrays."""

    @pytest.mark.parametrize("family", [BAGGED, BOOSTED])
    def test_state_round_trip(self, step_data, family):
        X, y = step_data
        model = fit_tree_ensemble(X, y, task=REGRESSION, family=family, n_trees=4)
        meta, arrays = model.to_state()
        restored = TreeEnsemble.from_state(meta, arrays)
        np.testing.assert_allclose(restored.predict(X), model.predict(X))
        assert all(isinstance(value, np.ndarray) for value in arrays.values())

    def test_unknown_family(self, step_data):
        with pytest.raises(DataError):
            fit_tree_ensemble(*step_data, family="forest")
