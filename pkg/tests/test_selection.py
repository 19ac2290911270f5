"""Unit tests for learners.selection module."""
import numpy as np
import pytest

from common.errors import ConfigError, DataError, NumericError
from learners.linear import CLASSIFICATION, REGRESSION
from learners.selection import (
    AUC,
    DEFAULT_GRIDS,
    LOGISTIC,
    R2,
    RIDGE,
    LearnerSpec,
    cross_validate,
    expand_grid,
    fit_learner,
    model_from_state,
    score_model,
)
from learners.trees import BAGGED, BOOSTED


@pytest.fixture
def regression_data():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(300, 3))
    y = X @ np.array([1.0, 2.0, 0.0]) + rng.normal(scale=0.3, size=300)
    return X, y


@pytest.fixture
def binary_data():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(300, 2))
    y = (X[:, 0] + rng.normal(scale=0.5, size=300) > 0).astype(int)
    return X, y


class TestLearnerSpec:
    """Test learner descriptions."""

    def test_from_dict_flattens_params(self):
        spec = LearnerSpec.from_dict({"family": "ridge", "alpha": 2.0})
        assert spec == LearnerSpec(RIDGE, REGRESSION, {"alpha": 2.0})

    def test_with_params_overrides(self):
        spec = LearnerSpec(BAGGED, params={"n_trees": 10}).with_params(n_trees=20, max_depth=3)
        assert spec.params == {"n_trees": 20, "max_depth": 3}

    def test_dict_round_trip(self):
        spec = LearnerSpec(BOOSTED, CLASSIFICATION, {"learning_rate": 0.3})
        assert LearnerSpec.from_dict(spec.to_dict()) == spec

    @pytest.mark.parametrize("family, task", [
        ("svm", REGRESSION), (RIDGE, CLASSIFICATION), (LOGISTIC, REGRESSION), (RIDGE, "ranking"),
    ])
    def test_invalid_combinations(self, family, task):
        with pytest.raises(ConfigError):
            LearnerSpec(family, task)

    def test_missing_family(self):
        with pytest.raises(ConfigError):
            LearnerSpec.from_dict({"alpha": 1.0})


class TestFitAndScore:
    """Test fitting dispatch and held-out scoring."""

    def test_ridge_r2(self, regression_data):
        X, y = regression_data
        model = fit_learner(LearnerSpec(RIDGE), X, y)
        assert score_model(model, X, y, R2) > 0.9

    def test_logistic_auc(self, binary_data):
        X, y = binary_data
        model = fit_learner(LearnerSpec(LOGISTIC, CLASSIFICATION), X, y, classes=(0, 1))
        assert score_model(model, X, y, AUC) > 0.85

    def test_auc_nan_for_single_class_holdout(self, binary_data):
        X, y = binary_data
        model = fit_learner(LearnerSpec(LOGISTIC, CLASSIFICATION), X, y, classes=(0, 1))
        ones = y == 1
        assert np.isnan(score_model(model, X[ones], y[ones], AUC))

    @pytest.mark.parametrize("family", [RIDGE, BAGGED, BOOSTED])
    def test_model_from_state(self, regression_data, family):
        X, y = regression_data
        model = fit_learner(LearnerSpec(family, params={"n_trees": 3} if family != RIDGE else {}), X, y)
        restored = model_from_state(*model.to_state())
        np.testing.assert_allclose(restored.predict(X), model.predict(X))

    def test_unknown_stored_family(self):
        with pytest.raises(DataError):
            model_from_state({"family": "svm"}, {})


class TestExpandGrid:
    """Test hyperparameter setting enumeration."""

    def test_full_grid_when_small(self):
        settings = expand_grid(DEFAULT_GRIDS[BOOSTED], n_samples=20)
        assert len(settings) == 16

    def test_sampled_without_replacement(self):
        settings = expand_grid(DEFAULT_GRIDS[BOOSTED], n_samples=5, seed=1)
        assert len(settings) == 5
        assert len({tuple(sorted(s.items())) for s in settings}) == 5

    def test_explicit_settings(self):
        assert expand_grid([{"alpha": 1.0}]) == [{"alpha": 1.0}]

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            expand_grid([])


class TestCrossValidate:
    """Test k-fold hyperparameter selection."""

    def test_selects_from_grid_and_refits(self, regression_data):
        X, y = regression_data
        result = cross_validate(LearnerSpec(RIDGE), X, y, grid={"alpha": [0.01, 1e6]}, k=3)
        assert result.selected == {"alpha": 0.01}
        assert result.metric == R2
        assert result.best_score == max(result.scores)
        assert result.model.alpha == 0.01

    def test_contiguous_folds(self, regression_data):
        X, y = regression_data
        result = cross_validate(LearnerSpec(RIDGE), X, y, grid={"alpha": [1.0]}, k=3)
        assert result.folds == [(0, 100), (100, 200), (200, 300)]

    def test_classification_uses_auc(self, binary_data):
        X, y = binary_data
        result = cross_validate(LearnerSpec(LOGISTIC, CLASSIFICATION), X, y, grid={"C": [0.1, 1.0]}, k=3)
        assert result.metric == AUC
        assert result.model.classes == (0, 1)

    def test_workers_do_not_change_result(self, regression_data):
        """Test that threaded fold evaluation matches the serial run."""
        X, y = regression_data
        grid = {"alpha": [0.1, 10.0, 100.0]}
        serial = cross_validate(LearnerSpec(RIDGE), X, y, grid=grid, k=3, workers=1)
        threaded = cross_validate(LearnerSpec(RIDGE), X, y, grid=grid, k=3, workers=3)
        assert serial.scores == threaded.scores

    def test_fewer_samples_than_folds(self):
        with pytest.raises(NumericError):
            cross_validate(LearnerSpec(RIDGE), np.zeros((2, 1)), np.zeros(2), k=5)
