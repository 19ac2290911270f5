"""Unit tests for estimation.dml module."""
import numpy as np
import pytest

from common.errors import ConfigError, NumericError
from estimation.dml import CONSTANT, cross_fit, estimate_dml, robinson_target
from estimation.table import adjustment_design
from evaluation.metrics import r2_cate
from learners.linear import CLASSIFICATION
from learners.selection import LOGISTIC, RIDGE, LearnerSpec

OUTCOME = LearnerSpec(RIDGE)
PROPENSITY = LearnerSpec(LOGISTIC, CLASSIFICATION)


class TestCrossFit:
    """Test out-of-fold nuisance predictions."""

    def test_contiguous_folds(self, randomized_dgp):
        _, X = adjustment_design(randomized_dgp)
        nuisance = cross_fit(X, randomized_dgp.a, randomized_dgp.y, OUTCOME, PROPENSITY, k=4)
        assert nuisance.folds == [(0, 500), (500, 1000), (1000, 1500), (1500, 2000)]
        assert ((nuisance.propensity > 0) & (nuisance.propensity < 1)).all()

    def test_too_few_rows(self):
        with pytest.raises(NumericError):
            cross_fit(np.zeros((3, 1)), np.array([0, 1, 0]), np.zeros(3), OUTCOME, PROPENSITY, k=5)


class TestRobinsonTarget:
    """Test the residual-on-residual pseudo-outcome."""

    def test_target_and_weights(self):
        target, weight, usable = robinson_target([1, 0], [5.0, 1.0], np.array([0.5, 0.5]), np.array([3.0, 3.0]))
        assert target.tolist() == [4.0, 4.0]
        assert weight.tolist() == [0.25, 0.25]
        assert usable.all()

    def test_small_residuals_left_out(self):
        _, _, usable = robinson_target([1, 0], [1.0, 1.0], np.array([0.9999, 0.5]), np.zeros(2), delta=1e-3)
        assert usable.tolist() == [False, True]

    def test_default_keeps_small_residuals(self):
        """Test that near-zero residuals are down-weighted, not dropped."""
        m_a = np.array([0.9999, 0.5, 1.0])
        target, weight, usable = robinson_target([1, 0, 1], [1.0, 1.0, 2.0], m_a, np.zeros(3))
        assert usable.tolist() == [True, True, False]
        assert target[0] == pytest.approx(1e4)
        assert weight[0] == pytest.approx(1e-8)
        assert weight[2] == 0.0

    def test_no_variation(self):
        with pytest.raises(NumericError):
            robinson_target([1, 1], [1.0, 1.0], np.ones(2), np.zeros(2))


class TestEstimateDml:
    """Test DML effect estimation."""

    def test_constant_final_stage_is_partialling_out_coefficient(self, confounded_dgp):
        """Test that the constant stage equals sum(ra * ry) / sum(ra^2) on the cross-fitted residuals."""
        table, _, effect = confounded_dgp
        estimate = estimate_dml(table, OUTCOME, PROPENSITY, CONSTANT, k=5)
        _, X = adjustment_design(table)
        nuisance = cross_fit(X, table.a, table.y, OUTCOME, PROPENSITY, k=5)
        ra, ry = table.a - nuisance.propensity, table.y - nuisance.outcome
        expected = float(np.sum(ra * ry) / np.sum(ra ** 2))
        assert estimate.ate == pytest.approx(expected, abs=1e-2)
        assert abs(estimate.ate - effect) < 0.2

    def test_linear_final_stage_matches_constant_on_average(self, confounded_dgp):
        table, _, _ = confounded_dgp
        constant = estimate_dml(table, OUTCOME, PROPENSITY, CONSTANT)
        linear = estimate_dml(table, OUTCOME, PROPENSITY, LearnerSpec(RIDGE, params={"alpha": 0.0}))
        assert linear.ate == pytest.approx(constant.ate, abs=0.2)

    def test_linear_final_stage_recovers_heterogeneity(self, heterogeneous_dgp):
        table, effect = heterogeneous_dgp
        estimate = estimate_dml(table, OUTCOME, PROPENSITY, {"family": "ridge", "alpha": 0.0})
        assert r2_cate(estimate.cate, effect) > 0.8
        assert estimate.diagnostics["final"] == RIDGE

    def test_folds_recorded(self, randomized_dgp):
        estimate = estimate_dml(randomized_dgp, OUTCOME, PROPENSITY, k=2)
        assert estimate.diagnostics["folds"] == [(0, 1000), (1000, 2000)]
        assert estimate.has_cate

    def test_classification_final_stage_rejected(self, randomized_dgp):
        with pytest.raises(ConfigError):
            estimate_dml(randomized_dgp, OUTCOME, PROPENSITY, PROPENSITY)
