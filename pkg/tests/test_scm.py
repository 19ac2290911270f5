"""Tests for simulator.scm: fitting, simulation under policies and the benchmark."""
import numpy as np
import pandas as pd
import pytest

from causal.graph import unroll
from common.errors import ConfigError, DataError, EmptyDataError
from estimation.table import OUTCOME, TREATMENT
from ingestion.cohort_stats import cohort_stats, compare_cohorts
from ingestion.schema import FULL_TIME, NO_STUDIES, STUDIES_LEVELS
from simulator.config import parse_config
from simulator.samplers import education_level
from simulator.scm import (
    DIAGNOSTIC_COLUMNS,
    Policy,
    build_cate_benchmark,
    covariate_frame,
    extract_cross_section,
    fit_scm,
    simulate_panel,
    treatment_policy,
)
from tests.conftest import small_config_raw


@pytest.fixture(scope="module")
def panel(fitted_scm):
    return simulate_panel(fitted_scm, 300, 4, seed=3)


@pytest.fixture(scope="module")
def benchmark(fitted_scm):
    return build_cate_benchmark(fitted_scm, n_obs=400, n_cf=400, s_obs=0, s_cf=1, t0=2, T=4)


class TestFitScm:
    """Test fitting the simulator to the base data."""

    def test_orders_and_samplers(self, fitted_scm):
        assert fitted_scm.initial_order[0] == "age"
        assert fitted_scm.initial_order[-1] == "income"
        assert set(fitted_scm.samplers) == set(fitted_scm.variables)
        assert set(fitted_scm.rules) == set(fitted_scm.variables)

    def test_diagnostics_table(self, fitted_scm):
        diagnostics = fitted_scm.diagnostics
        assert list(diagnostics.columns) == DIAGNOSTIC_COLUMNS
        assert "gate_auc" in set(diagnostics["metric"])
        workclass = diagnostics[diagnostics["variable"] == "workclass"].iloc[0]
        assert workclass["metric"] == "auc"

    def test_income_is_calibrated(self, fitted_scm):
        sampler = fitted_scm.samplers["income"]
        assert sampler.scale != 1.0

    def test_digest_is_stable(self, fitted_scm):
        assert len(fitted_scm.digest) == 64
        assert fitted_scm.compute_digest() == fitted_scm.digest

    def test_same_seed_same_digest(self, small_config, base_dataset, fitted_scm):
        assert fit_scm(small_config, base_dataset, seed=0).digest == fitted_scm.digest

    def test_empirical_sampler_needs_parentless_variable(self, base_dataset):
        raw = small_config_raw()
        raw["variables"]["hours-per-week"]["sampler"] = {"type": "EmpiricalSampler"}
        with pytest.raises(ConfigError):
            fit_scm(parse_config(raw), base_dataset)

    def test_undeclared_redraw_input_rejected(self, base_dataset):
        """Test that a transition redrawing from an undeclared same-time parent is refused."""
        raw = small_config_raw()
        raw["variables"]["workclass"]["parents"].append("occupation")
        raw["variables"]["occupation"]["parents"].remove("workclass")
        with pytest.raises(ConfigError, match="seq_parents_curr"):
            fit_scm(parse_config(raw), base_dataset)

    def test_redraw_inputs_are_graph_edges(self, fitted_scm):
        unrolled = unroll(fitted_scm.graph, 3)
        missing = {name: [p for p in rule.redraw_inputs if not unrolled.has_edge((p, 2), (name, 2))]
                   for name, rule in fitted_scm.rules.items()}
        assert not {name: parents for name, parents in missing.items() if parents}


class TestSimulatePanel:
    """Test ancestral simulation."""

    def test_shape_and_columns(self, panel, fitted_scm):
        assert panel.n == 300
        assert panel.horizon == 4
        assert "education-num" in panel.at(1).columns
        assert set(panel.at(2)["studies"]) <= set(STUDIES_LEVELS)

    def test_age_advances(self, panel):
        np.testing.assert_array_equal(panel.at(4)["age"], panel.at(1)["age"] + 3)

    def test_time_invariant_variables(self, panel):
        for column in ("sex", "race", "native-country"):
            assert (panel.at(4)[column] == panel.at(1)[column]).all()

    def test_education_never_decreases(self, panel):
        assert (panel.at(4)["education-num"] >= panel.at(1)["education-num"]).all()

    def test_income_non_negative_and_zero_for_full_time(self, panel):
        for t in range(1, 5):
            frame = panel.at(t)
            assert (frame["income"] >= 0).all()
            assert (frame.loc[frame["studies"] == FULL_TIME, "income"] == 0).all()

    def test_reproducible(self, fitted_scm, panel):
        again = simulate_panel(fitted_scm, 300, 4, seed=3)
        for t in range(1, 5):
            pd.testing.assert_frame_equal(again.at(t), panel.at(t))

    def test_workers_and_blocks_do_not_change_results(self, fitted_scm, panel):
        """Test that thread count and block size leave every draw unchanged."""
        threaded = simulate_panel(fitted_scm, 300, 4, seed=3, workers=2, block_size=64)
        for t in range(1, 5):
            pd.testing.assert_frame_equal(threaded.at(t), panel.at(t))

    def test_prefix_of_larger_cohort(self, fitted_scm, panel):
        larger = simulate_panel(fitted_scm, 400, 4, seed=3)
        pd.testing.assert_frame_equal(larger.at(4).iloc[:300], panel.at(4))

    def test_other_seed_differs(self, fitted_scm, panel):
        other = simulate_panel(fitted_scm, 300, 4, seed=4)
        assert not other.at(1)["age"].equals(panel.at(1)["age"])

    def test_long_format_and_metadata(self, panel, tmp_path):
        long = panel.to_long()
        assert len(long) == 1200
        assert list(long.columns[:2]) == ["subject", "time"]
        path = panel.write(tmp_path / "panel.csv")
        assert path.with_suffix(".json").exists()
        assert panel.metadata()["policy"] == {"kind": "observational"}

    def test_time_outside_horizon(self, panel):
        with pytest.raises(DataError):
            panel.at(5)

    def test_invalid_size(self, fitted_scm):
        with pytest.raises(ConfigError):
            simulate_panel(fitted_scm, 0, 3)


class TestPolicies:
    """Test atomic interventions."""

    def test_scalar_intervention(self, fitted_scm):
        panel = simulate_panel(fitted_scm, 200, 3, treatment_policy(1, 2), seed=3)
        assert (panel.at(2)["studies"] == FULL_TIME).all()
        assert (panel.at(2)["income"] == 0).all()

    def test_intervention_leaves_earlier_times_unchanged(self, fitted_scm, panel):
        intervened = simulate_panel(fitted_scm, 300, 4, treatment_policy(0, 2), seed=3)
        pd.testing.assert_frame_equal(intervened.at(1), panel.at(1))

    def test_full_time_studies_raise_next_education(self, fitted_scm):
        treated = simulate_panel(fitted_scm, 400, 3, treatment_policy(1, 2), seed=3)
        control = simulate_panel(fitted_scm, 400, 3, treatment_policy(0, 2), seed=3)
        pd.testing.assert_series_equal(treated.at(2)["education"], control.at(2)["education"])
        pd.testing.assert_series_equal(control.at(3)["education"], control.at(2)["education"])
        assert education_level(treated.at(3)["education"]).mean() > education_level(control.at(3)["education"]).mean()

    def test_placebo_intervention_reproduces_observational_panel(self, fitted_scm, panel):
        """Test that forcing the values the subjects took anyway changes nothing."""
        observed = panel.at(2)["studies"].to_numpy()
        placebo = simulate_panel(fitted_scm, 300, 4, Policy.atomic("studies", 2, observed), seed=3)
        for t in range(1, 5):
            pd.testing.assert_frame_equal(placebo.at(t), panel.at(t))

    def test_per_subject_length_checked(self, fitted_scm):
        with pytest.raises(ConfigError):
            simulate_panel(fitted_scm, 10, 3, Policy.atomic("studies", 2, [FULL_TIME] * 9))

    @pytest.mark.parametrize("policy", [
        Policy.atomic("salary", 2, 1.0),
        Policy.atomic("studies", 9, FULL_TIME),
        Policy.atomic("studies", 2, "Night school"),
        Policy("stochastic"),
    ])
    def test_invalid_policies(self, fitted_scm, policy):
        with pytest.raises(ConfigError):
            simulate_panel(fitted_scm, 10, 3, policy)

    def test_treatment_must_be_binary(self):
        with pytest.raises(ConfigError):
            treatment_policy(2)


class TestInitialCohort:
    """Test that the first time step reproduces the base data marginals."""

    def test_root_marginals(self, fitted_scm, base_dataset):
        schema = [base_dataset.variables[v] for v in ("age", "sex", "race", "native-country")]
        simulated = simulate_panel(fitted_scm, 20000, 1, seed=8).at(1)
        merged = compare_cohorts(cohort_stats(simulated, schema), cohort_stats(base_dataset.frame, schema))
        rates = merged[merged["category_or_stat"].str.endswith(":rate")].fillna(0.0)
        assert (rates["value_sim"] - rates["value_adult"]).abs().max() < 0.02
        age = merged[(merged["variable"] == "age") & (merged["category_or_stat"] == "mean")].iloc[0]
        assert age["value_sim"] == pytest.approx(age["value_adult"], abs=1.0)


class TestCrossSection:
    """Test extraction of the observational estimation table."""

    def test_columns_and_roles(self, panel):
        table = extract_cross_section(panel, t0=2, T=4)
        assert {"income_prev", "studies_prev", "education-num"} <= set(table.covariates)
        assert "studies" not in table.covariates
        assert set(table.frame[TREATMENT]) <= {0, 1}
        assert table.schema["studies_prev"].categories == STUDIES_LEVELS

    def test_course_takers_dropped(self, panel):
        table = extract_cross_section(panel, t0=2, T=4)
        studies = panel.at(2)["studies"]
        assert table.dropped == int((~studies.isin([FULL_TIME, NO_STUDIES])).sum())
        assert table.n + table.dropped == panel.n

    def test_outcome_is_final_income(self, panel):
        table = extract_cross_section(panel, t0=2, T=4)
        subjects = table.frame.index.to_numpy()
        np.testing.assert_allclose(table.frame[OUTCOME], panel.at(4)["income"].to_numpy()[subjects])

    def test_subject_id_is_index(self, panel):
        """Test that the subject id is the index, not an extra column."""
        table = extract_cross_section(panel, t0=2, T=4)
        assert table.frame.index.name == "subject"
        assert list(table.frame.columns) == [*table.covariates, TREATMENT, OUTCOME]

    def test_previous_values(self, panel):
        frame = covariate_frame(panel, 2)
        np.testing.assert_allclose(frame["income_prev"], panel.at(1)["income"])

    @pytest.mark.parametrize("t0, T", [(1, 4), (4, 4)])
    def test_invalid_times(self, panel, t0, T):
        with pytest.raises(ConfigError):
            extract_cross_section(panel, t0=t0, T=T)

    def test_short_panel(self, panel):
        with pytest.raises(DataError):
            extract_cross_section(panel, t0=2, T=6)


class TestCateBenchmark:
    """Test the seed-coupled counterfactual arms."""

    def test_arms_coincide_before_treatment(self, benchmark):
        pd.testing.assert_frame_equal(benchmark.treated_panel.at(1), benchmark.control_panel.at(1))

    def test_arms_follow_policies(self, benchmark):
        assert (benchmark.treated_panel.at(2)["studies"] == FULL_TIME).all()
        assert (benchmark.control_panel.at(2)["studies"] == NO_STUDIES).all()

    def test_effects(self, benchmark):
        assert benchmark.effects.shape == (400,)
        assert benchmark.ate == pytest.approx(float(np.mean(benchmark.y1 - benchmark.y0)))
        assert np.isfinite(benchmark.effects).all()

    def test_counterfactual_covariates_match_observational(self, benchmark):
        assert set(benchmark.counterfactual.columns) == set(benchmark.observational.covariates)
        assert set(benchmark.counterfactual_schema()) == set(benchmark.observational.covariates)

    def test_seeds_must_differ(self, fitted_scm):
        with pytest.raises(ConfigError):
            build_cate_benchmark(fitted_scm, n_obs=10, n_cf=10, s_obs=1, s_cf=1, T=3)

    def test_cross_section_needs_binary_rows(self, fitted_scm):
        panel = simulate_panel(fitted_scm, 20, 3, Policy.atomic("studies", 2, "Day course"), seed=0)
        with pytest.raises(EmptyDataError):
            extract_cross_section(panel, t0=2, T=3)
