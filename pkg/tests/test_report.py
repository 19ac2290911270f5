"""Unit tests for evaluation.report module."""
import json

import numpy as np
import pandas as pd
import pytest

from common.errors import EmptyDataError, ReportError
from evaluation.report import COHORT_FILE, MANIFEST, PLOT_FILE, emit_report, results_file, software_version
from evaluation.tasks import RESULT_COLUMNS, MetricReport, TaskSpec

BOOT = {"iterations": 10, "alpha": 0.05, "seed": 0}


def _report(task_id, strata=None):
    task = TaskSpec(task_id, f"task {task_id}", ("age", "sex"), ("age",))
    row = dict.fromkeys(RESULT_COLUMNS, np.nan)
    row.update(task=task_id, estimator="t_ridge", ate=1000.0, ate_true=1100.0, ae_ate=100.0)
    return MetricReport(task=task, rows=pd.DataFrame([row], columns=RESULT_COLUMNS), bootstrap=BOOT, strata=strata)


class TestEmitReport:
    """Test report files and the run manifest."""

    def test_result_files(self, tmp_path):
        written = emit_report([_report(1), _report(2)], tmp_path / "out")
        assert set(written) == {results_file(1), results_file(2), MANIFEST}
        frame = pd.read_csv(tmp_path / "out" / "task1_results.csv")
        assert frame.columns.tolist() == RESULT_COLUMNS
        assert frame.loc[0, "ae_ate"] == 100.0

    def test_manifest(self, tmp_path):
        emit_report([_report(1)], tmp_path, run_info={"seed": 7, "config_digest": "abc"})
        manifest = json.loads((tmp_path / MANIFEST).read_text())
        assert manifest["seed"] == 7
        assert manifest["config_digest"] == "abc"
        assert manifest["bootstrap"] == BOOT
        assert manifest["tasks"][0]["adjustment"] == ["age", "sex"]
        assert manifest["tasks"][0]["estimators"] == ["t_ridge"]
        assert manifest["software"]["version"] == software_version()
        assert manifest["files"] == ["task1_results.csv"]

    def test_plot_and_cohort_files(self, tmp_path):
        strata = pd.DataFrame({"education_bin": [1, 2], "ground_truth": [10.0, 20.0], "n": [3, 4],
                               "t_ridge": [11.0, 19.0]})
        comparison = pd.DataFrame({"variable": ["age"], "statistic": ["mean"], "simulated": [38.0], "adult": [38.6]})
        written = emit_report([_report(3, strata)], tmp_path, comparison=comparison)
        assert PLOT_FILE in written and COHORT_FILE in written
        assert pd.read_csv(tmp_path / PLOT_FILE).columns.tolist() == ["education_bin", "ground_truth", "t_ridge"]
        assert pd.read_csv(tmp_path / COHORT_FILE)["adult"].tolist() == [38.6]

    def test_no_reports(self, tmp_path):
        with pytest.raises(EmptyDataError):
            emit_report([], tmp_path)

    def test_destination_is_a_file(self, tmp_path):
        target = tmp_path / "taken"
        target.write_text("x")
        with pytest.raises(ReportError):
            emit_report([_report(1)], target)
