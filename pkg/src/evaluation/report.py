"""Report files: per-task result tables, cohort comparison, Task-3 plot data and a run manifest."""
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
import json
import logging
from pathlib import Path

from common.errors import EmptyDataError, ReportError
from simulator.scm import json_default

logger = logging.getLogger(__name__)

PACKAGE = "incomescm"
MANIFEST = "manifest.json"
COHORT_FILE = "cohort_stats.csv"
PLOT_FILE = "task3_plot.csv"


def software_version():
    try:
        return version(PACKAGE)
    except PackageNotFoundError:
        return "0.1.0"


def results_file(task_id):
    return f"task{task_id}_results.csv"


def emit_report(reports, destination, comparison=None, run_info=None):
    """Write every report under ``destination``.

    Args:
        reports: Iterable of MetricReport, at least one
        destination: Output directory, created when missing
        comparison: Optional simulated-vs-Adult cohort table (compare_cohorts output)
        run_info: Extra manifest fields such as seeds and the config digest

    Returns:
        Dict of written file name -> path
    """
    reports = list(reports)
    if not reports:
        raise EmptyDataError("report set")
    destination = Path(destination)
    written = {}
    try:
        destination.mkdir(parents=True, exist_ok=True)
        for report in reports:
            name = results_file(report.task.id)
            report.rows.to_csv(destination / name, index=False)
            written[name] = destination / name
            if report.strata is not None:
                report.strata.drop(columns=["n"], errors="ignore").to_csv(destination / PLOT_FILE, index=False)
                written[PLOT_FILE] = destination / PLOT_FILE
        if comparison is not None:
            comparison.to_csv(destination / COHORT_FILE, index=False)
            written[COHORT_FILE] = destination / COHORT_FILE

        manifest = {
            "software": {"name": PACKAGE, "version": software_version()},
            "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "tasks": [{"id": r.task.id, "name": r.task.name, "adjustment": list(r.task.adjustment),
                       "conditioning": list(r.task.conditioning), "estimators": r.rows["estimator"].tolist()}
                      for r in reports],
            "bootstrap": reports[0].bootstrap,
            "files": sorted(written),
            **(run_info or {}),
        }
        (destination / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=json_default))
        written[MANIFEST] = destination / MANIFEST
    except OSError as err:
        raise ReportError(f"cannot write report to {destination}: {err}") from err
    logger.info("Wrote %d report files to %s", len(written), destination)
    return written
