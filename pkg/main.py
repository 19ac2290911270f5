"""Command-line entry point: fit the simulator, simulate panels, build and score the benchmark."""
import argparse
from dataclasses import replace
import logging
from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))

from causal.graph import edges_frame  # noqa: E402
from common.errors import (  # noqa: E402
    ConfigError,
    DataError,
    GraphError,
    IncomeScmError,
    NumericError,
    ReportError,
)
from common.logging_setup import configure_logging  # noqa: E402
from common.settings import load_settings  # noqa: E402
from evaluation.report import emit_report  # noqa: E402
from evaluation.tasks import default_tasks, evaluate_task  # noqa: E402
from estimation.registry import ROSTER  # noqa: E402
from ingestion.adult import load_adult, preprocess  # noqa: E402
from ingestion.cohort_stats import cohort_stats, compare_cohorts  # noqa: E402
from simulator.config import load_config  # noqa: E402
from simulator.persistence import load_scm, save_scm  # noqa: E402
from simulator.scm import INCOME, build_cate_benchmark, fit_scm, simulate_panel  # noqa: E402

logger = logging.getLogger("incomescm")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
SCM_DIR = "scm"
EDGES_FILE = "graph_edges.csv"


def parse_args(argv=None):
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML simulator config (env INCOMESCM_CONFIG)")
    common.add_argument("--adult", type=Path, help="Adult file or directory (env INCOMESCM_ADULT_PATH)")
    common.add_argument("--scm", type=Path, help="Fitted-SCM archive written by 'fit'; fit on the fly when omitted")
    common.add_argument("--out", type=Path, help="Output directory (env INCOMESCM_OUT_DIR)")
    common.add_argument("--seed", type=int, help="Fit seed for 'fit', simulation seed otherwise")
    common.add_argument("--n", type=int, help="Subjects per simulated cohort")
    common.add_argument("--horizon", type=int, help="Number of simulated time steps")
    common.add_argument("--workers", type=int, help="Worker threads (env INCOMESCM_WORKERS)")
    common.add_argument("--log-level", help="Logging level (env INCOMESCM_LOG_LEVEL)")

    parser = argparse.ArgumentParser(description="IncomeSCM simulator and causal-effect benchmark.")
    verbs = parser.add_subparsers(dest="verb", required=True)
    verbs.add_parser("fit", parents=[common], help="Fit the simulator to the Adult data")
    verbs.add_parser("simulate", parents=[common], help="Simulate an observational panel")
    verbs.add_parser("benchmark", parents=[common], help="Build the observational table and counterfactual arms")
    for name, text in (("estimate", "Run estimators on benchmark tasks"),
                       ("report", "Run every task and write the full report")):
        verb = verbs.add_parser(name, parents=[common], help=text)
        verb.add_argument("--task", type=int, choices=(1, 2, 3), action="append",
                          help="Task id; repeat for several (default: all)")
        verb.add_argument("--estimators", help=f"Comma-separated presets (default: {','.join(ROSTER)})")
        verb.add_argument("--no-tune", action="store_true", help="Skip cross-validated hyperparameter selection")
    verbs.add_parser("stats", parents=[common], help="Compare a simulated t=1 cohort with the Adult data")
    return parser.parse_args(argv)


def _base(args, settings, config):
    return preprocess(load_adult(args.adult or settings.adult_path), merge_married=config.merge_married)


def _scm(args, settings, config):
    if args.scm:
        scm = load_scm(args.scm)
        if scm.config.digest != config.digest:
            logger.warning("archive %s was fit with a different config (%s); using the archived config",
                           args.scm, scm.config.digest[:12])
        return scm
    return fit_scm(config, _base(args, settings, config))


def _benchmark_config(args, config):
    bench = config.benchmark
    if args.n is not None:
        bench = replace(bench, n_obs=args.n, n_cf=args.n)
    if args.horizon is not None:
        bench = replace(bench, horizon=args.horizon)
    if args.seed is not None:
        bench = replace(bench, seed_obs=args.seed, seed_cf=args.seed + 1)
    return bench


def _build_benchmark(scm, bench, workers):
    return build_cate_benchmark(scm, n_obs=bench.n_obs, n_cf=bench.n_cf, s_obs=bench.seed_obs, s_cf=bench.seed_cf,
                                t0=bench.t0, T=bench.horizon, workers=workers)


def run_fit(args, settings, config, out):
    scm = fit_scm(config, _base(args, settings, config), seed=args.seed)
    save_scm(scm, out / SCM_DIR)
    try:
        scm.diagnostics.to_csv(out / "fit_diagnostics.csv", index=False)
    except OSError as err:
        raise ReportError(f"cannot write fit diagnostics to {out}: {err}") from err


def run_simulate(args, settings, config, out):
    scm = _scm(args, settings, config)
    seed = 0 if args.seed is None else args.seed
    horizon = args.horizon or config.horizon
    panel = simulate_panel(scm, args.n or config.benchmark.n_obs, horizon, seed=seed, workers=settings.workers,
                           block_size=config.block_size)
    panel.write(out / f"panel_seed{seed}.csv")


def run_benchmark(args, settings, config, out):
    bench = _benchmark_config(args, config)
    benchmark = _build_benchmark(_scm(args, settings, config), bench, settings.workers)
    frame = benchmark.counterfactual.assign(y1=benchmark.y1, y0=benchmark.y0, effect=benchmark.effects)
    try:
        out.mkdir(parents=True, exist_ok=True)
        benchmark.observational.write(out / "observational.csv")
        frame.to_csv(out / "counterfactual.csv", index=False)
    except OSError as err:
        raise ReportError(f"cannot write counterfactual table to {out}: {err}") from err


def _estimators(args):
    if not args.estimators:
        return ROSTER
    names = tuple(name.strip() for name in args.estimators.split(",") if name.strip())
    if not names:
        raise ConfigError("--estimators lists no estimator")
    return names


def run_tasks(args, settings, config, out, with_comparison):
    bench = _benchmark_config(args, config)
    scm = _scm(args, settings, config)
    benchmark = _build_benchmark(scm, bench, settings.workers)
    tasks = default_tasks(scm.graph, benchmark.observational.covariates, bench.t0, bench.horizon,
                          bench.education_bins)
    reports = [
        evaluate_task(tasks[task_id], benchmark, estimators=_estimators(args), overrides=config.estimators,
                      tune=not args.no_tune, k=bench.cv_folds, n_samples=bench.cv_samples, seed=bench.seed_obs,
                      workers=settings.workers, clip=bench.propensity_clip, iterations=bench.bootstrap_iterations,
                      alpha=bench.alpha, bootstrap_seed=bench.bootstrap_seed)
        for task_id in sorted(set(args.task or tasks))
    ]
    comparison = _comparison(args, settings, config, scm, bench.n_obs, bench.seed_obs) if with_comparison else None
    run_info = {
        "config_digest": config.digest,
        "scm_digest": scm.digest,
        "seeds": {"observational": bench.seed_obs, "counterfactual": bench.seed_cf,
                  "bootstrap": bench.bootstrap_seed},
        "n_obs": bench.n_obs,
        "n_cf": bench.n_cf,
        "dropped_rows": benchmark.observational.dropped,
        "ate_true": benchmark.ate,
    }
    emit_report(reports, out, comparison=comparison, run_info=run_info)


def _comparison(args, settings, config, scm, n, seed):
    base = _base(args, settings, config)
    schema = [v for v in base.schema if v.name != INCOME]
    simulated = simulate_panel(scm, n, 1, seed=seed, workers=settings.workers, block_size=config.block_size).at(1)
    return compare_cohorts(cohort_stats(simulated, schema), cohort_stats(base.frame, schema))


def run_stats(args, settings, config, out):
    scm = _scm(args, settings, config)
    seed = 0 if args.seed is None else args.seed
    comparison = _comparison(args, settings, config, scm, args.n or config.benchmark.n_obs, seed)
    try:
        out.mkdir(parents=True, exist_ok=True)
        comparison.to_csv(out / "cohort_stats.csv", index=False)
        edges_frame(scm.graph).to_csv(out / EDGES_FILE, index=False)
    except OSError as err:
        raise ReportError(f"cannot write statistics to {out}: {err}") from err


VERBS = {
    "fit": run_fit,
    "simulate": run_simulate,
    "benchmark": run_benchmark,
    "estimate": lambda args, settings, config, out: run_tasks(args, settings, config, out, with_comparison=False),
    "report": lambda args, settings, config, out: run_tasks(args, settings, config, out, with_comparison=True),
    "stats": run_stats,
}


def exit_code(err):
    if isinstance(err, (ConfigError, GraphError)):
        return EXIT_CONFIG
    if isinstance(err, NumericError):
        return EXIT_NUMERIC
    if isinstance(err, (DataError, ReportError)):
        return EXIT_DATA
    return 1


def main(argv=None):
    args = parse_args(argv)
    try:
        settings = load_settings()
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            settings = replace(settings, workers=args.workers)
        configure_logging(args.log_level or settings.log_level)
        config = load_config(args.config or settings.config_path)
        out = args.out or settings.out_dir
        VERBS[args.verb](args, settings, config, Path(out))
    except IncomeScmError as err:
        logger.error("%s failed: %s", args.verb, err)
        return exit_code(err)
    logger.info("%s finished", args.verb)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
