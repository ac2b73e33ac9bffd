"""
GPCM Toolkit Entry Point

Command-line front end over the library:
- fit: one model, multi-start EM
- closed-test: LR tests of the seven null models against VVV and model selection
- ic: information criteria for the whole family
- simulate: p-value distribution under an overlap-calibrated null scenario

JSON reports go to --output (or stdout), logs to stderr.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from src.core.config import RunConfig, settings
from src.core.exceptions import (
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    NumericalFailure,
    ValidationFailure,
)
from src.models.model_id import parse_model_id
from src.repositories.data_repository import DataRepository
from src.services.closed_testing import closed_test
from src.services.em_engine import fit_hierarchy, fit_multistart
from src.services.scoring import fit_report, ic_table
from src.services.simulation import pvalue_sdf_experiment
from src.utils.formatting import (
    format_closed_test_table,
    format_error,
    format_fit_summary,
    format_ic_table,
)

logger = logging.getLogger(__name__)


def configure_logging() -> None:
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=2, help="Number of components.")
    parser.add_argument("--seed", type=int, default=0, help="Master RNG seed.")
    parser.add_argument(
        "--starts", type=int, default=20, help="Random EM starts per model."
    )
    parser.add_argument(
        "--epsilon", type=float, default=1e-6, help="Aitken stopping threshold."
    )
    parser.add_argument("--max-iter", type=int, default=1000, help="EM iteration cap.")
    parser.add_argument(
        "--init-mode",
        choices=["soft", "hard"],
        default="soft",
        help="Random initialization of the posteriors.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=settings.threads,
        help="Worker processes for replicates (default from GPCM_THREADS).",
    )
    parser.add_argument("--output", help="Write the JSON report here instead of stdout.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpcm",
        description="Eigen-decomposed Gaussian mixtures: EM, LR tests, closed testing.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    fit_cmd = commands.add_parser("fit", help="Fit one model by multi-start EM.")
    fit_cmd.add_argument("input", help="CSV of observations.")
    fit_cmd.add_argument("--model", required=True, help="Model name, e.g. VVE.")
    _add_common(fit_cmd)

    test_cmd = commands.add_parser(
        "closed-test", help="Closed LR testing procedure over the family."
    )
    test_cmd.add_argument("input", help="CSV of observations.")
    test_cmd.add_argument("--method", choices=["chi2", "bootstrap"], default="chi2")
    test_cmd.add_argument("--alpha", type=float, default=0.05)
    test_cmd.add_argument(
        "--replicates", type=int, default=999, help="Bootstrap replicates R."
    )
    _add_common(test_cmd)

    ic_cmd = commands.add_parser("ic", help="Information criteria for all eight models.")
    ic_cmd.add_argument("input", help="CSV of observations.")
    _add_common(ic_cmd)

    sim_cmd = commands.add_parser(
        "simulate", help="Null distribution of p-values for a bivariate scenario."
    )
    sim_cmd.add_argument("--model", required=True, help="Null model generating the data.")
    sim_cmd.add_argument("--n", type=int, required=True, help="Sample size.")
    sim_cmd.add_argument(
        "--overlap", type=float, required=True, help="Bhattacharyya overlap in (0, 1)."
    )
    sim_cmd.add_argument("--reps", type=int, default=200, help="Simulated datasets.")
    sim_cmd.add_argument("--method", choices=["chi2", "bootstrap"], default="chi2")
    sim_cmd.add_argument("--alpha", type=float, default=0.05)
    sim_cmd.add_argument("--replicates", type=int, default=99)
    sim_cmd.add_argument(
        "--pvalues-csv", help="Sorted p-values (default: next to --output)."
    )
    _add_common(sim_cmd)
    return parser


def _table_stream(run: RunConfig):
    """Tables share stdout only when the JSON goes to a file"""
    return sys.stderr if run.output is None else sys.stdout


def _emit(repository: DataRepository, report, run: RunConfig) -> None:
    payload = repository.write_json(report, run.output)
    if run.output is None:
        sys.stdout.write(payload)


def run_fit(run: RunConfig, repository: DataRepository) -> None:
    loaded = repository.load_csv(run.input)
    model = parse_model_id(run.model)
    result = fit_multistart(loaded.data, model, run.k, run.fit_config())
    report = fit_report(result, loaded.labels)
    print(format_fit_summary(report), file=sys.stderr)
    _emit(repository, report, run)


def run_closed_test(run: RunConfig, repository: DataRepository) -> None:
    loaded = repository.load_csv(run.input)
    report = closed_test(
        loaded.data,
        run.k,
        method=run.method,
        alpha=run.alpha,
        R=run.replicates,
        cfg=run.fit_config(),
        seed=run.seed,
        threads=run.threads,
    )
    print(format_closed_test_table(report), file=_table_stream(run))
    _emit(repository, report, run)


def run_ic(run: RunConfig, repository: DataRepository) -> None:
    loaded = repository.load_csv(run.input)
    family = fit_hierarchy(loaded.data, run.k, run.fit_config())
    table = ic_table(family, loaded.data.n)
    print(format_ic_table(table), file=_table_stream(run))
    _emit(repository, table, run)


def run_simulate(run: RunConfig, repository: DataRepository) -> None:
    summary = pvalue_sdf_experiment(
        parse_model_id(run.model),
        run.n,
        run.overlap,
        run.reps,
        method=run.method,
        R=run.replicates,
        seed=run.seed,
        cfg=run.fit_config(),
        alpha=run.alpha,
        threads=run.threads,
    )
    csv_path = run.pvalues_csv
    if csv_path is None and run.output is not None:
        output = Path(run.output)
        csv_path = str(output.with_name(f"{output.stem}_pvalues.csv"))
    if csv_path is not None:
        repository.write_pvalues_csv(summary.p_values, csv_path)
    _emit(repository, summary, run)


COMMANDS = {
    "fit": run_fit,
    "closed-test": run_closed_test,
    "ic": run_ic,
    "simulate": run_simulate,
}


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        options = {key: value for key, value in vars(args).items() if value is not None}
        run = RunConfig(**options)
        logger.info(f"Running {run.command}")
        COMMANDS[run.command](run, DataRepository())
    except (ValidationFailure, ValidationError) as exc:
        print(format_error(exc), file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        print(format_error(exc), file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
