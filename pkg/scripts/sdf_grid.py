#!/usr/bin/env python3
"""
p-value Distribution Grid
Runs the null p-value experiment over every sample size and overlap
combination for one model and writes one summary per cell.

Usage: python -m scripts.sdf_grid --model EEE --method chi2 --out results/
"""

import argparse
import logging
import sys
from pathlib import Path

from src.core.config import FitConfig, settings
from src.models.model_id import parse_model_id
from src.repositories.data_repository import DataRepository
from src.services.simulation import pvalue_sdf_experiment

SAMPLE_SIZES = (100, 200, 500)
OVERLAPS = (0.05, 0.25, 0.45)

logger = logging.getLogger("sdf_grid")


def run_grid(model_name: str, method: str, reps: int, R: int, seed: int, out: Path) -> None:
    model = parse_model_id(model_name)
    repository = DataRepository(out)
    cfg = FitConfig(seed=seed, starts=0)
    print(f"{'n':>5}{'B':>7}{'ok':>6}{'failed':>8}{'KS':>9}")
    for n in SAMPLE_SIZES:
        for overlap in OVERLAPS:
            summary = pvalue_sdf_experiment(
                model,
                n,
                overlap,
                reps,
                method=method,
                R=R,
                seed=seed,
                cfg=cfg,
                threads=settings.threads,
            )
            stem = f"{model.name}_{method}_n{n}_B{overlap:.2f}"
            repository.write_json(summary, f"{stem}.json")
            repository.write_pvalues_csv(summary.p_values, f"{stem}_pvalues.csv")
            ks = "-" if summary.ks_distance is None else f"{summary.ks_distance:.4f}"
            print(f"{n:>5}{overlap:>7.2f}{summary.successes:>6}{summary.failures:>8}{ks:>9}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--model", default="EEE")
    parser.add_argument("--method", choices=["chi2", "bootstrap"], default="chi2")
    parser.add_argument("--reps", type=int, default=1000)
    parser.add_argument("--replicates", type=int, default=99)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("results"))
    args = parser.parse_args()

    logging.basicConfig(level=settings.log_level, stream=sys.stderr)
    run_grid(args.model, args.method, args.reps, args.replicates, args.seed, args.out)
