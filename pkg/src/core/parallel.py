"""
Replicate Task Runner
Independent replicate tasks with per-task seeding and index-ordered results.
"""

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Any, Callable, List, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def task_rng(seed: int, task: int, attempt: int = 0) -> np.random.Generator:
    """Generator whose stream depends only on (seed, task, attempt)"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(task, attempt)))


def run_tasks(
    func: Callable[..., Any], arguments: Sequence[tuple], threads: int = 1
) -> List[Any]:
    """
    Run func(*args) for every entry of arguments

    Results come back in submission order whatever the completion order, so
    aggregation does not depend on scheduling. func must be a module-level
    callable when threads > 1.
    """
    if threads <= 1 or len(arguments) <= 1:
        return [func(*args) for args in arguments]

    results: List[Any] = [None] * len(arguments)
    workers = min(threads, len(arguments))
    logger.info(f"Running {len(arguments)} tasks on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {
            executor.submit(func, *args): index for index, args in enumerate(arguments)
        }
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return results
