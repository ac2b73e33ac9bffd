"""
Likelihood-Ratio Testing
LR statistic against VVV, chi-square reference p-values and the parametric
bootstrap null distribution with its size-alpha rejection rule.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import gammaincc
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from src.core.config import FitConfig
from src.core.exceptions import (
    BootstrapUnstableError,
    DominanceViolationError,
    InvalidAlphaRError,
    NotANullHypothesisError,
    NumericalFailure,
)
from src.core.parallel import run_tasks, task_rng
from src.models.gaussian import DataLike, MixtureParams, as_data_matrix, sample_mixture
from src.models.model_id import VVV, ModelId, lr_degrees_of_freedom, total_params
from src.models.reports import LrTestResult
from src.services.em_engine import (
    FitResult,
    fit,
    fit_multistart,
    fit_nested_pair,
    init_from_labels,
)

logger = logging.getLogger(__name__)

DOMINANCE_SLACK = 1e-8
MAX_FAILURE_RATE = 0.05
# one try plus three retries with fresh sub-seeds
REPLICATE_ATTEMPTS = 4


def lr_statistic(l_m: float, l_vvv: float) -> float:
    """-2 (l_M - l_VVV), clamped at zero within the slack"""
    if l_vvv < l_m - DOMINANCE_SLACK:
        raise DominanceViolationError(
            f"VVV log-likelihood {l_vvv:.6f} below the null fit {l_m:.6f}"
        )
    return max(0.0, -2.0 * (l_m - l_vvv))


def chi2_pvalue(lr: float, df: int) -> float:
    """Upper chi-square tail via the regularized upper incomplete gamma"""
    if lr <= 0 or df <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, lr / 2.0))


def bootstrap_threshold(alpha: float, R: int) -> int:
    """h with alpha = 1 - h / (R + 1)"""
    if not 0 < alpha < 1 or R < 1:
        raise InvalidAlphaRError(f"Need 0 < alpha < 1 and R >= 1, got alpha={alpha}, R={R}")
    target = (1.0 - alpha) * (R + 1)
    h = int(round(target))
    if abs(target - h) > 1e-9 or not 1 <= h <= R:
        raise InvalidAlphaRError(
            f"(1 - alpha)(R + 1) = {target:.6g} is not an integer in [1, R]; "
            f"nearest valid R is {nearest_valid_replicates(alpha, R)}"
        )
    return h


def nearest_valid_replicates(alpha: float, R: int) -> int:
    """Closest R' to R with (1 - alpha)(R' + 1) integral"""
    for offset in range(0, 100_000):
        for candidate in (R - offset, R + offset):
            if candidate < 1:
                continue
            target = (1.0 - alpha) * (candidate + 1)
            if abs(target - round(target)) <= 1e-9 and 1 <= round(target) <= candidate:
                return candidate
    raise InvalidAlphaRError(f"No valid replicate count near R={R} for alpha={alpha}")


def _test_result(
    m: ModelId, p: int, k: int, lr: float, **bootstrap
) -> LrTestResult:
    df = lr_degrees_of_freedom(m, p, k)
    return LrTestResult(
        model=m.name,
        eta=total_params(m, p, k),
        lr=lr,
        df=df,
        p_chi2=chi2_pvalue(lr, df),
        **bootstrap,
    )


def chi2_test(fit_m: FitResult, fit_vvv: FitResult) -> LrTestResult:
    """Asymptotic LR test from a pair of fits"""
    lr = lr_statistic(fit_m.loglik, fit_vvv.loglik)
    return _test_result(fit_m.model, fit_m.params.p, fit_m.params.k, lr)


# =============================================================================
# Parametric bootstrap
# =============================================================================


def _replicate_lr(
    params: MixtureParams, n: int, cfg: FitConfig, seed: int, r: int
) -> Optional[float]:
    """LR of replicate r, None once every attempt has failed"""
    try:
        for attempt in Retrying(
            stop=stop_after_attempt(REPLICATE_ATTEMPTS),
            retry=retry_if_exception_type(NumericalFailure),
            reraise=True,
        ):
            with attempt:
                rng = task_rng(seed, r, attempt.retry_state.attempt_number - 1)
                values, labels = sample_mixture(params, n, rng)
                init = init_from_labels(labels, params.k)
                fit_m, fit_vvv = fit_nested_pair(values, params.model, cfg, init)
                lr = lr_statistic(fit_m.loglik, fit_vvv.loglik)
    except NumericalFailure as exc:
        logger.debug(f"Replicate {r} failed after {REPLICATE_ATTEMPTS} attempts: {exc}")
        return None
    return lr


def bootstrap_null_distribution(
    params: MixtureParams,
    n: int,
    R: int,
    cfg: Optional[FitConfig] = None,
    seed: int = 0,
    threads: int = 1,
) -> Tuple[List[float], int]:
    """
    Replicate LR statistics under the fitted null model

    Replicate r (1-based) draws from streams keyed by (seed, r) alone, so the
    result does not depend on threads or completion order. Returns the
    successful replicates in replicate order and the failure count.
    """
    if params.model == VVV:
        raise NotANullHypothesisError("Cannot bootstrap the VVV alternative")
    cfg = cfg or FitConfig()
    arguments = [(params, n, cfg, seed, r) for r in range(1, R + 1)]
    outcomes = run_tasks(_replicate_lr, arguments, threads)

    replicates = [value for value in outcomes if value is not None]
    failures = R - len(replicates)
    if failures > MAX_FAILURE_RATE * R:
        raise BootstrapUnstableError(
            f"{params.model}: {failures} of {R} bootstrap replicates failed"
        )
    if failures:
        logger.warning(
            f"{params.model}: {failures} of {R} replicates failed, counted as exceeding"
        )
    return replicates, failures


def bootstrap_pvalue(
    lr_obs: float, replicates: List[float], failures: int = 0
) -> Tuple[float, int]:
    """
    (1 + #{LR_r >= LR_obs}) / (R + 1) and the exceedance count

    Failed replicates count as exceeding LR_obs, so p stays on the grid
    {1/(R+1), ..., 1} and never drops because a replicate failed.
    """
    exceedances = int(np.sum(np.asarray(replicates) >= lr_obs)) + failures
    return (1 + exceedances) / (len(replicates) + failures + 1), exceedances


def bootstrap_result(
    fit_m: FitResult,
    fit_vvv: FitResult,
    R: int,
    cfg: Optional[FitConfig] = None,
    seed: int = 0,
    alpha: float = 0.05,
    threads: int = 1,
) -> LrTestResult:
    """Bootstrap LR test around an existing observed pair of fits"""
    lr_obs = lr_statistic(fit_m.loglik, fit_vvv.loglik)
    n = fit_m.responsibilities.shape[0]
    replicates, failures = bootstrap_null_distribution(
        fit_m.params, n, R, cfg, seed, threads
    )
    p_boot, exceedances = bootstrap_pvalue(lr_obs, replicates, failures)

    # failed replicates sit above every success; past them the threshold is infinite
    h_threshold = None
    h = bootstrap_threshold(alpha, R)
    if h <= len(replicates):
        h_threshold = float(np.sort(replicates)[h - 1])

    logger.info(
        f"{fit_m.model}: LR={lr_obs:.5f}, p_boot={p_boot:.4f} "
        f"({exceedances} of {R} replicates at least as large)"
    )
    return _test_result(
        fit_m.model,
        fit_m.params.p,
        fit_m.params.k,
        lr_obs,
        p_boot=p_boot,
        boot_replicates=replicates,
        h_threshold=h_threshold,
        exceedances=exceedances,
        successful_replicates=len(replicates),
        failed_replicates=failures,
    )


def bootstrap_test(
    data: DataLike,
    m: ModelId,
    k: int,
    R: int,
    cfg: Optional[FitConfig] = None,
    seed: int = 0,
    alpha: float = 0.05,
    threads: int = 1,
) -> LrTestResult:
    """
    Parametric bootstrap LR test of model m against VVV

    The observed m fit uses the multi-start policy; VVV then starts from its
    posteriors and factors.
    """
    if m == VVV:
        raise NotANullHypothesisError("VVV is the alternative, not a null hypothesis")
    cfg = cfg or FitConfig()
    bootstrap_threshold(alpha, R)
    data = as_data_matrix(data)

    fit_m = fit_multistart(data, m, k, cfg)
    fit_vvv = fit(data, VVV, fit_m.responsibilities, cfg, warm_start=fit_m.factors)
    return bootstrap_result(fit_m, fit_vvv, R, cfg, seed, alpha, threads)
