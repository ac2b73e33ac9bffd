"""
Simulation
Bivariate two-component scenarios built from eigen-parameters, Bhattacharyya
overlap calibration of the second mean, and p-value distribution experiments
under the null model.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq
from scipy.stats import kstest

from src.core.config import FitConfig
from src.core.exceptions import (
    InsufficientDataError,
    InvalidShapeError,
    NotANullHypothesisError,
    NumericalFailure,
    UnreachableOverlapError,
)
from src.core.parallel import run_tasks
from src.models.gaussian import (
    CovarianceFactors,
    FactorSet,
    MixtureParams,
    compose_covariance,
    sample_mixture,
)
from src.models.model_id import VVV, ModelId
from src.models.reports import ExperimentSummary, Method
from src.services.em_engine import fit_nested_pair, init_from_labels
from src.services.lr_testing import bootstrap_result, bootstrap_threshold, chi2_test

logger = logging.getLogger(__name__)

OVERLAP_TOLERANCE = 1e-10


@dataclass(frozen=True)
class ScenarioSpec:
    """
    Two equally weighted bivariate components, mu_1 = 0 and mu_2 = (0, mu_22)

    Component 2 takes the variable values for the factors the model flags V
    and the base values otherwise.
    """

    model: ModelId
    n: int
    overlap: float
    base_volume: float = 1.0
    base_delta: float = 0.7
    base_angle: float = np.pi / 6
    variable_volume: float = 3.0
    variable_delta: float = 0.3
    variable_angle: float = np.pi / 6 + np.pi / 4

    def __post_init__(self):
        if self.model == VVV:
            raise NotANullHypothesisError("Scenarios generate data under a null model")
        if self.n < 2:
            raise InsufficientDataError(f"Scenario needs n >= 2, got {self.n}")
        if not 0 < self.overlap < 1:
            raise UnreachableOverlapError(
                f"Overlap must lie in (0, 1), got {self.overlap}"
            )
        for delta in (self.base_delta, self.variable_delta):
            if not 0 < delta <= 1:
                raise InvalidShapeError(f"delta must lie in (0, 1], got {delta}")


def build_component_cov(lam: float, delta: float, gamma: float) -> CovarianceFactors:
    """lam R(gamma) diag(1/delta, delta) R(gamma)'"""
    if not 0 < delta <= 1:
        raise InvalidShapeError(f"delta must lie in (0, 1], got {delta}")
    if not lam > 0:
        raise InvalidShapeError(f"Volume must be positive, got {lam}")
    c, s = np.cos(gamma), np.sin(gamma)
    return CovarianceFactors(
        lam=float(lam),
        shape=np.array([1.0 / delta, delta]),
        orientation=np.array([[c, -s], [s, c]]),
    )


def scenario_components(
    spec: ScenarioSpec,
) -> Tuple[CovarianceFactors, CovarianceFactors]:
    first = build_component_cov(spec.base_volume, spec.base_delta, spec.base_angle)
    m = spec.model
    second = build_component_cov(
        spec.base_volume if m.common_volume else spec.variable_volume,
        spec.base_delta if m.common_shape else spec.variable_delta,
        spec.base_angle if m.common_orientation else spec.variable_angle,
    )
    return first, second


def bhattacharyya_overlap(
    mu1: ArrayLike, mu2: ArrayLike, S1: ArrayLike, S2: ArrayLike
) -> float:
    """exp(-B*) with the product normalisation sqrt(|S1| |S2|)"""
    mu1, mu2 = np.asarray(mu1, dtype=float), np.asarray(mu2, dtype=float)
    S1, S2 = np.asarray(S1, dtype=float), np.asarray(S2, dtype=float)
    mean_cov = 0.5 * (S1 + S2)
    diff = mu2 - mu1
    mahalanobis = float(diff @ np.linalg.solve(mean_cov, diff))
    log_det_mean = np.linalg.slogdet(mean_cov)[1]
    log_det_1 = np.linalg.slogdet(S1)[1]
    log_det_2 = np.linalg.slogdet(S2)[1]
    distance = mahalanobis / 8.0 + 0.5 * (log_det_mean - 0.5 * (log_det_1 + log_det_2))
    return float(np.exp(-distance))


def solve_mu22_for_overlap(target: float, S1: ArrayLike, S2: ArrayLike) -> float:
    """mu_22 >= 0 giving overlap target between N(0, S1) and N((0, mu_22), S2)"""
    S1, S2 = np.asarray(S1, dtype=float), np.asarray(S2, dtype=float)
    origin = np.zeros(S1.shape[0])

    def overlap(mu22: float) -> float:
        mu2 = origin.copy()
        mu2[-1] = mu22
        return bhattacharyya_overlap(origin, mu2, S1, S2)

    ceiling = overlap(0.0)
    if not 0 < target < ceiling:
        raise UnreachableOverlapError(
            f"Target overlap {target} must lie in (0, {ceiling:.6g}) "
            "for these covariances"
        )

    hi = 1.0
    while overlap(hi) > target:
        hi *= 2.0
    root = brentq(lambda mu22: overlap(mu22) - target, 0.0, hi, xtol=1e-14, rtol=1e-15)
    if abs(overlap(root) - target) > OVERLAP_TOLERANCE:
        raise NumericalFailure(f"Overlap root finding missed target {target}")
    return float(root)


def scenario_params(spec: ScenarioSpec) -> MixtureParams:
    first, second = scenario_components(spec)
    mu22 = solve_mu22_for_overlap(
        spec.overlap, compose_covariance(first), compose_covariance(second)
    )
    return MixtureParams(
        model=spec.model,
        weights=np.array([0.5, 0.5]),
        means=np.array([[0.0, 0.0], [0.0, mu22]]),
        factors=FactorSet.from_components(spec.model, [first, second]),
    )


def generate_dataset(
    spec: ScenarioSpec, seed
) -> Tuple[NDArray[np.float64], NDArray[np.int64]]:
    """n draws from the scenario and their true component labels"""
    return sample_mixture(scenario_params(spec), spec.n, np.random.default_rng(seed))


def _experiment_replicate(
    spec: ScenarioSpec,
    method: Method,
    R: int,
    alpha: float,
    cfg: FitConfig,
    seed: int,
    rep: int,
) -> Optional[float]:
    dataset_seed = np.random.SeedSequence(seed, spawn_key=(rep, 0))
    values, labels = generate_dataset(spec, dataset_seed)
    try:
        init = init_from_labels(labels, 2)
        fit_m, fit_vvv = fit_nested_pair(values, spec.model, cfg, init)
        if method == "bootstrap":
            boot_seed = np.random.SeedSequence(seed, spawn_key=(rep, 1)).generate_state(
                1, dtype=np.uint64
            )
            result = bootstrap_result(fit_m, fit_vvv, R, cfg, int(boot_seed[0]), alpha)
            return result.p_boot
        return chi2_test(fit_m, fit_vvv).p_chi2
    except NumericalFailure as exc:
        logger.debug(f"Experiment replicate {rep} failed: {exc}")
        return None


def pvalue_sdf_experiment(
    model: ModelId,
    n: int,
    overlap: float,
    reps: int,
    method: Method = "chi2",
    R: int = 99,
    seed: int = 0,
    cfg: Optional[FitConfig] = None,
    alpha: float = 0.05,
    threads: int = 1,
) -> ExperimentSummary:
    """
    Simulated distribution of p-values under the null model

    Datasets are fitted from their true labels. Failed replicates are
    excluded and counted. The KS distance from uniform is None when no
    p-value survives.
    """
    spec = ScenarioSpec(model=model, n=n, overlap=overlap)
    if method == "bootstrap":
        bootstrap_threshold(alpha, R)
    cfg = cfg or FitConfig(seed=seed)
    mu22 = float(scenario_params(spec).means[1, 1])

    arguments = [(spec, method, R, alpha, cfg, seed, rep) for rep in range(1, reps + 1)]
    outcomes = run_tasks(_experiment_replicate, arguments, threads)
    p_values = sorted(p for p in outcomes if p is not None)
    failures = reps - len(p_values)

    ks_distance = float(kstest(p_values, "uniform").statistic) if p_values else None
    logger.info(
        f"{model} n={n} B={overlap} {method}: {len(p_values)} p-values, "
        f"{failures} failures, KS={ks_distance}"
    )
    return ExperimentSummary(
        model=model.name,
        n=n,
        overlap=overlap,
        mu22=mu22,
        reps=reps,
        method=method,
        replicates=R if method == "bootstrap" else None,
        seed=seed,
        successes=len(p_values),
        failures=failures,
        ks_distance=ks_distance,
        p_values=p_values,
    )
