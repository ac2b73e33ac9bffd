"""
EM Engine
E-step, sufficient statistics, Aitken stopping rule, the constrained EM loop
and the random, nested and hierarchical initialization strategies.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from src.core.config import FitConfig
from src.core.exceptions import (
    ComponentCollapseError,
    InsufficientDataError,
    NumericalFailure,
    NumericalUnderflowError,
)
from src.models.gaussian import (
    DataLike,
    FactorSet,
    MixtureParams,
    Responsibilities,
    SufficientStats,
    as_data_matrix,
    component_log_densities,
    map_classification,
)
from src.models.model_id import (
    ALL_MODELS,
    EEE,
    VVV,
    ModelId,
    hierarchy_level,
    hierarchy_parents,
)
from src.services.mstep import mstep

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]


@dataclass
class FitResult:
    """Outcome of one EM run"""

    model: ModelId
    params: MixtureParams
    responsibilities: Responsibilities
    loglik_trace: List[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]

    @property
    def classification(self) -> NDArray[np.int64]:
        return map_classification(self.responsibilities)

    @property
    def factors(self) -> FactorSet:
        return self.params.factors


def e_step(data: DataLike, params: MixtureParams) -> Tuple[Responsibilities, float]:
    """Posterior probabilities and the observed-data log-likelihood"""
    weighted = component_log_densities(data, params)
    log_norm = logsumexp(weighted, axis=1)
    if not np.all(np.isfinite(log_norm)):
        rows = np.flatnonzero(~np.isfinite(log_norm))
        raise NumericalUnderflowError(
            f"All component densities vanish for {rows.size} rows (first {rows[0]})"
        )
    z = np.exp(weighted - log_norm[:, None])
    return z, float(log_norm.sum())


def sufficient_stats(
    data: DataLike, z: ArrayLike, min_weight: float = 0.0
) -> SufficientStats:
    """n_j, weighted means and weighted scatter matrices W_j"""
    values = as_data_matrix(data).values
    z = np.asarray(z, dtype=float)
    counts = z.sum(axis=0)
    for j, count in enumerate(counts):
        if count < min_weight or count <= 0:
            raise ComponentCollapseError(j, float(count), float(min_weight))

    means = (z.T @ values) / counts[:, None]
    scatters = np.empty((z.shape[1], values.shape[1], values.shape[1]))
    for j in range(z.shape[1]):
        centered = values - means[j]
        scatter = (centered * z[:, j, None]).T @ centered
        scatters[j] = 0.5 * (scatter + scatter.T)
    return SufficientStats(counts=counts, means=means, scatters=scatters)


def aitken_converged(l_q: float, l_q1: float, l_q2: float, epsilon: float) -> bool:
    """Stop when the Aitken estimate of the limit is within epsilon of l_q1"""
    step = l_q1 - l_q
    if step == 0:
        return (l_q2 - l_q1) < epsilon
    rate = (l_q2 - l_q1) / step
    if rate >= 1:
        return (l_q2 - l_q1) < epsilon
    limit = l_q1 + (l_q2 - l_q1) / (1.0 - rate)
    return (limit - l_q1) < epsilon


def _validate_init(init: ArrayLike, n: int) -> Responsibilities:
    z = np.asarray(init, dtype=float)
    if z.ndim != 2 or z.shape[0] != n or z.shape[1] < 1:
        raise ValueError(f"Initial responsibilities must be {n} x k, got {z.shape}")
    if np.any(z < 0) or np.max(np.abs(z.sum(axis=1) - 1.0)) > 1e-8:
        raise ValueError("Initial responsibility rows must be non-negative and sum to 1")
    return z


def fit(
    data: DataLike,
    m: ModelId,
    init: ArrayLike,
    cfg: Optional[FitConfig] = None,
    warm_start: Optional[FactorSet] = None,
) -> FitResult:
    """
    Constrained EM from initial responsibilities

    Each iteration runs the M-step (weights, means, covariance factors) and
    then the E-step. warm_start seeds the iterative covariance solvers; it may
    come from any model nested in m.
    """
    cfg = cfg or FitConfig()
    data = as_data_matrix(data)
    z = _validate_init(init, data.n)
    k = z.shape[1]
    if data.n < k:
        raise InsufficientDataError(f"n={data.n} observations cannot fill k={k} components")

    floor = cfg.resolved_min_weight(data.p)
    factors = warm_start
    trace: List[float] = []
    converged = False
    params = None

    for iteration in range(1, cfg.max_iter + 1):
        try:
            stats = sufficient_stats(data, z, floor)
        except ComponentCollapseError as exc:
            raise exc.with_trace(trace) from None

        factors = mstep(m, stats, factors, cfg.mstep)
        params = MixtureParams(
            model=m,
            weights=stats.counts / stats.n,
            means=stats.means,
            factors=factors,
        )
        z, loglik = e_step(data, params)
        trace.append(loglik)

        if len(trace) >= 2 and trace[-2] - trace[-1] > 1e-8 * max(1.0, abs(trace[-2])):
            logger.debug(f"{m}: log-likelihood dipped at iteration {iteration}")
        if len(trace) >= 3 and aitken_converged(*trace[-3:], cfg.epsilon):
            converged = True
            break

    if not converged:
        logger.warning(f"{m}: EM stopped at max_iter={cfg.max_iter} without converging")

    return FitResult(
        model=m,
        params=params,
        responsibilities=z,
        loglik_trace=trace,
        converged=converged,
        iterations=len(trace),
    )


# =============================================================================
# Initialization
# =============================================================================


def init_random(n: int, k: int, mode: str = "soft", seed: Seed = 0) -> Responsibilities:
    """Dirichlet(1, ..., 1) rows (soft) or uniform one-hot rows (hard)"""
    if not n >= k >= 1:
        raise InsufficientDataError(f"Need n >= k >= 1, got n={n}, k={k}")
    rng = np.random.default_rng(seed)
    if mode == "soft":
        return rng.dirichlet(np.ones(k), size=n)
    if mode == "hard":
        return init_from_labels(rng.integers(k, size=n), k)
    raise ValueError(f"Unknown init mode: {mode}")


def init_from_labels(labels: Sequence[int], k: int) -> Responsibilities:
    """One-hot responsibilities from known component labels"""
    labels = np.asarray(labels, dtype=int)
    z = np.zeros((labels.size, k))
    z[np.arange(labels.size), labels] = 1.0
    return z


def start_seed(seed: int, start: int) -> np.random.SeedSequence:
    """Independent stream for random start number start"""
    return np.random.SeedSequence(seed, spawn_key=(start,))


def fit_nested_pair(
    data: DataLike,
    m: ModelId,
    cfg: Optional[FitConfig] = None,
    init: Optional[ArrayLike] = None,
    k: Optional[int] = None,
) -> Tuple[FitResult, FitResult]:
    """
    Fit m, then VVV from m's final posteriors and factors

    Without init, m starts from init_random with cfg's mode and seed, which
    needs k.
    """
    cfg = cfg or FitConfig()
    data = as_data_matrix(data)
    if init is None:
        if k is None:
            raise ValueError("fit_nested_pair needs init or k")
        init = init_random(data.n, k, cfg.init_mode, cfg.seed)
    fit_m = fit(data, m, init, cfg)
    fit_vvv = fit(data, VVV, fit_m.responsibilities, cfg, warm_start=fit_m.factors)
    return fit_m, fit_vvv


def _best(fits: Sequence[FitResult]) -> FitResult:
    # max keeps the first of equal log-likelihoods
    return max(fits, key=lambda result: result.loglik)


def fit_hierarchy(
    data: DataLike,
    k: int,
    cfg: Optional[FitConfig] = None,
    init: Optional[ArrayLike] = None,
) -> Dict[ModelId, FitResult]:
    """
    EEE from init, then every model from the better of its parents

    Children start from the parent's posteriors and factors, which yields
    l_parent <= l_child along every arrow of the hierarchy.
    """
    cfg = cfg or FitConfig()
    data = as_data_matrix(data)
    if init is None:
        init = init_random(data.n, k, cfg.init_mode, cfg.seed)

    fits: Dict[ModelId, FitResult] = {EEE: fit(data, EEE, init, cfg)}
    for m in ALL_MODELS[1:]:
        parent = _best([fits[p] for p in hierarchy_parents(m)])
        fits[m] = fit(data, m, parent.responsibilities, cfg, warm_start=parent.factors)
        logger.debug(
            f"Hierarchy level {hierarchy_level(m)}: {m} from {parent.model}, "
            f"l={fits[m].loglik:.4f}"
        )
    return fits


def _random_start_fits(
    data, models: Sequence[ModelId], k: int, cfg: FitConfig
) -> Dict[ModelId, List[FitResult]]:
    results: Dict[ModelId, List[FitResult]] = {m: [] for m in models}
    for start in range(cfg.starts):
        init = init_random(data.n, k, cfg.init_mode, start_seed(cfg.seed, start + 1))
        for m in models:
            try:
                results[m].append(fit(data, m, init, cfg))
            except NumericalFailure as exc:
                logger.debug(f"{m}: random start {start + 1} failed: {exc}")
    return results


def _hierarchical_start(data, k: int, cfg: FitConfig) -> Dict[ModelId, FitResult]:
    try:
        return fit_hierarchy(data, k, cfg, init_random(data.n, k, cfg.init_mode, cfg.seed))
    except NumericalFailure as exc:
        logger.warning(f"Hierarchical start failed: {exc}")
        return {}


def fit_multistart(
    data: DataLike, m: ModelId, k: int, cfg: Optional[FitConfig] = None
) -> FitResult:
    """Best of cfg.starts random starts plus the hierarchical start"""
    cfg = cfg or FitConfig()
    data = as_data_matrix(data)
    candidates = _random_start_fits(data, [m], k, cfg)[m]
    hierarchical = _hierarchical_start(data, k, cfg)
    if m in hierarchical:
        candidates.insert(0, hierarchical[m])
    if not candidates:
        # every start failed; rerun the seeded start so its error surfaces
        return fit(data, m, init_random(data.n, k, cfg.init_mode, cfg.seed), cfg)
    return _best(candidates)


def fit_family(
    data: DataLike, k: int, cfg: Optional[FitConfig] = None
) -> Dict[ModelId, FitResult]:
    """
    Multi-start fits for all eight models with the log-likelihood ranking

    After the starts, each model is refitted from its best parent (posteriors
    and factors) and the better of the two fits is kept, walking down the
    hierarchy so every parent is already final when its children are repaired.
    """
    cfg = cfg or FitConfig()
    data = as_data_matrix(data)
    random_fits = _random_start_fits(data, ALL_MODELS, k, cfg)
    hierarchical = _hierarchical_start(data, k, cfg)

    family: Dict[ModelId, FitResult] = {}
    for m in ALL_MODELS:
        candidates = ([hierarchical[m]] if m in hierarchical else []) + random_fits[m]
        parents = [family[p] for p in hierarchy_parents(m) if p in family]
        if parents:
            parent = _best(parents)
            try:
                candidates.append(
                    fit(data, m, parent.responsibilities, cfg, warm_start=parent.factors)
                )
            except NumericalFailure as exc:
                logger.debug(f"{m}: repair from {parent.model} failed: {exc}")
        if not candidates:
            candidates.append(
                fit(data, m, init_random(data.n, k, cfg.init_mode, cfg.seed), cfg)
            )
        family[m] = _best(candidates)
        logger.info(f"{m}: 2l = {2 * family[m].loglik:.4f} ({len(candidates)} fits)")
    return family
