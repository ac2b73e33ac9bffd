"""
Covariance M-Steps
Constrained minimization over the covariance factors of

    F = sum_j [tr(W_j Sigma_j^{-1}) + n_j log|Sigma_j|]

Closed forms for EEE, EEV, EVV, VVV; alternating conditional updates for VEE
and VEV; ordered eigenvalue programs around a common orientation for EVE, VVE.
The common orientation is searched from several eigenbasis seeds, each refined
by alternating updates and profiled plane rotations. Iterative solvers start
from the previous factors and only accept progress.
"""

import logging
from functools import partial
from itertools import permutations
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar

from src.core.config import MStepConfig
from src.core.exceptions import DecompositionError, DegenerateScatterError
from src.models.gaussian import (
    FactorSet,
    SufficientStats,
    decompose_covariance,
    orient_columns,
    sorted_eigh,
)
from src.models.model_id import EEE, EEV, EVE, EVV, VEE, VEV, VVE, VVV, ModelId
from src.services.ordered_solver import (
    ordered_eigenvalue_solve,
    pav_ordered_solution,
)
from src.services.orientation import update_common_orientation

logger = logging.getLogger(__name__)

DEGENERACY_TOLERANCE = 1e-12


def _projected_diagonals(
    scatters: NDArray[np.float64], orientations: NDArray[np.float64]
) -> NDArray[np.float64]:
    """b_jl = g_l' W_j g_l, orientations of shape (1, p, p) or (k, p, p)"""
    orientations = np.broadcast_to(orientations, scatters.shape)
    return np.einsum("jpl,jpq,jql->jl", orientations, scatters, orientations)


def mstep_objective(stats: SufficientStats, factors: FactorSet) -> float:
    """F evaluated through the factors, no explicit inverse"""
    total = 0.0
    for j in range(stats.k):
        f = factors.component(j)
        b = f.orientation.T @ stats.scatters[j] @ f.orientation
        trace = np.sum(np.diag(b) / (f.lam * f.shape))
        log_det = stats.p * np.log(f.lam) + np.sum(np.log(f.shape))
        total += trace + stats.counts[j] * log_det
    return float(total)


def _check_positive(values: NDArray[np.float64], what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise DegenerateScatterError(f"Singular scatter: {what} not finite")
    largest = np.max(values)
    if largest <= 0 or np.min(values) <= DEGENERACY_TOLERANCE * largest:
        raise DegenerateScatterError(f"Singular scatter: {what} not positive")


def _warm_start(
    model: ModelId, stats: SufficientStats, prev: Optional[FactorSet]
) -> Optional[FactorSet]:
    if prev is None or prev.k != stats.k or prev.p != stats.p:
        return None
    if prev.model == model:
        return prev
    if prev.model.is_nested_in(model):
        return prev.relax_to(model)
    return None


class _Descent:
    """Tracks F across an alternation and decides when to stop"""

    def __init__(self, stats: SufficientStats, cfg: MStepConfig, model: ModelId):
        self.stats = stats
        self.cfg = cfg
        self.model = model
        self.best: Optional[FactorSet] = None
        self.value = np.inf
        self.iterations = 0

    def offer(self, factors: FactorSet) -> bool:
        """Record factors; True once the relative decrease drops below inner_tol"""
        self.iterations += 1
        value = mstep_objective(self.stats, factors)
        previous = self.value
        if value <= previous:
            self.best, self.value = factors, value
        if not np.isfinite(previous):
            return False
        return previous - value <= self.cfg.inner_tol * abs(value)

    def done(self) -> FactorSet:
        if self.iterations >= self.cfg.inner_max_iter:
            logger.debug(f"{self.model} M-step hit inner_max_iter")
        return self.best


# =============================================================================
# Closed forms
# =============================================================================


def _mstep_vvv(stats, prev, cfg) -> FactorSet:
    factors = [
        decompose_covariance(stats.scatters[j] / stats.counts[j]) for j in range(stats.k)
    ]
    return FactorSet.from_components(VVV, factors)


def _mstep_eee(stats, prev, cfg) -> FactorSet:
    f = decompose_covariance(stats.scatters.sum(axis=0) / stats.n)
    return FactorSet(
        model=EEE,
        k=stats.k,
        volumes=np.array([f.lam]),
        shapes=f.shape[None, :],
        orientations=f.orientation[None, :, :],
    )


def _mstep_eev(stats, prev, cfg) -> FactorSet:
    eigen = [sorted_eigh(stats.scatters[j]) for j in range(stats.k)]
    pooled = np.sum([values for values, _ in eigen], axis=0)
    _check_positive(pooled, "pooled eigenvalues")
    log_pooled = np.log(pooled)
    log_root = log_pooled.mean()
    return FactorSet(
        model=EEV,
        k=stats.k,
        volumes=np.array([np.exp(log_root) / stats.n]),
        shapes=np.exp(log_pooled - log_root)[None, :],
        orientations=np.stack([vectors for _, vectors in eigen]),
    )


def _mstep_evv(stats, prev, cfg) -> FactorSet:
    factors = [decompose_covariance(stats.scatters[j]) for j in range(stats.k)]
    return FactorSet(
        model=EVV,
        k=stats.k,
        volumes=np.array([sum(f.lam for f in factors) / stats.n]),
        shapes=np.stack([f.shape for f in factors]),
        orientations=np.stack([f.orientation for f in factors]),
    )


# =============================================================================
# Alternating conditional updates
# =============================================================================


def _initial_volumes(stats: SufficientStats, warm: Optional[FactorSet]) -> NDArray:
    if warm is not None:
        return np.array([warm.volume(j) for j in range(stats.k)])
    traces = np.trace(stats.scatters, axis1=1, axis2=2)
    volumes = traces / (stats.p * stats.counts)
    _check_positive(volumes, "component traces")
    return volumes


def _mstep_vee(stats, prev, cfg) -> FactorSet:
    warm = _warm_start(VEE, stats, prev)
    volumes = _initial_volumes(stats, warm)
    descent = _Descent(stats, cfg, VEE)
    if warm is not None:
        descent.offer(warm)

    for _ in range(cfg.inner_max_iter):
        common = decompose_covariance(
            np.sum(stats.scatters / volumes[:, None, None], axis=0)
        )
        b = _projected_diagonals(stats.scatters, common.orientation[None])
        volumes = np.sum(b / common.shape, axis=1) / (stats.p * stats.counts)
        _check_positive(volumes, "component volumes")
        factors = FactorSet(
            model=VEE,
            k=stats.k,
            volumes=volumes,
            shapes=common.shape[None, :],
            orientations=common.orientation[None, :, :],
        )
        if descent.offer(factors):
            break
    return descent.done()


def _mstep_vev(stats, prev, cfg) -> FactorSet:
    warm = _warm_start(VEV, stats, prev)
    volumes = _initial_volumes(stats, warm)
    eigen = [sorted_eigh(stats.scatters[j]) for j in range(stats.k)]
    spectra = np.stack([values for values, _ in eigen])
    orientations = np.stack([vectors for _, vectors in eigen])
    descent = _Descent(stats, cfg, VEV)
    if warm is not None:
        descent.offer(warm)

    for _ in range(cfg.inner_max_iter):
        pooled = np.sum(spectra / volumes[:, None], axis=0)
        _check_positive(pooled, "pooled eigenvalues")
        log_pooled = np.log(pooled)
        shape = np.exp(log_pooled - log_pooled.mean())
        volumes = np.sum(spectra / shape, axis=1) / (stats.p * stats.counts)
        _check_positive(volumes, "component volumes")
        factors = FactorSet(
            model=VEV,
            k=stats.k,
            volumes=volumes,
            shapes=shape[None, :],
            orientations=orientations,
        )
        if descent.offer(factors):
            break
    return descent.done()


# =============================================================================
# Common orientation with ordered eigenvalues
# =============================================================================

PLANE_GRID = 12
PERMUTED_SEED_MAX_P = 4

ProfileSolver = Callable[..., NDArray[np.float64]]


def _profile(
    model: ModelId,
    stats: SufficientStats,
    gamma: NDArray[np.float64],
    solve: ProfileSolver = pav_ordered_solution,
) -> Tuple[float, NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """F minimized over volumes and shapes for a fixed orientation"""
    b = _projected_diagonals(stats.scatters, gamma[None])
    _check_positive(b, "projected eigenvalues")
    if model.common_volume:
        shapes = np.exp(
            np.stack(
                [solve(b[j], stats.counts[j], sum_zero=True) for j in range(stats.k)]
            )
        )
        volume = np.sum(b / shapes) / (stats.n * stats.p)
        volumes = np.array([volume])
        xis = volume * shapes
    else:
        zetas = np.stack(
            [solve(b[j], stats.counts[j], sum_zero=False) for j in range(stats.k)]
        )
        log_volumes = zetas.mean(axis=1)
        volumes = np.exp(log_volumes)
        shapes = np.exp(zetas - log_volumes[:, None])
        xis = np.exp(zetas)
    value = np.sum(b / xis) + np.sum(stats.counts[:, None] * np.log(xis))
    return float(value), volumes, shapes, xis


def _rotate(gamma: NDArray[np.float64], l: int, m: int, theta: float) -> NDArray:
    c, s = np.cos(theta), np.sin(theta)
    rotated = gamma.copy()
    rotated[:, l] = c * gamma[:, l] + s * gamma[:, m]
    rotated[:, m] = -s * gamma[:, l] + c * gamma[:, m]
    return rotated


def _profiled_value(model: ModelId, stats: SufficientStats, gamma: NDArray) -> float:
    """Profiled F, infinite where a projected eigenvalue degenerates"""
    try:
        return _profile(model, stats, gamma)[0]
    except DegenerateScatterError:
        return np.inf


def _plane_value(model, stats, gamma, l, m, theta) -> float:
    return _profiled_value(model, stats, _rotate(gamma, l, m, theta))


def _plane_search(
    model: ModelId,
    stats: SufficientStats,
    gamma: NDArray[np.float64],
    value: float,
    tol: float,
) -> Tuple[NDArray[np.float64], float, bool]:
    """
    Profiled F along each column-pair rotation, angles in [0, pi)

    A coarse grid locates the best basin, a bounded scalar search polishes
    it. A rotation is kept only when it lowers F by more than tol (relative).
    """
    improved = False
    step = np.pi / PLANE_GRID
    grid = np.arange(PLANE_GRID) * step
    for l in range(stats.p - 1):
        for m in range(l + 1, stats.p):
            along = partial(_plane_value, model, stats, gamma, l, m)
            values = [along(theta) for theta in grid]
            start = int(np.argmin(values))
            theta, candidate = grid[start], values[start]
            result = minimize_scalar(
                along,
                bounds=(theta - step, theta + step),
                method="bounded",
                options={"xatol": 1e-10},
            )
            if result.fun < candidate:
                theta, candidate = float(result.x), float(result.fun)
            if candidate < value - tol * abs(value):
                gamma, value = _rotate(gamma, l, m, theta), candidate
                improved = True
    return gamma, value, improved


def _refine_orientation(
    model: ModelId,
    stats: SufficientStats,
    gamma: NDArray[np.float64],
    cfg: MStepConfig,
) -> Tuple[NDArray[np.float64], float]:
    """Alternate profile and orientation updates; plane searches restart stalls"""
    value, _, _, xis = _profile(model, stats, gamma)
    for _ in range(cfg.inner_max_iter):
        proposal = update_common_orientation(
            stats.scatters,
            xis,
            gamma=gamma,
            tol=cfg.inner_tol,
            max_iter=cfg.orientation_max_iter,
        )
        proposed = _profiled_value(model, stats, proposal)
        progress = value - proposed
        if proposed <= value:
            gamma, value = proposal, proposed
            xis = _profile(model, stats, gamma)[3]
        if progress > cfg.inner_tol * abs(value):
            continue

        gamma, value, improved = _plane_search(model, stats, gamma, value, cfg.inner_tol)
        if not improved:
            break
        xis = _profile(model, stats, gamma)[3]
    else:
        logger.debug(f"{model} orientation search hit inner_max_iter")
    return gamma, value


def _orientation_seeds(stats: SufficientStats) -> List[NDArray[np.float64]]:
    """Eigenbases of the pooled and of every group scatter, columns permuted"""
    bases = [sorted_eigh(stats.scatters.sum(axis=0))[1]]
    bases += [sorted_eigh(scatter)[1] for scatter in stats.scatters]
    if stats.p <= PERMUTED_SEED_MAX_P:
        orders = list(permutations(range(stats.p)))
    else:
        orders = [tuple(range(stats.p)), tuple(reversed(range(stats.p)))]
    return [basis[:, list(order)] for basis in bases for order in orders]


def _mstep_common_orientation(
    model: ModelId, stats: SufficientStats, prev: Optional[FactorSet], cfg: MStepConfig
) -> FactorSet:
    """
    Seeds are ranked by their profiled F and the best orientation_starts are
    refined. With a warm start, the warm orientation is refined first and a
    seed is only refined when its raw profile already beats that result.
    """
    warm = _warm_start(model, stats, prev)
    seeds = _orientation_seeds(stats)
    ranked = sorted(
        (_profiled_value(model, stats, seed), index)
        for index, seed in enumerate(seeds)
    )
    if warm is None and not np.isfinite(ranked[0][0]):
        _profile(model, stats, seeds[0])  # raises DegenerateScatterError

    best_gamma, best_value = None, np.inf
    if warm is not None:
        best_gamma, best_value = _refine_orientation(
            model, stats, warm.orientation(0), cfg
        )
    for screened, index in ranked[: cfg.orientation_starts]:
        beaten = warm is not None and screened >= best_value
        if beaten or not np.isfinite(screened):
            continue
        gamma, value = _refine_orientation(model, stats, seeds[index], cfg)
        if value < best_value:
            best_gamma, best_value = gamma, value

    best_gamma = orient_columns(best_gamma)
    _, volumes, shapes, _ = _profile(
        model, stats, best_gamma, solve=ordered_eigenvalue_solve
    )
    factors = FactorSet(
        model=model,
        k=stats.k,
        volumes=volumes,
        shapes=shapes,
        orientations=best_gamma[None, :, :],
    )
    if warm is not None and mstep_objective(stats, warm) < mstep_objective(stats, factors):
        return warm
    return factors


def mstep_vve(
    stats: SufficientStats,
    prev: Optional[FactorSet] = None,
    cfg: Optional[MStepConfig] = None,
) -> FactorSet:
    """lam_j G Delta_j G' with ordered Delta_j and one orientation"""
    return _mstep_common_orientation(VVE, stats, prev, cfg or MStepConfig())


def mstep_eve(
    stats: SufficientStats,
    prev: Optional[FactorSet] = None,
    cfg: Optional[MStepConfig] = None,
) -> FactorSet:
    """lam G Delta_j G' with ordered Delta_j, one volume and one orientation"""
    return _mstep_common_orientation(EVE, stats, prev, cfg or MStepConfig())


_SOLVERS: Dict[ModelId, Callable[..., FactorSet]] = {
    EEE: _mstep_eee,
    VEE: _mstep_vee,
    EVE: mstep_eve,
    EEV: _mstep_eev,
    VVE: mstep_vve,
    VEV: _mstep_vev,
    EVV: _mstep_evv,
    VVV: _mstep_vvv,
}


def mstep(
    m: ModelId,
    stats: SufficientStats,
    prev: Optional[FactorSet] = None,
    cfg: Optional[MStepConfig] = None,
) -> FactorSet:
    """Covariance factors for model m given the current sufficient statistics"""
    cfg = cfg or MStepConfig()
    try:
        return _SOLVERS[m](stats, prev, cfg)
    except DecompositionError as exc:
        raise DegenerateScatterError(f"{m} M-step: {exc}") from exc
