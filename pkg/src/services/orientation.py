"""
Common Orientation Update
Minimizes g(G) = sum_j tr(W_j G A_j G') over orthogonal G, A_j = inverse of the
diagonal Xi_j. Two majorize-minimize steps (each a polar decomposition) are
alternated; pairwise Jacobi rotations take over when they stop making progress.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.models.gaussian import orient_columns, sorted_eigh

logger = logging.getLogger(__name__)


def orientation_objective(
    scatters: NDArray[np.float64],
    inverse_xis: NDArray[np.float64],
    gamma: NDArray[np.float64],
) -> float:
    """g(G) with inverse_xis holding the diagonals of A_j, shape (k, p)"""
    # tr(W G A G') = sum_l a_l g_l' W g_l
    projected = np.einsum("pl,jpq,ql->jl", gamma, scatters, gamma)
    return float(np.sum(projected * inverse_xis))


def _polar(matrix: NDArray[np.float64]) -> Optional[NDArray[np.float64]]:
    """Orthogonal factor U V' of matrix = U S V', None when matrix vanishes"""
    if not np.any(matrix):
        return None
    u, singular, vt = np.linalg.svd(matrix)
    if singular[0] <= 0:
        return None
    return u @ vt


def _mm_shape_side(scatters, inverse_xis, gamma):
    # A_j <= a_j I with a_j = max diag A_j
    bounds = inverse_xis.max(axis=1, keepdims=True)
    slack = bounds - inverse_xis
    target = np.einsum("jpq,ql,jl->pl", scatters, gamma, slack)
    return _polar(target)


def _mm_scatter_side(scatters, inverse_xis, gamma):
    # W_j <= w_j I with w_j the largest eigenvalue of W_j
    p = gamma.shape[0]
    tops = np.linalg.eigvalsh(scatters)[:, -1]
    slack = tops[:, None, None] * np.eye(p) - scatters
    target = np.einsum("jpq,ql,jl->pl", slack, gamma, inverse_xis)
    return _polar(target)


def _jacobi_sweep(scatters, inverse_xis, gamma):
    """One sweep of optimal plane rotations over all column pairs"""
    gamma = gamma.copy()
    p = gamma.shape[0]
    for l in range(p - 1):
        for m in range(l + 1, p):
            cols = gamma[:, [l, m]]
            block = np.einsum("pa,jpq,qb->jab", cols, scatters, cols)
            weight = inverse_xis[:, l] - inverse_xis[:, m]
            cos_coef = np.sum(weight * (block[:, 0, 0] - block[:, 1, 1])) / 2.0
            sin_coef = np.sum(weight * block[:, 0, 1])
            # objective in the pair = const + P cos(2t) + Q sin(2t)
            if np.hypot(cos_coef, sin_coef) - (-cos_coef) <= 0:
                continue
            theta = 0.5 * np.arctan2(-sin_coef, -cos_coef)
            c, s = np.cos(theta), np.sin(theta)
            gamma[:, l] = c * cols[:, 0] + s * cols[:, 1]
            gamma[:, m] = -s * cols[:, 0] + c * cols[:, 1]
    return gamma


def update_common_orientation(
    scatters: Sequence[ArrayLike],
    xis: Sequence[ArrayLike],
    gamma: Optional[ArrayLike] = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> NDArray[np.float64]:
    """
    Orthogonal G minimizing sum_j tr(W_j G Xi_j^{-1} G')

    xis holds the diagonals of Xi_j (shape (k, p)). Column l of the result
    pairs with entry l of every Xi_j. The result never scores worse than the
    starting point gamma; without one, the eigenvectors of sum_j W_j are used.
    """
    scatters = np.asarray(scatters, dtype=float)
    inverse_xis = 1.0 / np.asarray(xis, dtype=float)
    if inverse_xis.ndim == 1:
        inverse_xis = inverse_xis[None, :]

    candidates = [sorted_eigh(scatters.sum(axis=0))[1]]
    if gamma is not None:
        candidates.insert(0, np.asarray(gamma, dtype=float))
    current = min(
        candidates, key=lambda g: orientation_objective(scatters, inverse_xis, g)
    )
    value = orientation_objective(scatters, inverse_xis, current)

    for _ in range(max_iter):
        start = value
        for step in (_mm_shape_side, _mm_scatter_side):
            proposal = step(scatters, inverse_xis, current)
            if proposal is None:
                continue
            proposed = orientation_objective(scatters, inverse_xis, proposal)
            if proposed <= value:
                current, value = proposal, proposed

        if start - value <= tol * abs(start):
            proposal = _jacobi_sweep(scatters, inverse_xis, current)
            proposed = orientation_objective(scatters, inverse_xis, proposal)
            if proposed < value:
                current, value = proposal, proposed
            if start - value <= tol * abs(start):
                break
    else:
        logger.debug(f"Orientation update stopped at max_iter={max_iter}")

    return orient_columns(current)
