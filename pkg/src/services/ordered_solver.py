"""
Ordered Eigenvalue Solver
Minimizes sum_l [b_l exp(-z_l) + n z_l] subject to z_1 >= z_2 >= ... >= z_p,
optionally with sum_l z_l = 0. The objective is separable and strictly convex,
so the equality-constrained subproblem over any working set has a closed form
(log of block means) and the primal active-set method reduces to block moves.
"""

import logging
from typing import List, Set, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.core.exceptions import InvalidProjectionError, NumericalFailure

logger = logging.getLogger(__name__)

KKT_TOLERANCE = 1e-8


def _validate(b: ArrayLike, n_j: float) -> NDArray[np.float64]:
    b = np.asarray(b, dtype=float).ravel()
    if b.size == 0:
        raise InvalidProjectionError("Empty eigenvalue vector")
    if not np.all(np.isfinite(b)) or np.any(b <= 0):
        raise InvalidProjectionError(f"All b entries must be positive and finite, got {b}")
    if not (np.isfinite(n_j) and n_j > 0):
        raise InvalidProjectionError(f"n_j must be positive, got {n_j}")
    return b


def _block_values(
    b: NDArray[np.float64], n_j: float, blocks: List[Tuple[int, int]], sum_zero: bool
) -> NDArray[np.float64]:
    """Closed-form minimizer when each block [start, stop) is held level"""
    zeta = np.empty_like(b)
    for start, stop in blocks:
        zeta[start:stop] = np.log(b[start:stop].mean() / n_j)
    if sum_zero:
        zeta -= zeta.mean()
    return zeta


def _blocks_from_working_set(p: int, working: Set[int]) -> List[Tuple[int, int]]:
    """Constraint l ties coordinates l and l + 1"""
    blocks, start = [], 0
    for l in range(p - 1):
        if l not in working:
            blocks.append((start, l + 1))
            start = l + 1
    blocks.append((start, p))
    return blocks


def _multipliers(
    b: NDArray[np.float64], n_j: float, zeta: NDArray[np.float64], sum_zero: bool
) -> Tuple[NDArray[np.float64], float, float]:
    """
    Multipliers nu_l of z_l - z_{l+1} >= 0 from the stationarity chain

    Returns (nu, mu, closing) where mu is the sum-zero multiplier and closing
    is the leftover of the chain, zero at a stationary point.
    """
    gradient = n_j - b * np.exp(-zeta)
    mu = -gradient.mean() if sum_zero else 0.0
    chain = np.cumsum(gradient + mu)
    return chain[:-1], mu, float(chain[-1])


def kkt_residual(
    b: ArrayLike, n_j: float, zeta: ArrayLike, sum_zero: bool = False
) -> float:
    """
    Largest KKT violation at zeta, scaled by n_j * p

    Covers primal feasibility, stationarity, multiplier signs and
    complementary slackness.
    """
    b = _validate(b, n_j)
    zeta = np.asarray(zeta, dtype=float)
    p = b.size
    scale = n_j * p

    gaps = -np.diff(zeta)
    nu, _, closing = _multipliers(b, n_j, zeta, sum_zero)
    violations = [
        abs(closing) / scale,
        float(np.max(np.maximum(-gaps, 0.0), initial=0.0)),
        float(np.max(np.maximum(-nu, 0.0), initial=0.0)) / scale,
        float(np.max(np.abs(nu * gaps), initial=0.0)) / scale,
    ]
    if sum_zero:
        violations.append(abs(zeta.sum()))
    return max(violations)


def pav_ordered_solution(
    b: ArrayLike, n_j: float, sum_zero: bool = False
) -> NDArray[np.float64]:
    """Pool-adjacent-violators closed form for the non-increasing fit"""
    b = _validate(b, n_j)

    # Stack of (sum of b, size); ties merge into one block
    sums: List[float] = []
    sizes: List[int] = []
    for value in b:
        sums.append(float(value))
        sizes.append(1)
        while len(sums) > 1 and sums[-2] / sizes[-2] <= sums[-1] / sizes[-1]:
            total, size = sums.pop(), sizes.pop()
            sums[-1] += total
            sizes[-1] += size

    zeta = np.repeat(
        [np.log(total / size / n_j) for total, size in zip(sums, sizes)], sizes
    )
    if sum_zero:
        zeta -= zeta.mean()
    return zeta


def ordered_eigenvalue_solve(
    b: ArrayLike,
    n_j: float,
    sum_zero: bool = False,
    certify: bool = True,
) -> NDArray[np.float64]:
    """
    Primal active-set solution of the ordered log-eigenvalue program

    Starts from the fully tied point (feasible for both variants), moves
    toward the working-set minimizer until a constraint blocks, and releases
    the constraint with the most negative multiplier once the working-set
    minimizer is reached.
    """
    b = _validate(b, n_j)
    p = b.size
    if p == 1:
        return np.zeros(1) if sum_zero else np.log(b / n_j)

    working: Set[int] = set(range(p - 1))
    zeta = _block_values(b, n_j, _blocks_from_working_set(p, working), sum_zero)
    scale = n_j * p

    for _ in range(4 * p * p):
        target = _block_values(b, n_j, _blocks_from_working_set(p, working), sum_zero)
        direction = target - zeta

        if np.max(np.abs(direction)) <= 1e-13 * (1.0 + np.max(np.abs(zeta))):
            zeta = target
            nu, _, _ = _multipliers(b, n_j, zeta, sum_zero)
            candidates = sorted(working)
            if not candidates:
                break
            worst = min(candidates, key=lambda l: nu[l])
            if nu[worst] >= -KKT_TOLERANCE * scale:
                break
            working.discard(worst)
            continue

        step, blocking = 1.0, None
        for l in range(p - 1):
            if l in working:
                continue
            closing_rate = direction[l + 1] - direction[l]
            if closing_rate > 0:
                ratio = (zeta[l] - zeta[l + 1]) / closing_rate
                if ratio < step:
                    step, blocking = max(ratio, 0.0), l
        zeta = zeta + step * direction
        if blocking is not None:
            working.add(blocking)
    else:
        logger.warning(f"Active-set iteration cap reached for p={p}")

    if certify:
        residual = kkt_residual(b, n_j, zeta, sum_zero)
        if residual > KKT_TOLERANCE:
            raise NumericalFailure(
                f"Ordered solve failed KKT certification (residual {residual:.3g})"
            )
    return zeta
