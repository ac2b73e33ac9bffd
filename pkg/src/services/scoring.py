"""
Model Scoring
Likelihood-based information criteria, all on the "larger is better" scale.
"""

import logging
from typing import Dict, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from src.models.model_id import ALL_MODELS, ModelId, total_params
from src.models.reports import FitReport, IcRow, IcTable
from src.services.em_engine import FitResult

logger = logging.getLogger(__name__)

CRITERIA = ("aic", "aic3", "aicc", "aicu", "awe", "bic", "caic", "icl")


def map_entropy_term(z: np.ndarray) -> float:
    """sum_i log z_i,MAP (ties to the lowest index), always <= 0"""
    z = np.asarray(z, dtype=float)
    top = z[np.arange(z.shape[0]), np.argmax(z, axis=1)]
    return float(np.sum(np.log(top)))


def information_criteria(fit: FitResult, n: Optional[int] = None) -> IcRow:
    n = n or fit.responsibilities.shape[0]
    eta = total_params(fit.model, fit.params.p, fit.params.k)
    two_l = 2.0 * fit.loglik
    log_n = np.log(n)

    aic = two_l - 2.0 * eta
    aicc: Optional[float] = None
    aicu: Optional[float] = None
    if n > eta + 1:
        aicc = aic - 2.0 * eta * (eta + 1) / (n - eta - 1)
        aicu = aicc - n * np.log(n / (n - eta - 1))
    bic = two_l - eta * log_n

    return IcRow(
        model=fit.model.name,
        eta=eta,
        two_loglik=two_l,
        aic=aic,
        aic3=two_l - 3.0 * eta,
        aicc=aicc,
        aicu=aicu,
        awe=two_l - 2.0 * eta * (1.5 + log_n),
        bic=bic,
        caic=two_l - eta * (1.0 + log_n),
        icl=bic + map_entropy_term(fit.responsibilities),
    )


def ic_table(fits: Mapping[ModelId, FitResult], n: Optional[int] = None) -> IcTable:
    """One row per fitted model and the best (largest) model per criterion"""
    ordered = [m for m in ALL_MODELS if m in fits]
    rows = [information_criteria(fits[m], n) for m in ordered]
    n = n or fits[ordered[0]].responsibilities.shape[0]

    best: Dict[str, str] = {}
    for criterion in CRITERIA:
        scored = [
            (getattr(row, criterion), row.model)
            for row in rows
            if getattr(row, criterion) is not None
        ]
        if scored:
            # first model wins ties, following hierarchy order
            best[criterion] = max(scored, key=lambda item: item[0])[1]
    logger.info(f"Best models: {best}")
    return IcTable(n=n, rows=rows, best=best)


def misallocation_count(labels: Sequence[str], classification: Sequence[int]) -> int:
    """
    Observations off the best one-to-one matching of labels to components

    Labels left without a component (more classes than components) count
    as misallocated.
    """
    classes, label_codes = np.unique(np.asarray(labels), return_inverse=True)
    classification = np.asarray(classification, dtype=int)
    k = int(classification.max()) + 1 if classification.size else 0
    table = np.zeros((classes.size, max(k, 1)), dtype=int)
    np.add.at(table, (label_codes, classification), 1)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return int(classification.size - table[rows, cols].sum())


def fit_report(
    fit: FitResult, labels: Optional[Sequence[str]] = None
) -> FitReport:
    """Serializable view of a fit, with misallocation when labels are known"""
    factors = fit.factors
    classification = fit.classification
    n, p = fit.responsibilities.shape[0], fit.params.p
    return FitReport(
        model=fit.model.name,
        k=fit.params.k,
        n=n,
        p=p,
        eta=total_params(fit.model, p, fit.params.k),
        two_loglik=2.0 * fit.loglik,
        iterations=fit.iterations,
        converged=fit.converged,
        weights=fit.params.weights.tolist(),
        means=fit.params.means.tolist(),
        volumes=[factors.volume(j) for j in range(factors.k)],
        shapes=[factors.shape(j).tolist() for j in range(factors.k)],
        orientations=[factors.orientation(j).tolist() for j in range(factors.k)],
        classification=classification.tolist(),
        misallocated=(
            misallocation_count(labels, classification) if labels is not None else None
        ),
    )
