"""
Closed Testing
Raw p-values for the seven null models, adjusted p-values for the three
elementary hypotheses and the model retained at level alpha.
"""

import logging
from typing import Dict, Mapping, Optional

import numpy as np

from src.core.config import FitConfig
from src.core.exceptions import IncompleteInputError, InvalidAlphaRError
from src.models.gaussian import DataLike, as_data_matrix
from src.models.model_id import (
    ELEMENTARY_MODELS,
    EVV,
    NULL_MODELS,
    VEV,
    VVE,
    VVV,
    Flag,
    ModelId,
    implied_hypotheses,
    total_params,
)
from src.models.reports import ClosedTestReport, Method
from src.services.em_engine import FitResult, fit_hierarchy
from src.services.lr_testing import bootstrap_result, bootstrap_threshold, chi2_test

logger = logging.getLogger(__name__)


def _by_name(values: Mapping) -> Dict[str, float]:
    return {getattr(key, "name", key): value for key, value in values.items()}


def adjust_pvalues(p: Mapping) -> Dict[ModelId, float]:
    """q_M = max of the raw p-values over the hypotheses M implies"""
    raw = _by_name(p)
    missing = [m.name for m in NULL_MODELS if m.name not in raw]
    if missing:
        raise IncompleteInputError(f"Missing raw p-values for {', '.join(missing)}")
    return {
        m: max(raw[implied.name] for implied in implied_hypotheses(m))
        for m in ELEMENTARY_MODELS
    }


def retained_model(q: Mapping, alpha: float) -> ModelId:
    """
    Map the retained elementary hypotheses to a family member

    EVV retained means a common volume, VEV a common shape and VVE a common
    orientation.
    """
    adjusted = _by_name(q)
    missing = [m.name for m in ELEMENTARY_MODELS if m.name not in adjusted]
    if missing:
        raise IncompleteInputError(f"Missing adjusted p-values for {', '.join(missing)}")

    def flag(model: ModelId) -> Flag:
        return Flag.EQUAL if adjusted[model.name] > alpha else Flag.VARIABLE

    return ModelId(volume=flag(EVV), shape=flag(VEV), orientation=flag(VVE))


def _model_seed(seed: int, model: ModelId) -> int:
    """Separate bootstrap stream per null model"""
    state = np.random.SeedSequence([seed, NULL_MODELS.index(model)]).generate_state(
        1, dtype=np.uint64
    )
    return int(state[0])


def closed_test(
    data: DataLike,
    k: int,
    method: Method = "chi2",
    alpha: float = 0.05,
    R: int = 999,
    cfg: Optional[FitConfig] = None,
    seed: int = 0,
    threads: int = 1,
    family: Optional[Dict[ModelId, FitResult]] = None,
) -> ClosedTestReport:
    """
    Closed LR testing procedure over the general family

    The eight models are fitted down the hierarchy from the seeded start and
    all seven statistics are taken against its single VVV fit. A precomputed
    family (from fit_hierarchy or fit_family) may be passed in instead.
    """
    if not 0 < alpha < 1:
        raise InvalidAlphaRError(f"alpha must lie in (0, 1), got {alpha}")
    if method == "bootstrap":
        bootstrap_threshold(alpha, R)
    elif method != "chi2":
        raise ValueError(f"Unknown method: {method}")

    cfg = cfg or FitConfig(seed=seed)
    data = as_data_matrix(data)
    family = family or fit_hierarchy(data, k, cfg)
    fit_vvv = family[VVV]

    rows = []
    for m in NULL_MODELS:
        if method == "bootstrap":
            row = bootstrap_result(
                family[m], fit_vvv, R, cfg, _model_seed(seed, m), alpha, threads
            )
        else:
            row = chi2_test(family[m], fit_vvv)
        rows.append(row)

    raw = {row.model: row.p_value(method) for row in rows}
    adjusted = adjust_pvalues(raw)
    retained = retained_model(adjusted, alpha)
    summary = ", ".join(f"q_{m}={q:.5f}" for m, q in adjusted.items())
    logger.info(f"Closed test ({method}, alpha={alpha}): {summary}, retained {retained}")

    return ClosedTestReport(
        method=method,
        alpha=alpha,
        k=k,
        n=data.n,
        p=data.p,
        replicates=R if method == "bootstrap" else None,
        seed=seed,
        vvv_eta=total_params(VVV, data.p, k),
        two_loglik={m.name: 2.0 * family[m].loglik for m in family},
        rows=rows,
        adjusted={m.name: q for m, q in adjusted.items()},
        retained=retained.name,
    )
