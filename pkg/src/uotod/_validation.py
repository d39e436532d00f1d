"""Input checks shared by the solvers and estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .cost import CostMatrix, MarginalPair


def check_cost(cost, background: bool | None = None) -> CostMatrix:
    """Coerce ``cost`` to a :class:`CostMatrix`.

    Raw arrays carry no background flag; ``background`` supplies it and
    defaults to ``True`` (last column is background).
    """
    if isinstance(cost, CostMatrix):
        if background is not None and background != cost.background:
            return CostMatrix(cost.values, background=background)
        return cost
    values = check_array(cost, dtype=np.float64, ensure_all_finite=True)
    return CostMatrix(values, background=True if background is None else background)


def check_marginals(marginals, shape: tuple[int, int]) -> MarginalPair:
    if not isinstance(marginals, MarginalPair):
        alpha, beta = marginals
        marginals = MarginalPair(alpha, beta)
    n, m = shape
    if marginals.alpha.shape != (n,) or marginals.beta.shape != (m,):
        raise ValueError(
            f"marginal shapes {marginals.alpha.shape}, {marginals.beta.shape} "
            f"do not match cost shape {shape}"
        )
    return marginals


def check_plan(plan) -> np.ndarray:
    p = check_array(plan, dtype=np.float64, ensure_all_finite=True)
    if np.any(p < 0):
        raise ValueError("transport plan entries must be non-negative")
    return p
