"""Positive/negative bookkeeping and hard-negative mining on transport plans.

The last plan column is the background. Masses are rescaled by ``Np`` so a
binary assignment counts one per prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_plan

__all__ = ["MiningResult", "count_positives_negatives", "select_hard_negatives"]

_BUDGET_TOL = 1e-9


@dataclass(frozen=True)
class MiningResult:
    kept_negative_rows: list[int]
    n_pos: float
    n_neg_total: float
    n_neg_kept: float


def count_positives_negatives(plan, n_pred: int | None = None, n_gt: int | None = None):
    """Return ``(n_pos, n_neg)``: ``Np`` times the ground-truth and background mass."""
    p = check_plan(plan)
    n_pred = p.shape[0] if n_pred is None else n_pred
    n_gt = p.shape[1] - 1 if n_gt is None else n_gt
    if p.shape != (n_pred, n_gt + 1):
        raise ValueError(f"plan shape {p.shape} does not match ({n_pred}, {n_gt + 1})")
    n_pos = n_pred * float(p[:, :n_gt].sum())
    n_neg = n_pred * float(p[:, n_gt].sum())
    return n_pos, n_neg


def select_hard_negatives(plan, confidence_loss, ratio: float = 3.0) -> MiningResult:
    """Keep background-matched rows with the highest weighted loss.

    Rows with background mass are ranked by ``P[i, bg] * loss[i]`` (descending,
    ties by row index). The longest prefix whose background mass times ``Np``
    stays within ``ratio * n_pos`` is kept; a row crossing the budget is
    dropped whole.
    """
    if not ratio > 0:
        raise ValueError("ratio must be positive")
    p = check_plan(plan)
    loss = np.asarray(confidence_loss, dtype=float)
    n_pred = p.shape[0]
    if loss.shape != (n_pred,):
        raise ValueError(f"confidence_loss must have shape ({n_pred},), got {loss.shape}")
    n_pos, n_neg = count_positives_negatives(p)
    bg = p[:, -1]
    rows = np.nonzero(bg > 0)[0]
    weighted = bg[rows] * loss[rows]
    rows = rows[np.lexsort((rows, -weighted))]
    masses = n_pred * np.cumsum(bg[rows])
    budget = ratio * n_pos
    k = int(np.searchsorted(masses, budget + _BUDGET_TOL * max(1.0, budget), side="right"))
    kept = rows[:k]
    n_kept = float(masses[k - 1]) if k else 0.0
    return MiningResult([int(r) for r in kept], n_pos, n_neg, n_kept)
