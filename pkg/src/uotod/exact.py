"""Unregularized limit cases: bipartite matching and closest matches.

All solvers break ties towards the lowest index so repeated runs and
property tests are deterministic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_cost, check_marginals

__all__ = [
    "Assignment",
    "hungarian",
    "brute_force_bm",
    "assignment_to_plan",
    "closest_per_prediction",
    "closest_per_groundtruth",
]

BRUTE_FORCE_MAX_PRED = 9


@dataclass(frozen=True)
class Assignment:
    """Injective map from ground truths to predictions."""

    gt_to_pred: np.ndarray
    total_cost: float

    def __post_init__(self):
        idx = np.asarray(self.gt_to_pred, dtype=np.intp)
        if len(np.unique(idx)) != len(idx):
            raise ValueError("assignment must map ground truths to distinct predictions")
        object.__setattr__(self, "gt_to_pred", idx)

    @property
    def n_gt(self) -> int:
        return len(self.gt_to_pred)

    def pred_to_column(self, n_pred: int) -> np.ndarray:
        """Column index per prediction, ``n_gt`` meaning background."""
        cols = np.full(n_pred, self.n_gt, dtype=np.intp)
        cols[self.gt_to_pred] = np.arange(self.n_gt)
        return cols


def _gt_block(cost, background):
    cm = check_cost(cost, background)
    block = cm.gt_block
    n_pred, n_gt = block.shape
    if n_gt > n_pred:
        raise ValueError(f"bipartite matching needs n_gt <= n_pred, got {n_gt} > {n_pred}")
    return block


def _total(block: np.ndarray, gt_to_pred) -> float:
    return math.fsum(block[gt_to_pred[j], j] for j in range(len(gt_to_pred)))


def hungarian(cost, background: bool | None = None) -> Assignment:
    """Minimum-cost injective matching of ground truths to predictions.

    Shortest augmenting paths with row/column potentials, ``O(Ng^2 Np)``.
    Ground truths are the rows of the internal problem so the rectangular
    case needs no padding; the inner scan over predictions is vectorized.
    The background column (if any) is ignored.
    """
    block = _gt_block(cost, background)
    n_pred, n_gt = block.shape
    if n_gt == 0:
        return Assignment(np.empty(0, dtype=np.intp), 0.0)

    a = block.T  # rows: ground truths, columns: predictions
    u = np.zeros(n_gt + 1)
    v = np.zeros(n_pred + 1)
    # owner[j]: 1-based row currently assigned to column j (0 = free); column 0 is the root
    owner = np.zeros(n_pred + 1, dtype=np.intp)
    way = np.zeros(n_pred + 1, dtype=np.intp)
    for i in range(1, n_gt + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n_pred + 1, np.inf)
        used = np.zeros(n_pred + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            reduced = a[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    gt_to_pred = np.empty(n_gt, dtype=np.intp)
    cols = np.nonzero(owner[1:])[0]
    gt_to_pred[owner[1:][cols] - 1] = cols
    return Assignment(gt_to_pred, _total(block, gt_to_pred))


def brute_force_bm(cost, background: bool | None = None) -> Assignment:
    """Exhaustive minimum over all injective maps; a test oracle.

    Limited to ``Np <= 9``. Ties resolve to the lexicographically first map.
    """
    block = _gt_block(cost, background)
    n_pred, n_gt = block.shape
    if n_pred > BRUTE_FORCE_MAX_PRED:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_PRED} predictions, got {n_pred}")
    if n_gt == 0:
        return Assignment(np.empty(0, dtype=np.intp), 0.0)
    perms = np.array(list(itertools.permutations(range(n_pred), n_gt)), dtype=np.intp)
    sums = block[perms, np.arange(n_gt)].sum(axis=1)
    # re-rank near-minimal candidates with exactly rounded sums
    near = np.nonzero(sums <= sums.min() + 1e-9 * max(1.0, abs(sums.min())))[0]
    best, best_cost = None, math.inf
    for k in near:
        c = _total(block, perms[k])
        if c < best_cost:
            best, best_cost = perms[k], c
    return Assignment(best, best_cost)


def assignment_to_plan(assignment: Assignment, n_pred: int, n_gt: int) -> np.ndarray:
    """Transport plan of an assignment under the background marginals.

    Matched pairs and unmatched predictions (sent to the background column)
    all carry mass ``1/Np``.
    """
    if assignment.n_gt != n_gt:
        raise ValueError(f"assignment covers {assignment.n_gt} ground truths, expected {n_gt}")
    plan = np.zeros((n_pred, n_gt + 1))
    plan[np.arange(n_pred), assignment.pred_to_column(n_pred)] = 1.0 / n_pred
    return plan


def closest_per_prediction(cost, marginals=None) -> np.ndarray:
    """Each prediction sends its whole mass to its cheapest column.

    The background column takes part in the argmin, so its cost acts as a
    threshold. Row masses default to ``1/Np``.
    """
    cm = check_cost(cost)
    values = cm.values
    n_pred = values.shape[0]
    alpha = np.full(n_pred, 1.0 / n_pred) if marginals is None else \
        check_marginals(marginals, values.shape).alpha
    plan = np.zeros_like(values)
    plan[np.arange(n_pred), np.argmin(values, axis=1)] = alpha
    return plan


def closest_per_groundtruth(cost, marginals=None) -> np.ndarray:
    """Each ground truth sends its mass to its cheapest prediction.

    Several ground truths may pick the same prediction. Predictions picked
    by nobody put their row mass on the background column.
    """
    cm = check_cost(cost)
    if not cm.background:
        raise ValueError("closest_per_groundtruth needs a background column")
    if cm.n_gt < 1:
        raise ValueError("closest_per_groundtruth needs at least one ground truth")
    n_pred, n_gt = cm.n_pred, cm.n_gt
    if marginals is None:
        alpha = np.full(n_pred, 1.0 / n_pred)
        beta = np.full(n_gt, 1.0 / n_pred)
    else:
        m = check_marginals(marginals, cm.shape)
        alpha, beta = m.alpha, m.beta[:n_gt]
    plan = np.zeros(cm.shape)
    rows = np.argmin(cm.gt_block, axis=0)
    plan[rows, np.arange(n_gt)] = beta
    unclaimed = np.ones(n_pred, dtype=bool)
    unclaimed[rows] = False
    plan[unclaimed, n_gt] = alpha[unclaimed]
    return plan
