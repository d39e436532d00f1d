"""Matching cost matrices and the background-augmented marginals.

A cost matrix has one row per prediction and one column per ground truth,
followed (by default) by a constant *background* column whose value acts as
the matching threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Box, pairwise_giou, pairwise_iou, pairwise_l1

__all__ = [
    "Prediction",
    "GroundTruth",
    "CostWeights",
    "CostMatrix",
    "MarginalPair",
    "build_cost",
    "background_marginals",
    "uniform_marginals",
]

_MASS_ATOL = 1e-9


@dataclass(frozen=True)
class Prediction:
    class_probs: np.ndarray
    box: Box

    def __post_init__(self):
        probs = np.asarray(self.class_probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("class_probs must be a non-empty vector")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError("class_probs entries must lie in [0, 1]")
        object.__setattr__(self, "class_probs", probs)


@dataclass(frozen=True)
class GroundTruth:
    class_id: int
    box: Box

    def __post_init__(self):
        if int(self.class_id) != self.class_id or self.class_id < 0:
            raise ValueError(f"class_id must be a non-negative integer, got {self.class_id}")


@dataclass(frozen=True)
class CostWeights:
    """Weights of the composite matching cost.

    The defaults are the DETR weights (probability 2, L1 5, GIoU 2) with a
    background cost of 0.8.
    """

    lambda_prob: float = 2.0
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0
    lambda_iou: float = 0.0
    c_background: float = 0.8

    def __post_init__(self):
        lams = (self.lambda_prob, self.lambda_l1, self.lambda_giou, self.lambda_iou)
        if any(lam < 0 for lam in lams):
            raise ValueError("cost weights must be non-negative")
        if not any(lam > 0 for lam in lams):
            raise ValueError("at least one cost weight must be strictly positive")
        if not np.isfinite(self.c_background):
            raise ValueError("c_background must be finite")

    @classmethod
    def detr(cls, c_background: float = 0.8) -> "CostWeights":
        return cls(2.0, 5.0, 2.0, 0.0, c_background)

    @classmethod
    def ssd(cls, c_background: float = 0.5) -> "CostWeights":
        """IoU-only cost; ``c_background`` is the 0.5 anchor threshold."""
        return cls(0.0, 0.0, 0.0, 1.0, c_background)


@dataclass(frozen=True)
class CostMatrix:
    """Dense ``Np x (Ng + 1)`` cost; the last column is background when
    ``background`` is true."""

    values: np.ndarray
    background: bool = True

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {vals.shape}")
        if vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError(f"cost matrix must be non-empty, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("cost matrix entries must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_pred(self) -> int:
        return self.values.shape[0]

    @property
    def n_gt(self) -> int:
        return self.values.shape[1] - int(self.background)

    @property
    def gt_block(self) -> np.ndarray:
        return self.values[:, : self.n_gt]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class MarginalPair:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float)
        b = np.array(self.beta, dtype=float)
        if a.ndim != 1 or b.ndim != 1:
            raise ValueError("marginals must be vectors")
        if np.any(a < 0) or np.any(b < 0):
            raise ValueError("marginals must be non-negative")
        if abs(a.sum() - 1.0) > _MASS_ATOL or abs(b.sum() - 1.0) > _MASS_ATOL:
            raise ValueError(f"marginals must have unit mass, got {a.sum()} and {b.sum()}")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


def build_cost(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruth],
    weights: CostWeights | None = None,
) -> CostMatrix:
    """Assemble the cost matrix with a trailing constant background column.

    Entry ``(i, j)`` is ``lambda_prob * (1 - p_i[class_j]) + lambda_l1 * L1
    + lambda_giou * (1 - GIoU) + lambda_iou * (1 - IoU)``.
    """
    w = CostWeights() if weights is None else weights
    if len(preds) < 1:
        raise ValueError("at least one prediction is required")
    n_classes = {p.class_probs.shape[0] for p in preds}
    if len(n_classes) != 1:
        raise ValueError(f"class_probs lengths differ across predictions: {sorted(n_classes)}")
    (nc,) = n_classes
    probs = np.stack([p.class_probs for p in preds])
    pboxes = np.stack([p.box.as_array() for p in preds])

    cost = np.empty((len(preds), len(gts) + 1))
    cost[:, -1] = w.c_background
    if gts:
        ids = np.array([g.class_id for g in gts], dtype=int)
        if ids.max() >= nc:
            raise ValueError(f"class_id {ids.max()} out of range for {nc} classes")
        gboxes = np.stack([g.box.as_array() for g in gts])
        block = np.zeros((len(preds), len(gts)))
        if w.lambda_prob:
            block += w.lambda_prob * (1.0 - probs[:, ids])
        if w.lambda_l1:
            block += w.lambda_l1 * pairwise_l1(pboxes, gboxes)
        if w.lambda_giou:
            block += w.lambda_giou * (1.0 - pairwise_giou(pboxes, gboxes))
        if w.lambda_iou:
            block += w.lambda_iou * (1.0 - pairwise_iou(pboxes, gboxes))
        cost[:, :-1] = block
    return CostMatrix(cost, background=True)


def background_marginals(n_pred: int, n_gt: int) -> MarginalPair:
    """Uniform prediction mass; each ground truth gets ``1/Np`` and the
    background column absorbs the remaining ``(Np - Ng)/Np``.

    With these marginals, balanced transport on the augmented matrix
    solves the same problem as bipartite matching.
    """
    if n_pred < 1:
        raise ValueError("n_pred must be >= 1")
    if not 0 <= n_gt <= n_pred:
        raise ValueError(f"need 0 <= n_gt <= n_pred, got n_gt={n_gt}, n_pred={n_pred}")
    alpha = np.full(n_pred, 1.0 / n_pred)
    beta = np.full(n_gt + 1, 1.0 / n_pred)
    beta[-1] = (n_pred - n_gt) / n_pred
    return MarginalPair(alpha, beta)


def uniform_marginals(n_rows: int, n_cols: int) -> MarginalPair:
    """Uniform marginals without a background entry."""
    return MarginalPair(np.full(n_rows, 1.0 / n_rows), np.full(n_cols, 1.0 / n_cols))
