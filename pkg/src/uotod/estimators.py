"""scikit-learn style wrappers around the matching solvers.

``fit(C)`` solves the matching for one cost matrix (``Np x (Ng + 1)`` with a
trailing background column) and stores the plan. ``predict`` returns the
column each prediction is matched to (``Ng`` meaning background) and
``transform`` returns the plan.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_cost
from .cost import CostWeights, GroundTruth, Prediction, background_marginals, build_cost
from .exact import assignment_to_plan, closest_per_groundtruth, closest_per_prediction, hungarian
from .scaling import SolverConfig, dual_softmax, softmax_limit, unbalanced_scaling

__all__ = [
    "HungarianMatcher",
    "SinkhornMatcher",
    "UnbalancedMatcher",
    "ClosestMatcher",
    "SoftmaxMatcher",
    "DualSoftmaxMatcher",
    "MatchingCost",
]


class _Matcher(TransformerMixin, BaseEstimator):
    def _plan(self, cost, marginals) -> np.ndarray:
        raise NotImplementedError

    def fit(self, X, y=None):
        cost = check_cost(X, background=True)
        if cost.n_gt > cost.n_pred:
            raise ValueError(f"{cost.n_gt} ground truths exceed {cost.n_pred} predictions")
        self.n_pred_, self.n_gt_ = cost.n_pred, cost.n_gt
        self.plan_ = self._plan(cost, background_marginals(cost.n_pred, cost.n_gt))
        return self

    def transform(self, X=None):
        check_is_fitted(self, "plan_")
        return self.plan_

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).plan_

    def predict(self, X=None):
        """Column of largest mass per prediction; ``n_gt_`` is background."""
        check_is_fitted(self, "plan_")
        return np.argmax(self.plan_, axis=1)

    def fit_predict(self, X, y=None):
        return self.fit(X, y).predict()


class HungarianMatcher(_Matcher):
    """Exact bipartite matching; unmatched predictions go to background."""

    def _plan(self, cost, marginals):
        self.assignment_ = hungarian(cost)
        return assignment_to_plan(self.assignment_, cost.n_pred, cost.n_gt)


class _ScalingMatcher(_Matcher):
    def _config(self) -> SolverConfig:
        raise NotImplementedError

    def _plan(self, cost, marginals):
        plan, state = unbalanced_scaling(cost, marginals, self._config())
        self.n_iter_ = state.iterations_run
        self.residual_ = state.final_residual
        return plan


class SinkhornMatcher(_ScalingMatcher):
    def __init__(self, epsilon=0.1, max_iters=20, residual_tol=0.0, stabilized=False):
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.residual_tol = residual_tol
        self.stabilized = stabilized

    def _config(self):
        return SolverConfig(self.epsilon, math.inf, math.inf, self.max_iters, self.residual_tol, self.stabilized)


class UnbalancedMatcher(_ScalingMatcher):
    def __init__(self, epsilon=0.1, tau1=math.inf, tau2=1.0, max_iters=20, residual_tol=0.0, stabilized=False):
        self.epsilon = epsilon
        self.tau1 = tau1
        self.tau2 = tau2
        self.max_iters = max_iters
        self.residual_tol = residual_tol
        self.stabilized = stabilized

    def _config(self):
        return SolverConfig(self.epsilon, self.tau1, self.tau2, self.max_iters, self.residual_tol, self.stabilized)


class ClosestMatcher(_Matcher):
    """``per="prediction"``: each prediction to its cheapest column.
    ``per="ground_truth"``: each ground truth to its cheapest prediction."""

    def __init__(self, per="prediction"):
        self.per = per

    def _plan(self, cost, marginals):
        if self.per == "prediction":
            return closest_per_prediction(cost, marginals)
        if self.per == "ground_truth":
            return closest_per_groundtruth(cost, marginals)
        raise ValueError(f"per must be 'prediction' or 'ground_truth', got {self.per!r}")


class SoftmaxMatcher(_Matcher):
    def __init__(self, epsilon=0.1, over="predictions"):
        self.epsilon = epsilon
        self.over = over

    def _plan(self, cost, marginals):
        return softmax_limit(cost, marginals, self.epsilon, over=self.over)


class DualSoftmaxMatcher(_Matcher):
    def __init__(self, epsilon=0.1):
        self.epsilon = epsilon

    def _plan(self, cost, marginals):
        return dual_softmax(cost, self.epsilon)


class MatchingCost(TransformerMixin, BaseEstimator):
    """Fit on ground truths, transform predictions into a cost matrix."""

    def __init__(self, lambda_prob=2.0, lambda_l1=5.0, lambda_giou=2.0, lambda_iou=0.0, c_background=0.8):
        self.lambda_prob = lambda_prob
        self.lambda_l1 = lambda_l1
        self.lambda_giou = lambda_giou
        self.lambda_iou = lambda_iou
        self.c_background = c_background

    def fit(self, X: list[GroundTruth], y=None):
        self.ground_truth_ = list(X)
        self.weights_ = CostWeights(
            self.lambda_prob, self.lambda_l1, self.lambda_giou, self.lambda_iou, self.c_background
        )
        return self

    def transform(self, X: list[Prediction]) -> np.ndarray:
        check_is_fitted(self, "ground_truth_")
        return np.array(build_cost(list(X), self.ground_truth_, self.weights_).values)
