"""Matching predictions to ground truths with (unbalanced) optimal transport."""

from .analysis import (
    ObjectiveBreakdown,
    common_measure,
    entropy,
    epsilon_rule,
    kl,
    project_uniform,
    unbalanced_objective,
)
from .cost import (
    CostMatrix,
    CostWeights,
    GroundTruth,
    MarginalPair,
    Prediction,
    background_marginals,
    build_cost,
    uniform_marginals,
)
from .estimators import (
    ClosestMatcher,
    DualSoftmaxMatcher,
    HungarianMatcher,
    MatchingCost,
    SinkhornMatcher,
    SoftmaxMatcher,
    UnbalancedMatcher,
)
from .exact import (
    Assignment,
    assignment_to_plan,
    brute_force_bm,
    closest_per_groundtruth,
    closest_per_prediction,
    hungarian,
)
from .geometry import Box, giou, iou, l1_box, pairwise_giou, pairwise_iou, pairwise_l1
from .mining import MiningResult, count_positives_negatives, select_hard_negatives
from .scaling import (
    BatchSolveError,
    NumericalInstabilityError,
    ScalingState,
    SolverConfig,
    dual_softmax,
    first_iteration_plan,
    one_iteration_softmax,
    sinkhorn,
    softmax_limit,
    solve_batch,
    unbalanced_scaling,
)
from .synthetic import PlacementError, SyntheticScene, generate_predictions, generate_scene

__version__ = "0.1.0"

import types as _types

__all__ = [n for n, v in globals().items() if not n.startswith("_") and not isinstance(v, _types.ModuleType)]
