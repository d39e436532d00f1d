"""Timing benchmark and parameter sweeps over synthetic problems."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .analysis import entropy, epsilon_rule
from .cost import CostMatrix, CostWeights, background_marginals, build_cost
from .exact import hungarian
from .geometry import pairwise_giou, pairwise_l1
from .scaling import SolverConfig, solve_batch
from .synthetic import generate_predictions, generate_scene

__all__ = [
    "BenchRecord",
    "SweepRow",
    "BENCH_SOLVERS",
    "SWEEP_PARAMS",
    "bench_problems",
    "run_bench",
    "generated_problems",
    "run_sweep",
]

BENCH_SOLVERS = ("hungarian", "sinkhorn", "unbalanced")
SWEEP_PARAMS = ("tau1", "tau2", "eps")
N_BENCH_CLASSES = 20


@dataclass(frozen=True)
class BenchRecord:
    solver: str
    np: int
    ng: int
    batch: int
    iters: int
    mean_ms: float
    std_ms: float

    FIELDS = ("solver", "np", "ng", "batch", "iters", "mean_ms", "std_ms")

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


def _random_boxes(rng: np.random.Generator, n: int) -> np.ndarray:
    wh = rng.uniform(0.02, 0.4, size=(n, 2))
    c = rng.uniform(wh / 2, 1 - wh / 2)
    return np.hstack([c, wh])


def bench_problems(n_pred: int, n_gt: int, batch: int, seed: int = 0) -> list[CostMatrix]:
    """Composite matching costs of random boxes and class scores.

    Each matrix is divided by its largest entry so values lie in [0, 1];
    this keeps the plain-mode kernel finite at the rule-of-thumb epsilon and
    leaves the optimal assignment unchanged.
    """
    rng = np.random.default_rng(seed)
    w = CostWeights.detr()
    out = []
    for _ in range(batch):
        probs = rng.dirichlet(np.ones(N_BENCH_CLASSES), size=n_pred)
        ids = rng.integers(0, N_BENCH_CLASSES, size=n_gt)
        pb, gb = _random_boxes(rng, n_pred), _random_boxes(rng, n_gt)
        cost = np.empty((n_pred, n_gt + 1))
        cost[:, :-1] = (
            w.lambda_prob * (1.0 - probs[:, ids])
            + w.lambda_l1 * pairwise_l1(pb, gb)
            + w.lambda_giou * (1.0 - pairwise_giou(pb, gb))
        )
        cost[:, -1] = w.c_background
        out.append(CostMatrix(cost / cost.max()))
    return out


def _time_ms(fn, repeats: int) -> list[float]:
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        out.append((time.perf_counter() - t0) * 1e3)
    return out


def run_bench(
    nps: Sequence[int],
    ng: int = 20,
    batch: int = 16,
    iters: int = 20,
    repeats: int = 3,
    solvers: Sequence[str] = BENCH_SOLVERS,
    seed: int = 0,
    workers: int | None = None,
    tau2: float = 1.0,
) -> list[BenchRecord]:
    """Wall time of matching one batch, cost construction excluded.

    Hungarian solves the batch one problem after another; the scaling
    solvers go through :func:`solve_batch` in plain mode with ``iters``
    fixed iterations at the entropic parameter given by
    :func:`epsilon_rule`.
    """
    unknown = set(solvers) - set(BENCH_SOLVERS)
    if unknown:
        raise ValueError(f"unknown solvers {sorted(unknown)}; choose from {BENCH_SOLVERS}")
    if repeats < 1 or batch < 1 or iters < 1:
        raise ValueError("repeats, batch and iters must be >= 1")
    records = []
    for n_pred in nps:
        if n_pred < ng:
            raise ValueError(f"np={n_pred} is smaller than ng={ng}")
        costs = bench_problems(n_pred, ng, batch, seed)
        marg = background_marginals(n_pred, ng)
        base = SolverConfig(epsilon=epsilon_rule(n_pred), max_iters=iters)
        for solver in solvers:
            if solver == "hungarian":
                fn = lambda: [hungarian(c) for c in costs]  # noqa: E731
            else:
                cfg = base if solver == "sinkhorn" else replace(base, tau2=tau2)
                problems = [(c, marg) for c in costs]
                fn = lambda cfg=cfg, problems=problems: solve_batch(problems, cfg, workers)  # noqa: E731
            fn()  # warm-up
            times = _time_ms(fn, repeats)
            std = statistics.stdev(times) if len(times) > 1 else 0.0
            records.append(BenchRecord(solver, n_pred, ng, batch, iters, statistics.fmean(times), std))
    return records


def generated_problems(n_problems: int, n_pred: int, seed: int = 0, noise: float = 0.05) -> list[CostMatrix]:
    """Cost matrices of synthetic scenes with at most ``n_pred`` ground truths each."""
    out = []
    for k in range(n_problems):
        scene = generate_scene(seed + k)
        gts = scene.gts[:n_pred]
        preds = generate_predictions(scene, n_pred, noise=noise, seed=seed + k, per_gt=2)
        out.append(build_cost(preds, gts))
    return out


@dataclass(frozen=True)
class SweepRow:
    param: str
    value: float
    background_fraction: float
    mean_multiplicity: float
    mean_entropy: float
    mean_transport_cost: float

    FIELDS = ("param", "value", "background_fraction", "mean_multiplicity", "mean_entropy", "mean_transport_cost")

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


def _multiplicity(plan: np.ndarray) -> float:
    """Mean over ground truths of ``Np`` times the mass of rows whose argmax is that ground truth."""
    n_pred, m = plan.shape
    n_gt = m - 1
    if n_gt == 0:
        return math.nan
    best = np.argmax(plan, axis=1)
    mass = np.zeros(m)
    np.add.at(mass, best, plan[np.arange(n_pred), best])
    return float(n_pred * mass[:n_gt].mean())


def run_sweep(
    param: str,
    values: Sequence[float],
    costs: Sequence[CostMatrix],
    base: SolverConfig | None = None,
) -> list[SweepRow]:
    """Aggregate match statistics of the stabilized scaling solver per parameter value.

    Without ``base``, the entropic parameter follows :func:`epsilon_rule`
    for each problem and both constraints are hard.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {SWEEP_PARAMS}, got {param!r}")
    if not costs:
        raise ValueError("no problems to sweep over")
    rows = []
    for value in values:
        bg, mult, ent, transport = [], [], [], []
        for cost in costs:
            cfg = base or SolverConfig(
                epsilon=epsilon_rule(cost.n_pred), max_iters=500, residual_tol=1e-9, stabilized=True
            )
            field = "epsilon" if param == "eps" else param
            cfg = replace(cfg, **{field: float(value)})
            marg = background_marginals(cost.n_pred, cost.n_gt)
            (plan, _), = solve_batch([(cost, marg)], cfg, workers=1)
            bg.append(float(plan[:, -1].sum() / plan.sum()))
            m = _multiplicity(plan)
            if not math.isnan(m):
                mult.append(m)
            ent.append(entropy(plan))
            transport.append(float((plan * cost.values).sum()))
        rows.append(
            SweepRow(
                param,
                float(value),
                statistics.fmean(bg),
                statistics.fmean(mult) if mult else math.nan,
                statistics.fmean(ent),
                statistics.fmean(transport),
            )
        )
    return rows
