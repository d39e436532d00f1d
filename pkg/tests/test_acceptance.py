"""Acceptance suite. Each test prints one PASS/FAIL line in the terminal summary.

Run with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_cost, random_sizes
from uotod.analysis import common_measure, entropy, epsilon_rule, project_uniform, unbalanced_objective
from uotod.cost import MarginalPair, background_marginals, uniform_marginals
from uotod.exact import assignment_to_plan, brute_force_bm, closest_per_prediction, hungarian
from uotod.harness import run_bench
from uotod.mining import count_positives_negatives, select_hard_negatives
from uotod.scaling import (
    SolverConfig,
    dual_softmax,
    first_iteration_plan,
    sinkhorn,
    softmax_limit,
    unbalanced_scaling,
)

INF = math.inf
C_BG = 0.8


def test_c01_matching_equals_transport(report):
    rng = np.random.default_rng(101)
    cfg = SolverConfig(1e-3, max_iters=5000, residual_tol=1e-8, stabilized=True, eps_start=1.0)
    t0 = time.perf_counter()
    exact_ok, cost_err, entry_err, entry_bad = True, 0.0, 0.0, 0
    for _ in range(200):
        n, g = random_sizes(rng, max_pred=8)
        cost = random_cost(rng, n, g, C_BG)
        a = hungarian(cost)
        exact_ok &= a.total_cost == brute_force_bm(cost).total_cost
        plan, _ = sinkhorn(cost, background_marginals(n, g), cfg)
        # matching cost on the transport scale: 1/Np per pair plus the background share
        target = (a.total_cost + C_BG * (n - g)) / n
        cost_err = max(cost_err, abs(float((plan * cost).sum()) - target))
        dev = float(np.minimum(plan, np.abs(plan - 1 / n)).max())
        entry_err = max(entry_err, dev)
        entry_bad += dev > 1e-3
    elapsed = time.perf_counter() - t0
    ok = exact_ok and cost_err <= 1e-3 and entry_bad == 0 and elapsed < 10
    report(1, ok, f"hungarian==brute={exact_ok} max|<P,C>-BM|={cost_err:.2e} "
                  f"entries off {{0,1/Np}} by >1e-3: {entry_bad}/200 (max {entry_err:.3f}) time={elapsed:.1f}s")
    assert exact_ok and cost_err <= 1e-3 and elapsed < 10
    assert entry_bad == 0, f"{entry_bad} instances have fractional entropic optima at eps=1e-3"


def test_c02_closest_match_limit(report):
    rng = np.random.default_rng(102)
    cfg = SolverConfig(1e-3, INF, 0.0, max_iters=100, residual_tol=1e-12, stabilized=True)
    t0 = time.perf_counter()
    rows = agree = bg_rows = done = 0
    while done < 200:
        n, g = random_sizes(rng, max_pred=8, min_gt=1)
        cost = random_cost(rng, n, g, C_BG)
        srt = np.sort(cost, axis=1)
        if g and np.any(srt[:, 1] - srt[:, 0] < 1e-2):
            continue  # keep tie-free instances only
        done += 1
        m = background_marginals(n, g)
        plan, _ = unbalanced_scaling(cost, m, cfg)
        agree += int((plan.argmax(axis=1) == closest_per_prediction(cost).argmax(axis=1)).sum())
        rows += n
        high = cost.copy()
        high[:, -1] = cost[:, :-1].max() + 0.5
        plan_h, _ = unbalanced_scaling(high, m, cfg)
        bg_rows += int((plan_h.argmax(axis=1) == g).sum())
    elapsed = time.perf_counter() - t0
    ok = agree == rows and bg_rows == 0 and elapsed < 10
    report(2, ok, f"argmax agreement {agree}/{rows} rows, background rows with high c_bg={bg_rows}, time={elapsed:.1f}s")
    assert ok


def test_c03_softmax_closed_forms(report):
    rng = np.random.default_rng(103)
    worst_sm, worst_bis, worst_dual, max_iters = 0.0, 0.0, 0.0, 0
    for _ in range(50):
        n, g = random_sizes(rng, max_pred=10, min_gt=1)
        cost = random_cost(rng, n, g, C_BG)
        m = background_marginals(n, g)
        plan, state = unbalanced_scaling(cost, m, SolverConfig(1.0, 0.0, INF, max_iters=50, residual_tol=1e-12))
        worst_sm = max(worst_sm, float(np.abs(plan - softmax_limit(cost, m, 1.0)).max()))
        max_iters = max(max_iters, state.iterations_run)

        block = cost[:, :g]
        k = np.exp(-block / 0.5)
        bis = k / (k.sum(axis=0, keepdims=True) * k.sum(axis=1, keepdims=True))
        one = first_iteration_plan(block, uniform_marginals(n, g), 0.5)
        worst_bis = max(worst_bis, float(np.abs(one - bis).max()))

        k = np.exp(-cost / 0.5)
        product = (k / k.sum(axis=1, keepdims=True)) * (k / k.sum(axis=0, keepdims=True))
        worst_dual = max(worst_dual, float(np.abs(dual_softmax(cost, 0.5) - product).max()))
    ok = worst_sm <= 1e-9 and max_iters <= 2 and worst_bis <= 1e-12 and worst_dual <= 1e-12
    report(3, ok, f"softmax limit err={worst_sm:.1e} iters<={max_iters} one-iteration err={worst_bis:.1e} "
                  f"dual-softmax err={worst_dual:.1e}")
    assert ok


def _three_by_two(c1, c2, c3, tau1):
    cost = np.array([[c2, c2 + c1], [c1, c1], [c3 + c1, c3]])
    marg = MarginalPair(np.full(3, 1 / 3), [0.5, 0.5])
    hung = np.array([[0.5, 0.0], [0.0, 0.5], [0.0, 0.0]])
    mini = np.array([[0.0, 0.0], [0.5, 0.5], [0.0, 0.0]])

    class Cfg:
        epsilon, tau2 = 0.0, INF

    Cfg.tau1 = tau1
    val = lambda p: unbalanced_objective(p, cost, marg, Cfg, include_beta=False).total  # noqa: E731
    return val(hung), val(mini)


def test_c04_objective_closed_forms(report):
    worst = 0.0
    for c1, c2, c3, tau1 in [(0.0, 1.0, 0.5, 0.3), (0.2, 0.9, 0.4, 1.7), (1.0, 3.0, 2.0, 0.01)]:
        h, m = _three_by_two(c1, c2, c3, tau1)
        worst = max(worst, abs(h - (0.5 * (c1 + c2) + tau1 * math.log(1.5))), abs(m - (c1 + tau1 * math.log(3))))
    lo, hi = 1e-6, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        h, m = _three_by_two(0.0, 1.0, 0.5, mid)
        lo, hi = (lo, mid) if h < m else (mid, hi)
    crossover = 0.5 * (lo + hi)
    err = abs(crossover - 1 / (2 * math.log(2)))
    ok = worst <= 1e-12 and err <= 1e-9
    report(4, ok, f"closed-form err={worst:.1e} crossover={crossover:.12f} (err {err:.1e})")
    assert ok


def test_c05_common_measure(report):
    a = common_measure([Fraction(2, 3), Fraction(4, 5)])
    b = common_measure([Fraction(2, 3), Fraction(5, 6), Fraction(4, 7)])
    ok = a == Fraction(2, 15) and b == Fraction(1, 42)
    report(5, ok, f"CM(2/3,4/5)={a} CM(2/3,5/6,4/7)={b}")
    assert ok


def test_c06_entropy_and_projection(report):
    rng = np.random.default_rng(106)
    uni_err = 0.0
    for k in range(1, 13):
        plan = np.zeros(12)
        plan[rng.choice(12, size=k, replace=False)] = 1 / k
        uni_err = max(uni_err, abs(entropy(plan.reshape(3, 4)) - (math.log(k) + 1)))

    bound_fail = 0
    for i in range(1000):
        n, g = random_sizes(rng, max_pred=12)
        if i % 2:
            plan = rng.dirichlet(np.ones(n * (g + 1)) * rng.uniform(0.05, 2)).reshape(n, g + 1)
        else:
            plan, _ = unbalanced_scaling(random_cost(rng, n, g), background_marginals(n, g),
                                         SolverConfig(rng.uniform(0.01, 1), max_iters=50, stabilized=True))
            plan = plan / plan.sum()
        h = entropy(plan)
        bound_fail += not (1 - 1e-12 <= h <= math.log(n * (g + 1)) + 1 + 1e-12)

    proj_fail = 0
    for _ in range(500):
        shape = tuple(rng.integers(1, 5, size=2))
        plan = rng.dirichlet(np.ones(shape[0] * shape[1]) * rng.uniform(0.1, 2)).reshape(shape)
        flat = plan.ravel()
        order = np.argsort(-flat, kind="stable")
        best_d = INF
        for k in range(1, flat.size + 1):
            cand = np.zeros(flat.size)
            cand[order[:k]] = 1 / k
            best_d = min(best_d, float(((flat - cand) ** 2).sum()))
        got = float(((plan - project_uniform(plan)) ** 2).sum())
        proj_fail += abs(got - best_d) > 1e-12
    ok = uni_err <= 1e-12 and bound_fail == 0 and proj_fail == 0
    report(6, ok, f"uniform-match entropy err={uni_err:.1e} bound failures={bound_fail}/1000 "
                  f"projection mismatches={proj_fail}/500")
    assert ok


def test_c07_marginal_residuals(report):
    rng = np.random.default_rng(107)
    worst, fails = 0.0, 0
    for _ in range(100):
        n = int(rng.integers(1, 301))
        g = int(rng.integers(0, min(n, 30) + 1))
        cost = random_cost(rng, n, g, C_BG)
        m = background_marginals(n, g)
        plan, _ = sinkhorn(cost, m, SolverConfig(0.05, max_iters=20000, residual_tol=1e-6))
        res = float(np.abs(plan.sum(1) - m.alpha).sum() + np.abs(plan.sum(0) - m.beta).sum())
        worst = max(worst, res)
        fails += res > 2e-6
    report(7, fails == 0, f"max combined l1 residual={worst:.2e} failures={fails}/100")
    assert fails == 0


def test_c08_mining_bookkeeping(report):
    rng = np.random.default_rng(108)
    count_err, over_budget = 0.0, 0
    for i in range(100):
        n, g = random_sizes(rng, max_pred=40)
        cost = random_cost(rng, n, g, C_BG)
        if i % 2:
            plan = assignment_to_plan(hungarian(cost), n, g)
        else:
            plan, _ = sinkhorn(cost, background_marginals(n, g),
                               SolverConfig(rng.uniform(0.02, 1), max_iters=5000, residual_tol=1e-13, stabilized=True))
        n_pos, n_neg = count_positives_negatives(plan, n, g)
        count_err = max(count_err, abs(n_pos - g), abs(n_neg - (n - g)))
        res = select_hard_negatives(plan, rng.uniform(size=n))
        over_budget += res.n_neg_kept > 3 * res.n_pos + 1e-9
    ok = count_err <= 1e-9 and over_budget == 0
    report(8, ok, f"max count error={count_err:.1e} budget violations={over_budget}/100")
    assert ok


@pytest.mark.slow
def test_c09_timing_trend(report):
    t0 = time.perf_counter()
    records = run_bench([100, 300, 8732], ng=20, batch=16, iters=20, repeats=5, solvers=("hungarian", "sinkhorn"))
    elapsed = time.perf_counter() - t0
    hung = {r.np: r.mean_ms for r in records if r.solver == "hungarian"}
    scal = {r.np: r.mean_ms for r in records if r.solver == "sinkhorn"}
    speedup = hung[8732] / scal[8732]
    monotone = hung[100] < hung[300] < hung[8732]
    ok = speedup >= 2 and monotone and elapsed < 300
    report(9, ok, f"Np=8732 hungarian {hung[8732]:.1f} ms vs batched scaling {scal[8732]:.1f} ms "
                  f"(speedup {speedup:.2f}x, need 2x); hungarian monotone={monotone}; time={elapsed:.0f}s")
    assert monotone and elapsed < 300
    assert speedup >= 2


def test_c10_epsilon_rule(report):
    err = abs(epsilon_rule(100, 0.12, "experiments") - 0.12 / (math.log(200) + 1))
    ident = max(abs(epsilon_rule(n, e, "experiments") - epsilon_rule(2 * n, e, "appendix"))
                for n in (1, 7, 100, 8732) for e in (0.05, 0.12, 1.0))
    ok = err <= 1e-12 and ident <= 1e-12
    report(10, ok, f"eps(100)={epsilon_rule(100):.12f} (err {err:.1e}); convention identity err={ident:.1e}")
    assert ok
