import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_cost, random_sizes
from uotod.cost import background_marginals, uniform_marginals
from uotod.scaling import (
    BatchSolveError,
    NumericalInstabilityError,
    SolverConfig,
    dual_softmax,
    first_iteration_plan,
    one_iteration_softmax,
    sinkhorn,
    softmax_limit,
    solve_batch,
    unbalanced_scaling,
)

INF = math.inf


def naive_scaling(cost, alpha, beta, eps, tau1, tau2, iters):
    """Textbook loop over plain Python floats."""
    n, m = cost.shape
    k = [[math.exp(-cost[i, j] / eps) for j in range(m)] for i in range(n)]
    lam1 = 1.0 if math.isinf(tau1) else tau1 / (tau1 + eps)
    lam2 = 1.0 if math.isinf(tau2) else tau2 / (tau2 + eps)
    u, v = [1 / n] * n, [1 / m] * m
    for _ in range(iters):
        u = [(alpha[i] / sum(k[i][j] * v[j] for j in range(m))) ** lam1 for i in range(n)]
        v = [(beta[j] / sum(k[i][j] * u[i] for i in range(n))) ** lam2 for j in range(m)]
    return np.array([[u[i] * k[i][j] * v[j] for j in range(m)] for i in range(n)])


def instance(rng, n=6, g=3):
    cost = random_cost(rng, n, g)
    return cost, background_marginals(n, g)


class TestConfig:
    def test_exponents(self):
        assert SolverConfig(0.5).exponents == (1.0, 1.0)
        assert SolverConfig(0.5, tau1=0.0, tau2=1.5).exponents == (0.0, 0.75)

    @pytest.mark.parametrize(
        "kwargs",
        [{"epsilon": 0}, {"epsilon": -1}, {"tau1": -1}, {"tau2": math.nan}, {"max_iters": 0},
         {"residual_tol": -1}, {"eps_start": 1.0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)


class TestAgainstNaiveLoop:
    @pytest.mark.parametrize("tau1,tau2", [(INF, INF), (INF, 0.3), (0.2, 2.0), (0.0, INF), (INF, 0.0)])
    @pytest.mark.parametrize("stabilized", [False, True])
    def test_iterates(self, rng, tau1, tau2, stabilized):
        cost, m = instance(rng)
        cfg = SolverConfig(0.3, tau1, tau2, max_iters=7, stabilized=stabilized)
        plan, state = unbalanced_scaling(cost, m, cfg)
        ref = naive_scaling(cost, m.alpha, m.beta, 0.3, tau1, tau2, 7)
        np.testing.assert_allclose(plan, ref, rtol=1e-10, atol=1e-15)
        assert state.iterations_run == 7

    def test_sinkhorn_equals_balanced_unbalanced(self, rng):
        cost, m = instance(rng)
        cfg = SolverConfig(0.1, max_iters=30)
        p1, s1 = sinkhorn(cost, m, cfg)
        p2, s2 = unbalanced_scaling(cost, m, cfg)
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(s1.u, s2.u)

    def test_sinkhorn_rejects_finite_tau(self, rng):
        cost, m = instance(rng)
        with pytest.raises(ValueError):
            sinkhorn(cost, m, SolverConfig(0.1, tau2=1.0))


class TestConvergence:
    def test_entropic_optimality_certificate(self, rng):
        for _ in range(20):
            n, g = random_sizes(rng, max_pred=10)
            cost = random_cost(rng, n, g)
            m = background_marginals(n, g)
            cfg = SolverConfig(0.05, max_iters=100_000, residual_tol=1e-12, stabilized=True, eps_start=1.0)
            plan, state = sinkhorn(cost, m, cfg)
            assert state.final_residual <= 1e-12
            np.testing.assert_allclose(plan.sum(axis=1), m.alpha, atol=1e-12)
            np.testing.assert_allclose(plan.sum(axis=0), m.beta, atol=1e-12)
            # optimal plans factor as exp((f_i + g_j - C_ij) / eps) on their support
            keep = plan > 0
            z = np.where(keep, np.log(np.where(keep, plan, 1.0)) + cost / 0.05, 0.0)
            cols = np.nonzero(keep.all(axis=0))[0]
            f = z[:, cols[0]]
            g_ = z[0] - z[0, cols[0]]
            np.testing.assert_allclose(z[:, cols], (f[:, None] + g_[None, :])[:, cols], atol=1e-8)

    def test_plain_and_stabilized_agree(self, rng):
        cost, m = instance(rng, 8, 4)
        cfg = SolverConfig(0.05, tau2=0.5, max_iters=200)
        p1, _ = unbalanced_scaling(cost, m, cfg)
        p2, s2 = unbalanced_scaling(cost, m, SolverConfig(0.05, tau2=0.5, max_iters=200, stabilized=True))
        np.testing.assert_allclose(p1, p2, rtol=1e-9, atol=1e-15)
        assert s2.log_domain

    def test_plain_underflow_raises(self, rng):
        cost, m = instance(rng)
        cost = cost + 5.0
        with pytest.raises(NumericalInstabilityError):
            sinkhorn(cost, m, SolverConfig(1e-3, max_iters=5))
        plan, _ = sinkhorn(cost, m, SolverConfig(1e-3, max_iters=5, stabilized=True))
        assert np.all(np.isfinite(plan))

    def test_unique_fixed_point(self, rng):
        cost, m = instance(rng)
        cfg = SolverConfig(0.1, tau1=1.0, tau2=0.5, max_iters=3000, residual_tol=1e-13)
        p1, _ = unbalanced_scaling(cost, m, cfg)
        p2, _ = unbalanced_scaling(cost, m, cfg, v0=rng.uniform(0.1, 5.0, size=cost.shape[1]))
        np.testing.assert_allclose(p1, p2, rtol=1e-8, atol=1e-14)

    def test_annealing_reaches_same_plan(self, rng):
        cost, m = instance(rng)
        base = SolverConfig(0.02, max_iters=20000, residual_tol=1e-12, stabilized=True)
        p1, _ = sinkhorn(cost, m, base)
        p2, s2 = sinkhorn(cost, m, SolverConfig(0.02, max_iters=20000, residual_tol=1e-12, stabilized=True, eps_start=1.0))
        np.testing.assert_allclose(p1, p2, atol=1e-10)
        assert s2.iterations_run <= 20000

    def test_large_tau_approaches_balanced(self, rng):
        cost, m = instance(rng)
        bal, _ = sinkhorn(cost, m, SolverConfig(0.1, max_iters=2000, residual_tol=1e-12))
        unb, _ = unbalanced_scaling(cost, m, SolverConfig(0.1, 1e6, 1e6, max_iters=2000, residual_tol=1e-13))
        np.testing.assert_allclose(unb, bal, atol=1e-6)

    @given(st.integers(0, 10_000), st.sampled_from([0.0, 0.1, 1.0, INF]), st.sampled_from([0.0, 0.1, 1.0, INF]))
    def test_dual_objective_never_decreases(self, seed, tau1, tau2):
        rng = np.random.default_rng(seed)
        n, g = random_sizes(rng, max_pred=6)
        cost = random_cost(rng, n, g)
        cfg = SolverConfig(0.1, tau1, tau2, max_iters=30, check_dual=True)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            plan, _ = unbalanced_scaling(cost, background_marginals(n, g), cfg)
        assert np.all(plan >= 0)


class TestClosedForms:
    def test_softmax_over_predictions(self, rng):
        cost, m = instance(rng)
        plan, state = unbalanced_scaling(cost, m, SolverConfig(1.0, 0.0, INF, max_iters=50, residual_tol=1e-14))
        np.testing.assert_allclose(plan, softmax_limit(cost, m, 1.0, "predictions"), atol=1e-12)
        assert state.iterations_run <= 2

    def test_softmax_over_ground_truths(self, rng):
        cost, m = instance(rng)
        plan, _ = unbalanced_scaling(cost, m, SolverConfig(1.0, INF, 0.0, max_iters=50, residual_tol=1e-14))
        np.testing.assert_allclose(plan, softmax_limit(cost, m, 1.0, "ground_truths"), atol=1e-12)

    def test_softmax_naive(self, rng):
        cost, m = instance(rng)
        k = np.exp(-cost / 0.5)
        np.testing.assert_allclose(softmax_limit(cost, m, 0.5), m.beta * k / k.sum(axis=0), rtol=1e-12)
        with pytest.raises(ValueError):
            softmax_limit(cost, m, 0.5, over="rows")

    def test_one_iteration_without_background(self, rng):
        cost = rng.uniform(size=(5, 4))
        m = uniform_marginals(5, 4)
        k = np.exp(-cost / 0.7)
        ref = k / (k.sum(axis=0)[None, :] * k.sum(axis=1)[:, None])
        plan = first_iteration_plan(cost, m, 0.7)
        np.testing.assert_allclose(plan, ref, rtol=1e-12)
        np.testing.assert_allclose(one_iteration_softmax(cost, 0.7), ref, rtol=1e-12)

    def test_one_iteration_with_background(self, rng):
        n, g = 6, 2
        cost, m = instance(rng, n, g)
        plan = first_iteration_plan(cost, m, 0.4)
        # agrees with the background-weighted closed form up to the global factor (Ng+1)/Np
        np.testing.assert_allclose(plan, (g + 1) / n * one_iteration_softmax(cost, 0.4, background=True), rtol=1e-12)

    def test_dual_softmax_product_identity(self, rng):
        cost = rng.uniform(size=(7, 4))
        k = np.exp(-cost / 0.3)
        product = (k / k.sum(axis=1, keepdims=True)) * (k / k.sum(axis=0, keepdims=True))
        np.testing.assert_allclose(dual_softmax(cost, 0.3), product, rtol=1e-12)
        with pytest.raises(ValueError):
            dual_softmax(cost, 0.0)


class TestBatch:
    def test_matches_sequential(self, rng):
        problems = [instance(rng, 20, 5) for _ in range(6)]
        cfg = SolverConfig(0.05, tau2=0.5, max_iters=40)
        seq = [unbalanced_scaling(c, m, cfg)[0] for c, m in problems]
        for workers in (1, 3):
            out = solve_batch(problems, cfg, workers=workers)
            for (plan, _), ref in zip(out, seq):
                np.testing.assert_array_equal(plan, ref)

    def test_error_carries_index(self, rng):
        good = instance(rng)
        bad = (good[0] + 800.0, good[1])
        with pytest.raises(BatchSolveError) as err:
            solve_batch([good, bad], SolverConfig(1.0, max_iters=3), workers=2)
        assert err.value.index == 1
        assert isinstance(err.value.error, NumericalInstabilityError)

    def test_thread_env(self, rng, monkeypatch):
        from uotod.scaling import n_workers

        monkeypatch.setenv("UOTOD_THREADS", "3")
        assert n_workers() == 3
        monkeypatch.setenv("UOTOD_THREADS", "zero")
        with pytest.raises(ValueError):
            n_workers()

    def test_empty(self):
        with pytest.raises(ValueError):
            solve_batch([])
