"""Entropic scaling solvers for balanced and unbalanced transport.

Both solvers iterate

    u <- (alpha / (K v)) ** (tau1 / (tau1 + eps))
    v <- (beta / (K^T u)) ** (tau2 / (tau2 + eps))

on the Gibbs kernel ``K = exp(-C / eps)`` and return ``diag(u) K diag(v)``.
A constraint parameter equal to ``math.inf`` is a hard constraint and its
exponent is exactly 1; ``0`` removes the constraint (exponent 0).

``stabilized=True`` runs the same iterations on ``log u`` and ``log v`` with
log-sum-exp reductions, which stays finite for small ``eps``.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np

from ._validation import check_cost, check_marginals
from .cost import MarginalPair

__all__ = [
    "SolverConfig",
    "ScalingState",
    "NumericalInstabilityError",
    "BatchSolveError",
    "sinkhorn",
    "unbalanced_scaling",
    "first_iteration_plan",
    "softmax_limit",
    "one_iteration_softmax",
    "dual_softmax",
    "solve_batch",
    "n_workers",
]

THREADS_ENV = "UOTOD_THREADS"
ANNEAL_FACTOR = 0.5
ANNEAL_STAGE_ITERS = 50


class NumericalInstabilityError(ArithmeticError):
    """Plain-mode scaling hit an underflow/overflow; use ``stabilized=True``."""


class BatchSolveError(RuntimeError):
    def __init__(self, index: int, error: Exception):
        super().__init__(f"problem {index}: {error}")
        self.index = index
        self.error = error


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the scaling solvers.

    ``residual_tol = 0`` runs exactly ``max_iters`` iterations. Otherwise the
    loop stops once the residual drops to ``residual_tol``: the l1 marginal
    error when both constraints are hard, the sup-norm change of
    ``(log u, log v)`` between iterations otherwise.

    ``eps_start`` (log domain only) warm-starts the solve by halving the
    entropic parameter from ``eps_start`` down to ``epsilon``, running at
    most ``ANNEAL_STAGE_ITERS`` iterations per intermediate stage and
    carrying the dual potentials over. ``max_iters`` bounds the total.
    """

    epsilon: float = 0.1
    tau1: float = math.inf
    tau2: float = math.inf
    max_iters: int = 20
    residual_tol: float = 0.0
    stabilized: bool = False
    check_dual: bool = False
    eps_start: float | None = None

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")
        for name in ("tau1", "tau2"):
            tau = getattr(self, name)
            if math.isnan(tau) or tau < 0:
                raise ValueError(f"{name} must be in [0, inf], got {tau}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.residual_tol < 0:
            raise ValueError("residual_tol must be >= 0")
        if self.eps_start is not None:
            if not self.stabilized:
                raise ValueError("eps_start requires stabilized=True")
            if not (self.eps_start > 0 and math.isfinite(self.eps_start)):
                raise ValueError(f"eps_start must be positive and finite, got {self.eps_start}")

    @property
    def balanced(self) -> bool:
        return math.isinf(self.tau1) and math.isinf(self.tau2)

    @property
    def exponents(self) -> tuple[float, float]:
        return _exponent(self.tau1, self.epsilon), _exponent(self.tau2, self.epsilon)


def _schedule(cfg: SolverConfig) -> list[float]:
    eps = cfg.epsilon
    if cfg.eps_start is None or cfg.eps_start <= eps:
        return [eps]
    out, e = [], cfg.eps_start
    while e > eps:
        out.append(e)
        e *= ANNEAL_FACTOR
    return out + [eps]


def _exponent(tau: float, eps: float) -> float:
    if math.isinf(tau):
        return 1.0
    return tau / (tau + eps)


@dataclass(frozen=True)
class ScalingState:
    """Dual scalings at exit. When ``log_domain`` is set, ``u`` and ``v``
    hold ``log u`` and ``log v``."""

    u: np.ndarray
    v: np.ndarray
    iterations_run: int
    final_residual: float
    log_domain: bool = False

    @property
    def log_u(self) -> np.ndarray:
        if self.log_domain:
            return self.u
        with np.errstate(divide="ignore"):
            return np.log(self.u)

    @property
    def log_v(self) -> np.ndarray:
        if self.log_domain:
            return self.v
        with np.errstate(divide="ignore"):
            return np.log(self.v)


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def _power(base: np.ndarray, lam: float) -> np.ndarray:
    if lam == 1.0:
        return base
    if lam == 0.0:
        return np.ones_like(base)
    return base**lam


def _scale_log(log_base: np.ndarray, lam: float) -> np.ndarray:
    if lam == 1.0:
        return log_base
    if lam == 0.0:
        return np.zeros_like(log_base)
    return lam * log_base


def _change(new: np.ndarray, old: np.ndarray) -> float:
    same = new == old  # also catches -inf == -inf
    with np.errstate(invalid="ignore"):
        diff = np.where(same, 0.0, np.abs(new - old))
    return float(np.max(diff)) if diff.size else 0.0


def _phi(mass: np.ndarray, pot: np.ndarray, tau: float) -> float:
    """Dual marginal term for potentials ``pot = eps * log scaling``."""
    if math.isinf(tau):
        keep = mass > 0
        return float(np.dot(mass[keep], pot[keep]))
    if tau == 0.0:
        # limit of the finite-tau term: 0 on non-negative potentials, -inf otherwise
        return -math.inf if np.any((pot < 0) & (mass > 0)) else 0.0
    return float(-tau * np.dot(mass, np.expm1(-pot / tau)))


class _DualMonitor:
    """Warns if the dual objective decreases; block updates maximize it exactly."""

    def __init__(self, logk, alpha, beta, cfg):
        self.logk, self.alpha, self.beta, self.cfg = logk, alpha, beta, cfg
        self.last = -math.inf

    def __call__(self, log_u, log_v, it):
        eps = self.cfg.epsilon
        with np.errstate(invalid="ignore", over="ignore"):
            mass = float(np.exp(self.logk + log_u[:, None] + log_v[None, :]).sum())
            value = (
                _phi(self.alpha, eps * log_u, self.cfg.tau1)
                + _phi(self.beta, eps * log_v, self.cfg.tau2)
                - eps * mass
            )
        tol = 1e-9 * max(1.0, abs(value))
        if value < self.last - tol:
            warnings.warn(
                f"dual objective decreased at iteration {it}: {self.last!r} -> {value!r}",
                RuntimeWarning,
                stacklevel=4,
            )
        self.last = value


def _scale(values, alpha, beta, cfg: SolverConfig, lam1, lam2, u0=None, v0=None):
    n, m = values.shape
    u = np.full(n, 1.0 / n) if u0 is None else np.asarray(u0, dtype=float)
    v = np.full(m, 1.0 / m) if v0 is None else np.asarray(v0, dtype=float)
    if u.shape != (n,) or v.shape != (m,) or np.any(u <= 0) or np.any(v <= 0):
        raise ValueError("initial scalings must be positive vectors matching the cost shape")
    balanced = lam1 == 1.0 and lam2 == 1.0
    eps = cfg.epsilon
    logk = -values / eps if cfg.stabilized or cfg.check_dual else None
    monitor = _DualMonitor(logk, alpha, beta, cfg) if cfg.check_dual else None

    if cfg.stabilized:
        log_a, log_b = _log(alpha), _log(beta)
        f, g = np.log(u), np.log(v)
        it, residual = 0, math.inf
        f_old, g_old, prev = f, g, None
        for e in _schedule(cfg):
            final = e == eps
            # carry the potentials eps * log u across stages
            if prev is not None:
                f, g = f * (prev / e), g * (prev / e)
            prev = e
            lk = logk if final else -values / e
            l1 = lam1 if lam1 in (0.0, 1.0) else _exponent(cfg.tau1, e)
            l2 = lam2 if lam2 in (0.0, 1.0) else _exponent(cfg.tau2, e)
            budget = cfg.max_iters - it if final else min(ANNEAL_STAGE_ITERS, cfg.max_iters - it - 1)
            for _ in range(max(budget, 0)):
                it += 1
                f_old, g_old = f, g
                f = _scale_log(log_a - _lse(lk + g[None, :], axis=1), l1)
                if monitor and final:
                    monitor(f, g, it)
                g = _scale_log(log_b - _lse(lk + f[:, None], axis=0), l2)
                if monitor and final:
                    monitor(f, g, it)
                if cfg.residual_tol > 0:
                    residual = _residual_log(lk, f, g, alpha, beta) if balanced else \
                        max(_change(f, f_old), _change(g, g_old))
                    if residual <= cfg.residual_tol:
                        break
        plan = np.exp(logk + f[:, None] + g[None, :])
        if cfg.residual_tol == 0 or not math.isfinite(residual):
            residual = _residual_plan(plan, alpha, beta) if balanced else \
                max(_change(f, f_old), _change(g, g_old))
        if not np.all(np.isfinite(plan)):
            raise NumericalInstabilityError("non-finite plan in log-domain scaling")
        return plan, ScalingState(f, g, it, float(residual), log_domain=True)

    # kernel stored transposed: both products then run as contiguous matvecs;
    # computed in place since allocation dominates exp on large matrices
    kt = np.empty((m, n))
    np.multiply(values.T, -1.0 / eps, out=kt)
    np.exp(kt, out=kt)
    it, residual = 0, math.inf
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        for it in range(1, cfg.max_iters + 1):
            u_old, v_old = u, v
            kv = kt.T @ v
            u = _power(alpha / kv, lam1)
            if monitor:
                monitor(_log(u), _log(v), it)
            ktu = kt @ u
            v = _power(beta / ktu, lam2)
            if monitor:
                monitor(_log(u), _log(v), it)
            if cfg.residual_tol > 0:
                _check_scalings(u, v, kv, ktu, it, eps)
                residual = _residual_scalings(kt, u, v, ktu, alpha, beta) if balanced else \
                    max(_change(_log(u), _log(u_old)), _change(_log(v), _log(v_old)))
                if residual <= cfg.residual_tol:
                    break
        _check_scalings(u, v, kv, ktu, it, eps)
        if cfg.residual_tol == 0 or not math.isfinite(residual):
            residual = _residual_scalings(kt, u, v, ktu, alpha, beta) if balanced else \
                max(_change(_log(u), _log(u_old)), _change(_log(v), _log(v_old)))
        kt *= u[None, :]
        kt *= v[:, None]
        plan = kt.T
    if not np.all(np.isfinite(plan)):
        raise NumericalInstabilityError(f"non-finite transport plan (epsilon={eps})")
    return plan, ScalingState(u, v, it, float(residual))


def _residual_scalings(kt, u, v, ktu, alpha, beta) -> float:
    return float(np.abs(u * (kt.T @ v) - alpha).sum() + np.abs(v * ktu - beta).sum())


def _check_scalings(u, v, kv, ktu, it, eps) -> None:
    # an underflowed kernel sum turns a scaling infinite, and that persists
    if not (np.all(kv > 0) and np.all(ktu > 0) and np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise NumericalInstabilityError(
            f"kernel sums underflowed or scalings overflowed by iteration {it} "
            f"(epsilon={eps}); use the stabilized solver"
        )


def _residual_plan(plan, alpha, beta) -> float:
    return float(np.abs(plan.sum(axis=1) - alpha).sum() + np.abs(plan.sum(axis=0) - beta).sum())


def _residual_log(logk, f, g, alpha, beta) -> float:
    rows = np.exp(f + _lse(logk + g[None, :], axis=1))
    cols = np.exp(g + _lse(logk + f[:, None], axis=0))
    return float(np.abs(rows - alpha).sum() + np.abs(cols - beta).sum())


def _prepare(cost, marginals):
    cm = check_cost(cost)
    m = check_marginals(marginals, cm.shape)
    return cm.values, m


def sinkhorn(cost, marginals, cfg: SolverConfig | None = None, *, u0=None, v0=None):
    """Balanced entropic transport by Sinkhorn iterations.

    Returns ``(plan, state)``. Scalings start at ``1/Np`` and ``1/(Ng+1)``
    unless ``u0``/``v0`` are given.

    Raises
    ------
    NumericalInstabilityError
        In plain mode when ``exp(-C/eps)`` underflows or the scalings overflow.
    """
    cfg = SolverConfig() if cfg is None else cfg
    if not cfg.balanced:
        raise ValueError("sinkhorn needs tau1 = tau2 = inf; use unbalanced_scaling")
    values, m = _prepare(cost, marginals)
    return _scale(values, m.alpha, m.beta, cfg, 1.0, 1.0, u0, v0)


def unbalanced_scaling(cost, marginals, cfg: SolverConfig | None = None, *, u0=None, v0=None):
    """Entropic transport with KL-relaxed marginals.

    ``tau1`` penalizes deviations of the row sums from ``alpha`` and
    ``tau2`` those of the column sums from ``beta``. With both infinite the
    iterates coincide with :func:`sinkhorn`.
    """
    cfg = SolverConfig() if cfg is None else cfg
    values, m = _prepare(cost, marginals)
    lam1, lam2 = cfg.exponents
    return _scale(values, m.alpha, m.beta, cfg, lam1, lam2, u0, v0)


def first_iteration_plan(cost, marginals, eps: float, *, u0=None, v0=None) -> np.ndarray:
    """Plan after one balanced update of both scalings from their initial values.

    Both updates read the *initial* scalings (``u1`` from ``v0`` and ``v1``
    from ``u0``), unlike the alternating loop of :func:`sinkhorn`.
    """
    values, m = _prepare(cost, marginals)
    n, k = values.shape
    u0 = np.full(n, 1.0 / n) if u0 is None else np.asarray(u0, dtype=float)
    v0 = np.full(k, 1.0 / k) if v0 is None else np.asarray(v0, dtype=float)
    logk = -values / eps
    log_u1 = _log(m.alpha) - _lse(logk + np.log(v0)[None, :], axis=1)
    log_v1 = _log(m.beta) - _lse(logk + np.log(u0)[:, None], axis=0)
    return np.exp(logk + log_u1[:, None] + log_v1[None, :])


def softmax_limit(
    cost,
    marginals,
    eps: float,
    over: Literal["predictions", "ground_truths"] = "predictions",
) -> np.ndarray:
    """Closed-form limits of the unbalanced problem.

    ``over="predictions"`` (``tau1 = 0``, ``tau2 = inf``): every column is a
    softmax of ``-C/eps`` over the predictions, weighted by ``beta``.
    ``over="ground_truths"`` (``tau1 = inf``, ``tau2 = 0``): every row is a
    softmax over the columns, weighted by ``alpha``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    values, m = _prepare(cost, marginals)
    logits = -values / eps
    if over == "predictions":
        return m.beta[None, :] * np.exp(logits - _lse(logits, axis=0)[None, :])
    if over == "ground_truths":
        return m.alpha[:, None] * np.exp(logits - _lse(logits, axis=1)[:, None])
    raise ValueError(f"over must be 'predictions' or 'ground_truths', got {over!r}")


def one_iteration_softmax(cost, eps: float, background: bool = False) -> np.ndarray:
    """``exp(-C/eps) / (column sums * row sums)`` of the kernel.

    This is one balanced iteration from uniform scalings with uniform
    marginals. With ``background=True`` the last column is weighted by
    ``Np - Ng`` as it is under the background marginals.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    values = check_cost(cost, background).values
    logits = -values / eps
    plan = np.exp(logits - _lse(logits, axis=0)[None, :] - _lse(logits, axis=1)[:, None])
    if background:
        n, k = values.shape
        plan[:, -1] *= n - (k - 1)
    return plan


def dual_softmax(cost, eps: float) -> np.ndarray:
    """Dual-softmax matching: ``exp(-2C/eps) / (column sums * row sums)``,
    the product of the row-wise and column-wise softmax of ``-C/eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    logits = -check_cost(cost).values / eps
    return np.exp(2 * logits - _lse(logits, axis=0)[None, :] - _lse(logits, axis=1)[:, None])


def n_workers(default: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1, got {value}")
        return value
    return default or os.cpu_count() or 1


def solve_batch(
    problems: Sequence[tuple[object, MarginalPair]],
    cfg: SolverConfig | None = None,
    workers: int | None = None,
):
    """Solve independent problems concurrently with :func:`unbalanced_scaling`.

    Each result is identical to solving that problem alone. Worker count
    defaults to ``$UOTOD_THREADS`` or the CPU count. A failure is re-raised
    as :class:`BatchSolveError` carrying the problem index.
    """
    if not problems:
        raise ValueError("problems must be non-empty")
    cfg = SolverConfig() if cfg is None else cfg
    workers = n_workers() if workers is None else workers

    def run(item):
        idx, (cost, marginals) = item
        try:
            return unbalanced_scaling(cost, marginals, cfg)
        except Exception as exc:  # noqa: BLE001 - re-raised with the index
            raise BatchSolveError(idx, exc) from exc

    items = list(enumerate(problems))
    if workers == 1 or len(items) == 1:
        return [run(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(run, items))


def with_config(cfg: SolverConfig, **changes) -> SolverConfig:
    return replace(cfg, **changes)
