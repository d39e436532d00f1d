"""Entropy and KL functionals, the unbalanced objective, uniform matches and
the entropic parameter rule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Literal

import numpy as np

from ._validation import check_cost, check_marginals, check_plan

__all__ = [
    "ObjectiveBreakdown",
    "entropy",
    "kl",
    "unbalanced_objective",
    "project_uniform",
    "common_measure",
    "epsilon_rule",
    "EPS0",
]

EPS0 = 0.12
_MARGINAL_ATOL = 1e-9


def _xlogx(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def entropy(plan) -> float:
    """``-sum P (log P - 1)`` with ``0 log 0 = 0``.

    A unit-mass plan on ``n`` cells has entropy in ``[1, log n + 1]``.
    """
    p = np.asarray(plan, dtype=float)
    if np.any(p < 0):
        raise ValueError("plan entries must be non-negative")
    return float(p.sum() - _xlogx(p).sum())


def kl(u, v) -> float:
    """Generalized KL divergence ``sum u log(u/v) - u + v``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    if np.any(u < 0):
        raise ValueError("first argument must be non-negative")
    if np.any(v <= 0):
        raise ValueError("second argument must be strictly positive")
    terms = -u + v
    pos = u > 0
    terms[pos] += u[pos] * np.log(u[pos] / v[pos])
    return float(max(terms.sum(), 0.0))


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Terms of ``<P, C> - eps H(P) + tau1 KL(P1 | alpha) + tau2 KL(P^T 1 | beta)``.

    ``entropy_term`` is ``-eps H(P)``. The form ``eps KL(P | exp(-C/eps))``
    exceeds this by the constant ``eps * sum(exp(-C/eps))``.
    """

    transport_term: float
    entropy_term: float
    kl_alpha_term: float
    kl_beta_term: float

    @property
    def total(self) -> float:
        return math.fsum(
            (self.transport_term, self.entropy_term, self.kl_alpha_term, self.kl_beta_term)
        )

    def as_dict(self) -> dict[str, float]:
        return {
            "transport_term": self.transport_term,
            "entropy_term": self.entropy_term,
            "kl_alpha_term": self.kl_alpha_term,
            "kl_beta_term": self.kl_beta_term,
            "total": self.total,
        }


def _penalty(tau: float, marginal: np.ndarray, target: np.ndarray) -> float:
    if math.isinf(tau):
        # hard constraint: free when met, infeasible otherwise
        return 0.0 if np.allclose(marginal, target, rtol=0, atol=_MARGINAL_ATOL) else math.inf
    if tau == 0:
        return 0.0
    return tau * kl(marginal, target)


def unbalanced_objective(
    plan,
    cost,
    marginals,
    cfg,
    *,
    include_alpha: bool = True,
    include_beta: bool = True,
) -> ObjectiveBreakdown:
    """Evaluate the entropic unbalanced objective of ``plan``.

    ``cfg`` supplies ``epsilon`` (0 drops the entropy term), ``tau1`` and
    ``tau2``. An infinite ``tau`` contributes 0 when the marginal is met to
    ``1e-9`` and ``inf`` otherwise. ``include_alpha``/``include_beta`` drop a
    penalty term entirely.
    """
    p = check_plan(plan)
    c = check_cost(cost).values
    if p.shape != c.shape:
        raise ValueError(f"plan shape {p.shape} does not match cost shape {c.shape}")
    m = check_marginals(marginals, c.shape)
    eps = float(cfg.epsilon)
    if eps < 0:
        raise ValueError("epsilon must be >= 0")
    transport = math.fsum((p * c).ravel())
    ent = -eps * entropy(p) if eps > 0 else 0.0
    ka = _penalty(cfg.tau1, p.sum(axis=1), m.alpha) if include_alpha else 0.0
    kb = _penalty(cfg.tau2, p.sum(axis=0), m.beta) if include_beta else 0.0
    return ObjectiveBreakdown(transport, ent, ka, kb)


def project_uniform(plan) -> np.ndarray:
    """Closest uniform match in Frobenius norm.

    Keeps the ``k`` largest entries, ``k`` maximizing
    ``(2 * top_k_sum - 1) / k``, and sets each to ``1/k``. Equal entries are
    ranked in row-major order; ties in the objective pick the smallest ``k``.
    """
    p = check_plan(plan)
    flat = p.ravel()
    order = np.argsort(-flat, kind="stable")
    top = np.cumsum(flat[order])
    ks = np.arange(1, flat.size + 1)
    k = int(np.argmax((2 * top - 1) / ks)) + 1
    out = np.zeros(flat.size)
    out[order[:k]] = 1.0 / k
    return out.reshape(p.shape)


def common_measure(values: Iterable) -> Fraction:
    """Largest rational ``d`` such that every input is an integer multiple of ``d``.

    Equals ``gcd(numerators) / lcm(denominators)`` in reduced form.
    """
    fracs = [Fraction(v) for v in values]
    if not fracs:
        raise ValueError("common_measure needs at least one value")
    if any(f <= 0 for f in fracs):
        raise ValueError("common_measure needs positive rationals")
    num = math.gcd(*(f.numerator for f in fracs))
    den = math.lcm(*(f.denominator for f in fracs))
    return Fraction(num, den)


def epsilon_rule(
    n_pred: int,
    eps0: float = EPS0,
    convention: Literal["experiments", "appendix"] = "experiments",
) -> float:
    """Entropic parameter scaled with the number of predictions.

    ``experiments``: ``eps0 / (log(2 n) + 1)``, the setting used in training.
    ``appendix``: ``eps0 / (log(n) + 1)``, the rule of thumb from the uniform
    match analysis. The two differ by ``log 2`` in the denominator, so
    ``epsilon_rule(n, e, "experiments") == epsilon_rule(2 n, e, "appendix")``.
    """
    if n_pred < 1:
        raise ValueError("n_pred must be >= 1")
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    if convention == "experiments":
        return eps0 / (math.log(2 * n_pred) + 1)
    if convention == "appendix":
        return eps0 / (math.log(n_pred) + 1)
    raise ValueError(f"unknown convention {convention!r}")
