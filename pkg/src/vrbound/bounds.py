"""Monte Carlo estimation of the variational Renyi bound.

The K-sample estimate from log importance weights log w_k is

    (1/(1-alpha)) * ( logsumexp((1-alpha) log w) - log K )      finite alpha != 1
    mean(log w)                                                  alpha = 1
    max(log w)                                                   alpha = -inf
    min(log w)                                                   alpha = +inf

All arithmetic stays in the log domain. For a fixed weight set the estimate
is non-increasing in alpha (it is the log of a power mean of the weights),
and for K = 1 every branch collapses to the single log weight, which makes
the one-sample estimate alpha-independent.

``bias_simulation`` quantifies the estimator's bias: with theta_k drawn from
q and log w = log p - log q, the population value of the bound is minus the
Renyi divergence from q to p, which the simulation reports alongside the
empirical mean and standard error for each (alpha, K) cell. Each cell draws
from its own seed-derived generator, so results do not depend on evaluation
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .alpha import AlphaKind, classify_alpha
from .divergence import GridSpec, quadrature_oracle
from .gaussian import GaussianDist
from .models.blr import blr_exact_posterior, exact_vr_bound_blr  # noqa: F401  (re-export)

__all__ = [
    "BiasCell",
    "BiasTable",
    "bias_simulation",
    "exact_vr_bound_blr",
    "mc_vr_estimate",
    "validate_log_weights",
]


def validate_log_weights(log_w) -> np.ndarray:
    """Check the log-weight invariants and return a float vector.

    Entries may be finite or -inf (a zero-density sample); NaN and +inf are
    rejected, as is an empty or all--inf set.
    """
    log_w = np.atleast_1d(np.asarray(log_w, dtype=float))
    if log_w.ndim != 1:
        raise ValueError("log weights must form a vector")
    if log_w.shape[0] == 0:
        raise ValueError("log weights must be non-empty")
    if np.any(np.isnan(log_w)):
        raise ValueError("log weights must not contain NaN")
    if np.any(np.isposinf(log_w)):
        raise ValueError("log weights must not contain +inf")
    if not np.any(log_w > -math.inf):
        raise ValueError("at least one log weight must be finite")
    return log_w


def mc_vr_estimate(log_w, alpha: float) -> float:
    """K-sample Monte Carlo estimate of the bound at order ``alpha``.

    A -inf entry contributes zero weight for alpha < 1. For alpha > 1 a
    zero-density sample dominates the power mean and the estimate is -inf;
    the same happens when the min branch (alpha = +inf) selects one.
    """
    log_w = validate_log_weights(log_w)
    k = log_w.shape[0]
    kind = classify_alpha(alpha)
    if k == 1:
        # Every branch collapses to the single log weight; returning it
        # directly keeps the one-sample estimate bit-exactly alpha-free.
        return float(log_w[0])
    if kind is AlphaKind.ONE:
        return float(np.mean(log_w))
    if kind is AlphaKind.NEG_INF:
        return float(np.max(log_w))
    if kind is AlphaKind.POS_INF:
        return float(np.min(log_w))
    one_minus = 1.0 - float(alpha)
    scaled = one_minus * log_w
    if np.any(np.isposinf(scaled)):
        return -math.inf
    return float((logsumexp(scaled) - math.log(k)) / one_minus)


# ----------------------------------------------------------------------
# bias simulation


@dataclass(frozen=True)
class BiasCell:
    alpha: float
    k: int
    mean: float
    stderr: float
    exact: float


@dataclass
class BiasTable:
    rows: list[BiasCell]
    repeats: int
    seed: int

    def cell(self, alpha: float, k: int) -> BiasCell:
        for row in self.rows:
            if row.k == k and row.alpha == alpha:
                return row
        raise KeyError(f"no cell for alpha={alpha}, K={k}")

    def as_records(self) -> list[dict]:
        return [
            {
                "alpha": row.alpha,
                "K": row.k,
                "mean": row.mean,
                "stderr": row.stderr,
                "exact": row.exact,
            }
            for row in self.rows
        ]


def bias_simulation(
    p: GaussianDist,
    q: GaussianDist,
    alphas: list[float],
    ks: list[int],
    repeats: int = 200,
    seed: int = 0,
    grid: GridSpec | None = None,
) -> BiasTable:
    """Empirical mean and spread of the K-sample estimate per (alpha, K).

    For each cell, ``repeats`` independent weight sets are drawn with
    theta ~ q and log w = log p(theta) - log q(theta); the exact column is
    minus the quadrature-oracle divergence from q to p, the population value
    the estimates converge to as K grows. Every (alpha, K, repeat) cell uses
    a generator derived from (seed, indices), so any evaluation schedule
    produces identical numbers.
    """
    if repeats < 2:
        raise ValueError("repeats must be at least 2 to report a standard error")
    if any(not math.isfinite(float(a)) for a in alphas):
        raise ValueError("bias simulation requires finite alpha values")
    if any(int(k) < 1 for k in ks):
        raise ValueError("sample counts must be positive")

    rows: list[BiasCell] = []
    for ai, alpha in enumerate(alphas):
        alpha = float(alpha)
        exact = -quadrature_oracle(q, p, alpha, grid)
        for ki, k in enumerate(ks):
            k = int(k)
            estimates = np.empty(repeats)
            for r in range(repeats):
                rng = np.random.default_rng([seed, ai, ki, r])
                theta = q.sample(rng, k)
                log_w = p.logpdf(theta) - q.logpdf(theta)
                estimates[r] = mc_vr_estimate(log_w, alpha)
            mean = float(np.mean(estimates))
            stderr = float(np.std(estimates, ddof=1) / math.sqrt(repeats))
            rows.append(BiasCell(alpha=alpha, k=k, mean=mean, stderr=stderr, exact=exact))
    return BiasTable(rows=rows, repeats=repeats, seed=seed)
