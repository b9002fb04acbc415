"""Reparameterized gradients of the Monte Carlo variational Renyi bound.

Given K noise draws eps_k and a differentiable map theta = g(eps; phi) with
matching variational density q, the K-sample bound estimate is a smooth
function of the log weights log w_k = log p(theta_k, x) - log q(theta_k).
Its gradient is the convex combination

    sum_k w_hat_k * d/d phi [ log w_k ],
    w_hat_k proportional to exp((1 - alpha) log w_k),

which is what ``vr_grad`` computes: the normalized weights are treated as
constants (they are exactly the partial derivatives of the estimate with
respect to the log weights), so a single weighted backward pass yields the
estimator's exact gradient for every finite alpha. The limits alpha = -inf
and +inf turn the combination into one-hot selection of the largest or
smallest weight, the subgradient of max/min of the log weights.

``select_backprop_sample`` implements the single-backward-pass variant:
sample one index j with probability w_hat_j (deterministic argmax at
alpha = -inf), and follow the gradient of log w_j alone, which is unbiased
for the full weighted gradient at finite alpha.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import autodiff as ad
from .alpha import AlphaKind, classify_alpha
from .bounds import validate_log_weights

__all__ = [
    "GaussianReparam",
    "finite_diff_check",
    "normalize_weights",
    "select_backprop_sample",
    "single_sample_grad",
    "vr_grad",
]

_LOG_2PI = math.log(2.0 * math.pi)


def normalize_weights(log_w: np.ndarray, alpha: float) -> np.ndarray:
    """Simplex weights proportional to exp((1 - alpha) log w).

    alpha = 1 gives the uniform vector, alpha = -inf a one-hot at the
    largest log weight, alpha = +inf a one-hot at the smallest; ties break
    toward the lowest index. Adding a constant to every log weight leaves
    the result unchanged.
    """
    log_w = validate_log_weights(log_w)
    k = log_w.shape[0]
    kind = classify_alpha(alpha)
    if kind is AlphaKind.ONE:
        return np.full(k, 1.0 / k)
    if kind is AlphaKind.NEG_INF:
        probs = np.zeros(k)
        probs[int(np.argmax(log_w))] = 1.0
        return probs
    if kind is AlphaKind.POS_INF:
        probs = np.zeros(k)
        probs[int(np.argmin(log_w))] = 1.0
        return probs
    scaled = (1.0 - float(alpha)) * log_w
    if np.any(np.isposinf(scaled)):
        # A zero-density sample raised to a negative power dominates.
        probs = np.zeros(k)
        hits = np.isposinf(scaled)
        probs[hits] = 1.0 / np.count_nonzero(hits)
        return probs
    shifted = scaled - np.max(scaled)
    expw = np.exp(shifted)
    return expw / np.sum(expw)


def select_backprop_sample(
    log_w: np.ndarray, alpha: float, rng: np.random.Generator
) -> int:
    """Index of the single sample to back-propagate.

    Finite alpha: categorical draw with probabilities ``normalize_weights``;
    alpha = -inf: deterministic argmax; alpha = +inf: deterministic argmin.
    """
    log_w = validate_log_weights(log_w)
    kind = classify_alpha(alpha)
    if kind is AlphaKind.NEG_INF:
        return int(np.argmax(log_w))
    if kind is AlphaKind.POS_INF:
        return int(np.argmin(log_w))
    probs = normalize_weights(log_w, alpha)
    return int(rng.choice(log_w.shape[0], p=probs))


class GaussianReparam:
    """Diagonal-Gaussian reparameterization theta = mu + exp(rho) * eps.

    ``mu`` and ``rho`` are graph nodes (leaves, or encoder outputs). The
    variational log density evaluated at theta = g(eps) simplifies to
    -sum(rho) - ||eps||^2 / 2 - d/2 log(2 pi), which is exact and keeps the
    dependence on the variational parameters explicit.
    """

    def __init__(self, mu: ad.Node, rho: ad.Node):
        if mu.value.shape != rho.value.shape:
            raise ValueError("mu and rho must have the same shape")
        self.mu = mu
        self.rho = rho

    @property
    def dim(self) -> int:
        return int(self.mu.value.size)

    def theta(self, eps: np.ndarray) -> ad.Node:
        eps = np.asarray(eps, dtype=float)
        if eps.shape != self.mu.value.shape:
            raise ValueError(f"eps must have shape {self.mu.value.shape}")
        return self.mu + ad.exp(self.rho) * eps

    def log_q(self, eps: np.ndarray) -> ad.Node:
        eps = np.asarray(eps, dtype=float)
        const = -0.5 * float(np.sum(eps * eps)) - 0.5 * eps.size * _LOG_2PI
        return ad.vsum(self.rho) * (-1.0) + const

    def log_q_rows(self, eps: np.ndarray) -> ad.Node:
        """Per-row log density for (n, d) parameters and noise."""
        eps = np.asarray(eps, dtype=float)
        const = -0.5 * np.sum(eps * eps, axis=1) - 0.5 * eps.shape[1] * _LOG_2PI
        return ad.vsum(self.rho, axis=1) * (-1.0) + const


LogWeightBuilder = Callable[[dict[str, ad.Node], np.ndarray], ad.Node]


def _build_graph(
    build_log_weight: LogWeightBuilder,
    params: dict[str, np.ndarray],
    noises: np.ndarray,
) -> tuple[dict[str, ad.Node], list[ad.Node], np.ndarray]:
    nodes = {name: ad.Node(np.asarray(value, dtype=float)) for name, value in params.items()}
    lw_nodes = [build_log_weight(nodes, np.asarray(eps, dtype=float)) for eps in noises]
    log_w = np.array([float(node.value) for node in lw_nodes])
    return nodes, lw_nodes, log_w


def vr_grad(
    build_log_weight: LogWeightBuilder,
    params: dict[str, np.ndarray],
    noises: np.ndarray,
    alpha: float,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradient of the K-sample bound estimate under fixed noise.

    ``build_log_weight(nodes, eps)`` must return the scalar log-weight node
    for one noise draw, using the supplied parameter leaf nodes. Returns the
    gradient for every parameter plus the realized log weights. Non-finite
    gradient components raise, reporting the offending sample.
    """
    nodes, lw_nodes, log_w = _build_graph(build_log_weight, params, noises)
    for k, value in enumerate(log_w):
        if math.isnan(value) or value == math.inf:
            raise FloatingPointError(f"log weight for sample {k} is {value}")
    weights = normalize_weights(log_w, alpha)
    objective = None
    for w, lw in zip(weights, lw_nodes):
        term = lw * float(w)
        objective = term if objective is None else objective + term
    grads = ad.gradients(objective, nodes)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = [k for k, lw in enumerate(lw_nodes) if not np.all(np.isfinite(lw.value))]
            raise FloatingPointError(
                f"non-finite gradient for parameter '{name}' (suspect samples: {bad})"
            )
    return grads, log_w


def single_sample_grad(
    build_log_weight: LogWeightBuilder,
    params: dict[str, np.ndarray],
    noises: np.ndarray,
    j: int,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradient of the single log weight log w_j (one backward pass)."""
    nodes, lw_nodes, log_w = _build_graph(build_log_weight, params, noises)
    if not 0 <= j < len(lw_nodes):
        raise IndexError(f"sample index {j} out of range for K={len(lw_nodes)}")
    grads = ad.gradients(lw_nodes[j], nodes)
    return grads, log_w


def mc_estimate_from_builder(
    build_log_weight: LogWeightBuilder,
    params: dict[str, np.ndarray],
    noises: np.ndarray,
    alpha: float,
) -> float:
    """The bound estimate itself through the same graph (for checking)."""
    from .bounds import mc_vr_estimate

    _, _, log_w = _build_graph(build_log_weight, params, noises)
    return mc_vr_estimate(log_w, alpha)


def finite_diff_check(
    f: Callable[[np.ndarray], float],
    x0: np.ndarray,
    grad: np.ndarray,
    step: float = 1e-5,
    abs_floor: float = 1e-8,
) -> float:
    """Max relative error between ``grad`` and central differences of ``f``.

    The relative error per coordinate uses max(|numeric|, |analytic|,
    abs_floor) as denominator so exact zeros compare cleanly.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-7, 1e-3]")
    x0 = np.asarray(x0, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != x0.shape:
        raise ValueError("grad must match x0 in shape")
    worst = 0.0
    flat_x = x0.ravel()
    flat_g = grad.ravel()
    for i in range(flat_x.size):
        bump = np.zeros_like(flat_x)
        bump[i] = step
        hi = f((flat_x + bump).reshape(x0.shape))
        lo = f((flat_x - bump).reshape(x0.shape))
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise FloatingPointError(f"non-finite objective at coordinate {i}")
        numeric = (hi - lo) / (2.0 * step)
        denom = max(abs(numeric), abs(flat_g[i]), abs_floor)
        worst = max(worst, abs(numeric - flat_g[i]) / denom)
    return worst


def log_weight_ratio(log_w: np.ndarray) -> tuple[float, float]:
    """(log R, R) for R = w_max / (1 - w_max) of the normalized weights.

    Computed in the log domain: log(1 - w_max) comes from the log-sum-exp of
    the non-maximal weights, so R never overflows before the final exp (the
    returned R may still be inf when the remainder underflows entirely).
    """
    log_w = validate_log_weights(log_w)
    if log_w.shape[0] == 1:
        return math.inf, math.inf
    top = int(np.argmax(log_w))
    rest = np.delete(log_w, top)
    log_r = float(log_w[top] - logsumexp(rest))
    try:
        r = math.exp(log_r)
    except OverflowError:
        r = math.inf
    return log_r, r
