"""Single-hidden-layer Bayesian neural network for regression.

The network is f(x) = W2 relu(x W1 + b1) + b2 with a standard-normal prior
on every weight, a Gaussian likelihood whose noise scale is a learnable
hyper-parameter (kept in the log domain), and a mean-field Gaussian
approximation over the flattened weight vector. The flattened layout is
(W1, b1, W2, b2); the graph builders unpack it with differentiable slices so
all gradient flow goes through the shared tape.
"""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad

_LOG_2PI = math.log(2.0 * math.pi)


class BNNModel:
    """ReLU regression network with a factorized standard-normal prior."""

    def __init__(self, in_dim: int, hidden: int = 50):
        if in_dim < 1 or hidden < 1:
            raise ValueError("in_dim and hidden must be positive")
        self.in_dim = int(in_dim)
        self.hidden = int(hidden)

    @property
    def n_weights(self) -> int:
        return self.in_dim * self.hidden + self.hidden + self.hidden + 1

    def _split(self, theta: ad.Node):
        d, h = self.in_dim, self.hidden
        ofs = 0
        w1 = ad.reshape(ad.slice1d(theta, ofs, ofs + d * h), (d, h))
        ofs += d * h
        b1 = ad.slice1d(theta, ofs, ofs + h)
        ofs += h
        w2 = ad.slice1d(theta, ofs, ofs + h)
        ofs += h
        b2 = ad.slice1d(theta, ofs, ofs + 1)
        return w1, b1, w2, b2

    def predict_node(self, theta: ad.Node, x: np.ndarray) -> ad.Node:
        """Network outputs for inputs x (n, in_dim); returns shape (n,)."""
        w1, b1, w2, b2 = self._split(theta)
        hidden = ad.relu(ad.matmul(ad.as_node(x), w1) + b1)
        return ad.matmul(hidden, w2) + b2

    def predict(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Plain-numpy forward pass (no graph)."""
        d, h = self.in_dim, self.hidden
        w1 = theta[: d * h].reshape(d, h)
        b1 = theta[d * h : d * h + h]
        w2 = theta[d * h + h : d * h + 2 * h]
        b2 = theta[d * h + 2 * h]
        hidden = np.maximum(np.asarray(x) @ w1 + b1, 0.0)
        return hidden @ w2 + b2

    def log_prior_node(self, theta: ad.Node) -> ad.Node:
        return ad.vsum(theta * theta) * (-0.5) + (-0.5 * self.n_weights * _LOG_2PI)

    def log_lik_node(
        self,
        theta: ad.Node,
        log_noise: ad.Node,
        x: np.ndarray,
        y: np.ndarray,
    ) -> ad.Node:
        """Summed Gaussian log likelihood of targets y at inputs x."""
        preds = self.predict_node(theta, x)
        return ad.normal_logpdf_sum(np.asarray(y, dtype=float), preds, log_noise)

    def log_joint_node(
        self, theta: ad.Node, log_noise: ad.Node, x: np.ndarray, y: np.ndarray
    ) -> ad.Node:
        return self.log_prior_node(theta) + self.log_lik_node(theta, log_noise, x, y)

    def init_variational(self, seed: int = 0, init_scale: float = 0.05):
        """Initial mean-field parameters {mu, rho} plus {log_noise}."""
        rng = np.random.default_rng([int(seed), 0])
        mu = 0.1 * rng.standard_normal(self.n_weights)
        rho = np.full(self.n_weights, math.log(init_scale))
        return {"mu": mu, "rho": rho, "log_noise": np.zeros(1)}
