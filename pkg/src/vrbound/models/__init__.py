"""Model families: Bayesian linear regression, BNN regression, and a VAE."""

from .blr import BLRModel, blr_exact_posterior, blr_mean_field_fit, synthetic_blr_instance
from .bnn import BNNModel
from .data import Dataset, synthetic_binary_images, synthetic_regression
from .vae import VAEModel

__all__ = [
    "BLRModel",
    "BNNModel",
    "Dataset",
    "VAEModel",
    "blr_exact_posterior",
    "blr_mean_field_fit",
    "synthetic_binary_images",
    "synthetic_regression",
    "synthetic_blr_instance",
]
