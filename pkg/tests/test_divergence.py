"""Closed-form Gaussian Renyi divergence against the quadrature ground truth."""

import math

import numpy as np
import pytest

from vrbound import GaussianDist, GridSpec, gaussian_kl, quadrature_oracle, renyi_gaussian
from vrbound.divergence import quadrature_oracle_batch

SPEC_GRID_2D = GridSpec((-8.0, -8.0), (8.0, 8.0), 0.01)
SPEC_GRID_1D = GridSpec((-8.0,), (9.0,), 0.01)


def _seeded_pair(rng, dim):
    """Gaussian pair kept inside the finite-divergence window for |alpha| <= 5.

    Variance ratios near one and close means keep the mixture covariance SPD
    and the quadrature integrand inside an 8-sigma box across the whole
    alpha range the tests sweep.
    """
    mean_p = rng.uniform(-1.0, 1.0, size=dim)
    mean_q = mean_p + rng.uniform(-0.5, 0.5, size=dim)
    var_p = rng.uniform(0.5, 2.0, size=dim)
    var_q = var_p * rng.uniform(0.95, 1.05, size=dim)
    return (
        GaussianDist.diagonal(mean_p, var_p),
        GaussianDist.diagonal(mean_q, var_q),
    )


class TestClosedFormValues:
    def test_identical_distributions_are_zero(self):
        g = GaussianDist.diagonal([0.3, -0.2], [1.5, 0.7])
        assert renyi_gaussian(g, g, 0.7) == pytest.approx(0.0, abs=1e-12)

    def test_2d_shifted_unit_gaussians_half(self):
        # Frozen from the trapezoidal oracle on [-8, 8]^2, step 0.01.
        p = GaussianDist.diagonal([0.0, 0.0], [1.0, 1.0])
        q = GaussianDist.diagonal([1.0, 1.0], [1.0, 1.0])
        assert renyi_gaussian(p, q, 0.5) == pytest.approx(0.5, abs=1e-6)
        assert renyi_gaussian(p, q, 0.5) == pytest.approx(
            quadrature_oracle(p, q, 0.5, SPEC_GRID_2D), abs=1e-6
        )

    def test_2d_shifted_unit_gaussians_kl(self):
        p = GaussianDist.diagonal([0.0, 0.0], [1.0, 1.0])
        q = GaussianDist.diagonal([1.0, 1.0], [1.0, 1.0])
        assert renyi_gaussian(p, q, 1.0) == pytest.approx(1.0, abs=1e-6)
        assert renyi_gaussian(p, q, 1.0) == pytest.approx(
            quadrature_oracle(p, q, 1.0, SPEC_GRID_2D), abs=1e-6
        )

    def test_2d_shifted_unit_gaussians_order_two(self):
        p = GaussianDist.diagonal([0.0, 0.0], [1.0, 1.0])
        q = GaussianDist.diagonal([1.0, 1.0], [1.0, 1.0])
        assert renyi_gaussian(p, q, 2.0) == pytest.approx(2.0, abs=1e-6)
        assert renyi_gaussian(p, q, 2.0) == pytest.approx(
            quadrature_oracle(p, q, 2.0, SPEC_GRID_2D), abs=1e-6
        )

    def test_1d_unit_variance_closed_check(self):
        # For equal unit variances the value must equal alpha * |dmu|^2 / 2.
        p = GaussianDist.diagonal([0.0], [1.0])
        q = GaussianDist.diagonal([1.0], [1.0])
        assert renyi_gaussian(p, q, 0.5) == pytest.approx(0.25, abs=1e-12)
        assert quadrature_oracle(p, q, 0.5, SPEC_GRID_1D) == pytest.approx(0.25, abs=1e-8)

    def test_pos_inf_unbounded_ratio(self):
        # Equal variances, shifted means: the density ratio is unbounded.
        p = GaussianDist.diagonal([0.0], [1.0])
        q = GaussianDist.diagonal([1.0], [1.0])
        assert renyi_gaussian(p, q, math.inf) == math.inf

    def test_pos_inf_bounded_ratio(self):
        # q twice as wide: sup p/q is attained at the shared mean.
        p = GaussianDist.diagonal([0.0], [1.0])
        q = GaussianDist.diagonal([0.0], [4.0])
        assert renyi_gaussian(p, q, math.inf) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_neg_inf_is_reversed_pos_inf(self):
        p = GaussianDist.diagonal([0.2], [1.0])
        q = GaussianDist.diagonal([0.0], [4.0])
        assert renyi_gaussian(q, p, -math.inf) == pytest.approx(
            -renyi_gaussian(p, q, math.inf), abs=1e-12
        )

    def test_alpha_zero_full_support(self):
        rng = np.random.default_rng(0)
        for dim in (1, 2, 3):
            p, q = _seeded_pair(rng, dim)
            assert renyi_gaussian(p, q, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_divergent_mixture_reports_inf(self):
        # alpha = -2 with a wider q: the mixture covariance loses positivity.
        p = GaussianDist.diagonal([0.0], [1.0])
        q = GaussianDist.diagonal([0.0], [2.0])
        assert renyi_gaussian(p, q, -2.0) == math.inf

    def test_near_one_routes_to_kl(self):
        p = GaussianDist.diagonal([0.0, 0.5], [1.0, 2.0])
        q = GaussianDist.diagonal([0.4, 0.0], [1.5, 1.0])
        kl = gaussian_kl(p, q)
        assert renyi_gaussian(p, q, 1.0 + 1e-10) == kl
        assert renyi_gaussian(p, q, 1.0 - 1e-10) == kl

    def test_full_covariance_matches_diagonal(self):
        p_diag = GaussianDist.diagonal([0.1, -0.3], [1.2, 0.8])
        q_diag = GaussianDist.diagonal([0.0, 0.2], [1.0, 1.1])
        p_full = GaussianDist.full(p_diag.mean, np.diag(p_diag.variances))
        q_full = GaussianDist.full(q_diag.mean, np.diag(q_diag.variances))
        for alpha in (-1.0, 0.3, 0.5, 1.0, 2.0):
            assert renyi_gaussian(p_full, q_full, alpha) == pytest.approx(
                renyi_gaussian(p_diag, q_diag, alpha), abs=1e-12
            )


class TestProperties:
    def test_skew_symmetry(self):
        rng = np.random.default_rng(42)
        alphas = [-2.0, -0.5, 0.3, 0.5, 0.7, 2.0, 3.0]
        for dim in (1, 2):
            for _ in range(10):
                p, q = _seeded_pair(rng, dim)
                for alpha in alphas:
                    left = renyi_gaussian(p, q, alpha)
                    right = renyi_gaussian(q, p, 1.0 - alpha)
                    if math.isinf(left) or math.isinf(right):
                        continue
                    assert left == pytest.approx(
                        (alpha / (1.0 - alpha)) * right, abs=1e-6
                    ), f"skew symmetry failed at alpha={alpha}"

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(7)
        grid = np.linspace(-5.0, 5.0, 41)
        for dim in (1, 2):
            for _ in range(10):
                p, q = _seeded_pair(rng, dim)
                values = [renyi_gaussian(p, q, a) for a in grid]
                finite = [v for v in values if math.isfinite(v)]
                assert len(finite) == len(values), "pair recipe should stay finite"
                diffs = np.diff(finite)
                assert np.all(diffs >= -1e-9), f"monotonicity violated: {min(diffs)}"

    def test_sign_by_alpha(self):
        rng = np.random.default_rng(11)
        for dim in (1, 2):
            for _ in range(10):
                p, q = _seeded_pair(rng, dim)
                for alpha in (0.3, 0.5, 2.0, 5.0):
                    assert renyi_gaussian(p, q, alpha) >= -1e-12
                for alpha in (-0.5, -2.0, -5.0):
                    value = renyi_gaussian(p, q, alpha)
                    if math.isfinite(value):
                        assert value <= 1e-12

    def test_oracle_agreement_seeded_pairs(self):
        rng = np.random.default_rng(2024)
        alphas = [-2.0, -0.5, 0.0, 0.3, 0.5, 0.9, 1.0, 2.0, 5.0]
        for dim in (1, 2):
            for _ in range(5):
                p, q = _seeded_pair(rng, dim)
                step = 0.01 if dim == 1 else 0.02
                grid = GridSpec.covering(p, q, sigmas=10.0, step=step)
                numeric = quadrature_oracle_batch(p, q, alphas, grid)
                for alpha, num in zip(alphas, numeric):
                    closed = renyi_gaussian(p, q, alpha)
                    assert math.isfinite(closed)
                    assert closed == pytest.approx(num, abs=1e-6), (
                        f"dim={dim}, alpha={alpha}"
                    )


class TestOracleValidation:
    def test_identical_distributions(self):
        g = GaussianDist.diagonal([0.0], [1.0])
        assert quadrature_oracle(g, g, 2.0) == pytest.approx(0.0, abs=1e-8)

    def test_rejects_three_dimensions(self):
        g = GaussianDist.standard(3)
        with pytest.raises(ValueError, match="dimension"):
            quadrature_oracle(g, g, 0.5, GridSpec((-8.0,) * 3, (8.0,) * 3, 0.05))

    def test_rejects_coarse_step(self):
        g = GaussianDist.standard(1)
        with pytest.raises(ValueError, match="too coarse"):
            quadrature_oracle(g, g, 0.5, GridSpec((-8.0,), (8.0,), 0.1))

    def test_rejects_poor_coverage(self):
        p = GaussianDist.diagonal([0.0], [1.0])
        q = GaussianDist.diagonal([3.0], [1.0])
        with pytest.raises(ValueError, match="cover"):
            quadrature_oracle(p, q, 0.5, GridSpec((-4.0,), (4.0,), 0.01))

    def test_default_grid_is_generated(self):
        p = GaussianDist.diagonal([0.0], [1.0])
        q = GaussianDist.diagonal([0.5], [1.2])
        assert quadrature_oracle(p, q, 0.5) == pytest.approx(
            renyi_gaussian(p, q, 0.5), abs=1e-8
        )


class TestInputValidation:
    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            renyi_gaussian(GaussianDist.standard(1), GaussianDist.standard(2), 0.5)

    def test_non_spd_covariance_rejected(self):
        with pytest.raises(ValueError, match="positive definite"):
            GaussianDist.full([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            GaussianDist.diagonal([0.0], [-1.0])

    def test_nan_alpha_rejected(self):
        g = GaussianDist.standard(1)
        with pytest.raises(ValueError, match="NaN"):
            renyi_gaussian(g, g, math.nan)
