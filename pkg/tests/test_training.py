"""Adam, energy approximation, training loops, evaluation, diagnostics."""

import itertools
import math

import numpy as np
import pytest

from vrbound import (
    Adam,
    BLRModel,
    GaussianDist,
    TrainConfig,
    TrainingDiverged,
    VAEModel,
    blr_exact_posterior,
    energy_approx_objective,
    evaluate_vae,
    mc_vr_estimate,
    synthetic_binary_images,
    synthetic_blr_instance,
    synthetic_regression,
    train,
    weight_diagnostics,
)
from vrbound.models.bnn import BNNModel

_LOG_2PI = math.log(2.0 * math.pi)


class TestAdam:
    def test_zero_gradient_leaves_parameters_fixed(self):
        adam = Adam(lr=0.1)
        params = {"w": np.array([1.0, -2.0])}
        before = params["w"].copy()
        for _ in range(5):
            adam.step(params, {"w": np.zeros(2)})
        np.testing.assert_array_equal(params["w"], before)

    def test_single_step_matches_hand_update(self):
        adam = Adam(lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
        params = {"w": np.array([0.0])}
        g = np.array([2.0])
        adam.step(params, {"w": g})
        # bias-corrected first step moves by lr * g / (|g| + eps)
        expected = 0.1 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(params["w"], expected, atol=1e-12)

    def test_ascent_on_quadratic(self):
        adam = Adam(lr=0.05)
        params = {"w": np.array([3.0])}
        for _ in range(2000):
            adam.step(params, {"w": -2.0 * params["w"]})
        assert abs(params["w"][0]) < 1e-3


class TestEnergyApproximation:
    def test_full_batch_equals_full_data_estimate(self):
        model = synthetic_blr_instance(seed=0, n_data=12)
        q = GaussianDist.diagonal([0.1, -0.2], [0.3, 0.4])
        rng = np.random.default_rng(1)
        noise = rng.standard_normal((6, 2))
        full_idx = np.arange(12)
        for alpha in (-1.0, 0.0, 0.5, 1.0, 2.0):
            via_energy = energy_approx_objective(model, q, full_idx, 12, alpha, noise)
            theta = q.mean + np.sqrt(q.variances) * noise
            log_w = np.array(
                [model.log_joint(t) for t in theta]
            ) - q.logpdf(theta)
            assert via_energy == pytest.approx(mc_vr_estimate(log_w, alpha), abs=1e-10)

    def test_subset_average_identity_by_enumeration(self):
        # Averaging the rescaled subset log likelihood over all size-M
        # subsets reproduces the full-data log likelihood exactly.
        model = synthetic_blr_instance(seed=2, n_data=4)
        theta = np.array([0.3, -0.7])
        n, m = 4, 2
        total = model.log_lik(theta)
        subset_values = [
            (n / m) * model.log_lik(theta, np.array(subset))
            for subset in itertools.combinations(range(n), m)
        ]
        assert float(np.mean(subset_values)) == pytest.approx(total, abs=1e-12)

    def test_hand_expanded_two_point_instance(self):
        # N = 2, M = 1: log w_k = log p0 + 2 log p(x_1 | theta_k) - log q.
        design = np.array([[1.0], [2.0]])
        targets = np.array([0.5, -1.0])
        model = BLRModel(design, targets, 1.0)
        q = GaussianDist.diagonal([0.2], [0.5])
        noise = np.array([[0.3], [-1.1], [0.8]])
        alpha = 0.5
        got = energy_approx_objective(model, q, np.array([0]), 2, alpha, noise)

        theta = 0.2 + math.sqrt(0.5) * noise[:, 0]
        log_w = []
        for t in theta:
            log_prior = -0.5 * t * t - 0.5 * _LOG_2PI
            log_lik = -0.5 * (0.5 - t) ** 2 - 0.5 * _LOG_2PI
            log_q = -0.5 * (t - 0.2) ** 2 / 0.5 - 0.5 * math.log(0.5) - 0.5 * _LOG_2PI
            log_w.append(log_prior + 2.0 * log_lik - log_q)
        expected = (1.0 / (1.0 - alpha)) * (
            math.log(np.mean(np.exp((1.0 - alpha) * np.array(log_w))))
        )
        assert got == pytest.approx(expected, abs=1e-10)

    def test_empty_batch_rejected(self):
        model = synthetic_blr_instance(seed=0)
        q = GaussianDist.standard(2)
        with pytest.raises(ValueError, match="non-empty"):
            energy_approx_objective(model, q, np.array([], dtype=int), 5, 0.5, np.zeros((2, 2)))


class TestTrainDeterminism:
    def test_identical_seeds_identical_trajectories(self):
        model = synthetic_blr_instance(seed=1, n_data=10)
        cfg = TrainConfig(alpha=0.5, k=3, minibatch=5, steps=40, learning_rate=0.01, seed=7)
        _, rec1 = train(model, cfg)
        _, rec2 = train(model, cfg)
        assert rec1.objective == rec2.objective
        assert rec1.grad_norm == rec2.grad_norm

    def test_k1_trajectories_alpha_free(self):
        model = synthetic_blr_instance(seed=1, n_data=10)
        records = {}
        for alpha in (-math.inf, 0.0, 1.0):
            cfg = TrainConfig(alpha=alpha, k=1, minibatch=5, steps=30, learning_rate=0.01, seed=3)
            _, rec = train(model, cfg)
            records[alpha] = rec.objective
        assert records[-math.inf] == records[0.0] == records[1.0]

    def test_vae_determinism(self):
        data = synthetic_binary_images(seed=1, n=420)
        vae = VAEModel(data_dim=64, latent_dim=2, hidden=8)
        cfg = TrainConfig(alpha=0.0, k=2, minibatch=16, steps=12, learning_rate=1e-3, seed=5)
        p1, rec1 = train(vae, cfg, data)
        p2, rec2 = train(vae, cfg, data)
        assert rec1.objective == rec2.objective
        for name in p1:
            np.testing.assert_array_equal(p1[name], p2[name])


class TestTrainBehavior:
    def test_blr_surrogate_reaches_posterior_mean(self):
        model = synthetic_blr_instance(seed=0)
        posterior, _ = blr_exact_posterior(model)
        cfg = TrainConfig(
            alpha=1.0, k=10, minibatch=25, steps=2000, learning_rate=0.02, seed=1
        )
        params, record = train(model, cfg)
        assert np.max(np.abs(params["mu"] - posterior.mean)) < 0.05
        assert len(record.objective) == 2000

    def test_single_backprop_mode_runs_and_is_seeded(self):
        model = synthetic_blr_instance(seed=1, n_data=10)
        cfg = TrainConfig(
            alpha=-math.inf, k=4, minibatch=5, steps=25, learning_rate=0.01,
            seed=2, single_backprop=True,
        )
        _, rec1 = train(model, cfg)
        _, rec2 = train(model, cfg)
        assert rec1.objective == rec2.objective

    def test_divergence_aborts_with_step_and_state(self):
        data = synthetic_regression(seed=0, n=30)
        bnn = BNNModel(in_dim=1, hidden=4)
        cfg = TrainConfig(alpha=1.0, k=2, minibatch=8, steps=400, learning_rate=1e6, seed=0)
        with pytest.raises(TrainingDiverged) as exc_info:
            train(bnn, cfg, data)
        assert exc_info.value.step >= 0
        assert "mu" in exc_info.value.last_params

    def test_bnn_training_improves_objective(self):
        data = synthetic_regression(seed=3, n=60)
        std_data, _ = data.standardized()
        bnn = BNNModel(in_dim=1, hidden=5)
        cfg = TrainConfig(alpha=0.5, k=3, minibatch=20, steps=300, learning_rate=5e-3, seed=4)
        params, record = train(bnn, cfg, std_data)
        early = float(np.mean(record.objective[:20]))
        late = float(np.mean(record.objective[-20:]))
        assert late > early

    def test_unsupported_model_rejected(self):
        with pytest.raises(TypeError, match="unsupported"):
            train(object(), TrainConfig(), None)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="k must"):
            TrainConfig(k=0)
        with pytest.raises(ValueError, match="eval_k"):
            TrainConfig(k=10, eval_k=5)
        with pytest.raises(ValueError, match="learning_rate"):
            TrainConfig(learning_rate=0.0)


@pytest.fixture(scope="module")
def trained():
    data = synthetic_binary_images(seed=2, n=420)
    vae = VAEModel(data_dim=64, latent_dim=2, hidden=8)
    cfg = TrainConfig(alpha=0.0, k=3, minibatch=20, steps=250, learning_rate=3e-3, seed=6)
    params, _ = train(vae, cfg, data)
    return vae, params, data


class TestEvaluateVae:

    def test_reference_gap_is_exactly_zero(self, trained):
        vae, params, data = trained
        rows = evaluate_vae(
            vae, params, data.test_features[:40], alphas=[0.0], ks=[64],
            repeats=2, seed=1, k_ref=64,
        )
        assert rows[0].mean_gap == 0.0
        assert rows[0].se_gap == 0.0

    def test_gap_direction_in_k(self, trained):
        vae, params, data = trained
        rows = evaluate_vae(
            vae, params, data.test_features[:60], alphas=[0.0], ks=[2, 16],
            repeats=4, seed=2, k_ref=256,
        )
        by_k = {r.k: r for r in rows}
        tol = 3.0 * math.sqrt(by_k[2].se_gap**2 + by_k[16].se_gap**2)
        assert by_k[16].mean_gap >= by_k[2].mean_gap - tol

    def test_repeats_validated(self, trained):
        vae, params, data = trained
        with pytest.raises(ValueError, match="repeats"):
            evaluate_vae(vae, params, data.test_features[:5], [0.0], [2], repeats=1)


class TestWeightDiagnostics:
    def test_equal_weights(self):
        diag = weight_diagnostics(np.zeros(4))
        assert diag.ratio == pytest.approx(1.0 / 3.0, abs=1e-12)
        np.testing.assert_allclose(diag.sorted_weights, np.full(4, 0.25))

    def test_nine_to_one(self):
        diag = weight_diagnostics(np.log(np.array([9.0, 1.0])))
        assert diag.ratio == pytest.approx(9.0, abs=1e-10)

    def test_dominant_weight_reported_in_log_domain(self):
        diag = weight_diagnostics(np.array([100.0, 0.0, 0.0]))
        assert math.isfinite(diag.log_ratio)
        assert diag.log_ratio == pytest.approx(100.0 - math.log(2.0), abs=1e-9)
        assert diag.sorted_weights[0] == pytest.approx(1.0, abs=1e-12)

    def test_ratio_crosses_one_at_half(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            log_w = rng.standard_normal(6) * 2.0
            diag = weight_diagnostics(log_w)
            w_max = diag.sorted_weights[0]
            assert (diag.ratio >= 1.0) == (w_max >= 0.5)

    def test_sorted_descending(self):
        rng = np.random.default_rng(4)
        diag = weight_diagnostics(rng.standard_normal(10))
        assert np.all(np.diff(diag.sorted_weights) <= 0.0)
        assert float(np.sum(diag.sorted_weights)) == pytest.approx(1.0, abs=1e-12)
