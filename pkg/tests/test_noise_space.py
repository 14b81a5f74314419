import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from autodiff import Tape, Tensor, backward, dot, finite_diff_grad, relative_error
from noise import (
    NoiseSpace,
    NoiseSpaceError,
    UpdateSign,
    batch_gradient,
    cosine_similarities,
    diversity_gradient,
    diversity_loss,
    estimate,
    estimate_from_extracted,
    estimate_weights,
    extract_noise,
    from_bytes,
    init_noise_space,
    loss_breakdown,
    noise_space_gradient,
    pre_reconstruct,
    reconstruct_noise,
    reconstruct_on_tape,
    reconstruction_loss,
    self_supervised_update,
    sparsity_loss,
    to_bytes,
)


class TestInitNoiseSpace(unittest.TestCase):

    def test_same_seed_is_bit_identical(self):
        """Test deterministic initialization."""
        a = init_noise_space(16, 8, 3)
        b = init_noise_space(16, 8, 3)
        self.assertEqual(a.bases.tobytes(), b.bases.tobytes())
        self.assertNotEqual(a.bases.tobytes(), init_noise_space(16, 8, 4).bases.tobytes())

    def test_published_size(self):
        """Test k=1024 bases of length 400, none zero."""
        space = init_noise_space(1024, 400, 0)
        self.assertEqual(space.bases.shape, (1024, 400))
        self.assertTrue(np.all(space.norms() > 0))

    def test_norms_in_unit_interval_over_many_seeds(self):
        """Test base norms lie in (0, 1] for 1000 seeds."""
        for seed in range(1000):
            norms = init_noise_space(4, 3, seed).norms()
            self.assertTrue(np.all(norms > 0) and np.all(norms <= 1.0), f"seed {seed}")

    def test_invalid_sizes(self):
        """Test that k or d of zero is rejected."""
        with self.assertRaises(NoiseSpaceError):
            init_noise_space(0, 4, 0)
        with self.assertRaises(NoiseSpaceError):
            init_noise_space(4, 0, 0)

    def test_space_validation(self):
        """Test beta range, epsilon sign and finite bases."""
        with self.assertRaises(NoiseSpaceError):
            NoiseSpace(bases=np.ones((2, 2)), beta=1.5)
        with self.assertRaises(NoiseSpaceError):
            NoiseSpace(bases=np.ones((2, 2)), epsilon=0.0)
        with self.assertRaises(NoiseSpaceError):
            NoiseSpace(bases=np.array([[np.nan, 1.0]]))
        with self.assertRaises(ValueError):
            NoiseSpace(bases=np.ones((2, 2)), update_sign="sideways")


class TestReconstruction(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(5)
        self.orthonormal = NoiseSpace(bases=np.eye(2))

    def test_extract_noise(self):
        """Test identity, zero and hand-evaluated affine maps."""
        f = np.array([2.0, 3.0])
        assert_array_equal(extract_noise(f, np.eye(2), np.zeros(2)).data, f)
        assert_array_equal(extract_noise(f, np.zeros((2, 2)), np.zeros(2)).data, [0, 0])
        assert_array_equal(extract_noise(f, [[1, 1], [0, 1]], [1, 0]).data, [6, 3])
        with self.assertRaises(NoiseSpaceError):
            extract_noise(f, np.eye(3), np.zeros(3))

    def test_cosine_similarities(self):
        """Test parallel, orthogonal and 45-degree cases."""
        space = NoiseSpace(bases=np.array([[1.0, 0.0], [0.0, 2.0]]))
        s, degenerate = cosine_similarities(space, [3.0, 0.0])
        assert_allclose(s, [1.0, 0.0])
        self.assertFalse(degenerate)
        s, _ = cosine_similarities(space, [1.0, 1.0])
        self.assertAlmostEqual(s[0], 1 / math.sqrt(2), places=12)

    def test_cosine_similarities_guard(self):
        """Test the zero-noise guard."""
        s, degenerate = cosine_similarities(self.orthonormal, [0.0, 0.0])
        assert_array_equal(s, [0.0, 0.0])
        self.assertTrue(degenerate)

    def test_zero_base_gives_zero_similarity(self):
        """Test that a base shrunk to exactly zero stays finite on both paths."""
        space = NoiseSpace(bases=np.array([[1.0, 0.0], [0.0, 0.0]]))
        s, degenerate = cosine_similarities(space, [3.0, 4.0])
        assert_allclose(s, [0.6, 0.0])
        self.assertFalse(degenerate)
        est = estimate_from_extracted(space, [3.0, 4.0])
        assert_allclose(est.reconstructed, [5.0, 0.0])
        n_res, _ = reconstruct_on_tape(space, Tensor([3.0, 4.0]))
        self.assertTrue(np.all(np.isfinite(n_res.data)))
        assert_allclose(n_res.data, [5.0, 0.0])

    def test_similarities_are_scale_invariant(self):
        """Test that scaling n_f by a positive constant leaves similarities unchanged."""
        space = init_noise_space(8, 16, 1)
        n_f = self.rng.normal(size=16)
        for c in (1e-3, 0.5, 3.7, 1e4):
            assert_allclose(cosine_similarities(space, c * n_f)[0], cosine_similarities(space, n_f)[0],
                            rtol=0, atol=1e-12)

    def test_pre_reconstruct(self):
        """Test zero, single-base and hand-combined cases."""
        assert_array_equal(pre_reconstruct(self.orthonormal, [0.0, 0.0]), [0.0, 0.0])
        single = NoiseSpace(bases=np.array([[2.0, -1.0]]))
        assert_allclose(pre_reconstruct(single, [0.5]), [1.0, -0.5])
        n_prime = pre_reconstruct(self.orthonormal, [1.0, 0.5])
        assert_allclose(n_prime, [1.0, 0.5])
        self.assertAlmostEqual(np.linalg.norm(n_prime), math.sqrt(1.25))

    def test_estimate_weights(self):
        """Test unit scaling, the guard and a hand ratio."""
        s = np.array([0.6, 0.8])
        weights, degenerate = estimate_weights([3.0, 4.0], [0.0, 5.0], s)
        assert_allclose(weights, s)
        self.assertFalse(degenerate)
        weights, degenerate = estimate_weights([1.0, 0.0], [1e-12, 0.0], s)
        assert_array_equal(weights, [0.0, 0.0])
        self.assertTrue(degenerate)
        weights, _ = estimate_weights([2.0, 0.0], [0.0, 4.0], [0.5])
        assert_allclose(weights, [0.25])

    def test_reconstruct_noise(self):
        """Test zero weights and the single-base signed projection."""
        assert_array_equal(reconstruct_noise(self.orthonormal, [0.0, 0.0]), [0.0, 0.0])
        n1 = np.array([1.0, 2.0, -2.0])
        space = NoiseSpace(bases=n1[None, :])
        n_f = np.array([-3.0, 0.5, 1.0])
        est = estimate_from_extracted(space, n_f)
        s1 = est.similarities[0]
        expected = np.sign(s1) * np.linalg.norm(n_f) * n1 / np.linalg.norm(n1)
        assert_allclose(est.reconstructed, expected, atol=1e-12)

    def test_energy_preservation(self):
        """Test ||n_res|| == ||n_f|| and collinearity with n' on random instances."""
        for trial in range(200):
            k, d = int(self.rng.choice([1, 4, 8, 64])), int(self.rng.choice([8, 16, 64]))
            space = init_noise_space(k, d, trial)
            n_f = self.rng.normal(size=d) * self.rng.uniform(0.01, 100.0)
            est = estimate_from_extracted(space, n_f)
            self.assertFalse(est.degenerate)
            norm_f = np.linalg.norm(n_f)
            self.assertLessEqual(abs(np.linalg.norm(est.reconstructed) - norm_f), 1e-9 * norm_f)
            cosine = est.reconstructed @ est.pre_reconstruction / (
                np.linalg.norm(est.reconstructed) * np.linalg.norm(est.pre_reconstruction))
            self.assertAlmostEqual(cosine, 1.0, delta=1e-9)
            self.assertTrue(np.all(np.abs(est.similarities) <= 1.0))

    def test_degenerate_paths_stay_finite(self):
        """Test zero features and a zero pre-reconstruction."""
        space = init_noise_space(4, 3, 0)
        est = estimate(space, np.zeros(3), np.eye(3), np.zeros(3))
        self.assertTrue(est.degenerate)
        assert_array_equal(est.reconstructed, np.zeros(3))

        orthogonal = NoiseSpace(bases=np.array([[1.0, 0.0], [2.0, 0.0]]))
        est = estimate_from_extracted(orthogonal, [0.0, 1.0])
        self.assertTrue(est.degenerate)
        assert_array_equal(est.weights, [0.0, 0.0])
        assert_array_equal(est.reconstructed, [0.0, 0.0])
        self.assertTrue(np.isfinite(est.breakdown.total))


class TestObjective(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(9)

    def test_diversity_loss(self):
        """Test orthogonal, duplicated and brute-force cases."""
        self.assertEqual(diversity_loss(NoiseSpace(bases=np.eye(3))), 0.0)
        self.assertEqual(diversity_loss(NoiseSpace(bases=np.array([[1.0, 0.0], [1.0, 0.0]]))), 1.0)
        bases = self.rng.normal(size=(3, 5))
        brute = sum(bases[l] @ bases[m] for l in range(3) for m in range(3) if l != m) / 6
        self.assertAlmostEqual(diversity_loss(NoiseSpace(bases=bases)), brute, places=12)
        with self.assertRaises(NoiseSpaceError):
            diversity_loss(NoiseSpace(bases=np.ones((1, 3))))

    def test_diversity_gradient_identity(self):
        """Test the per-base gradient against the explicit sum over the other bases."""
        bases = self.rng.normal(size=(5, 4))
        expected = np.array([2.0 / 20 * sum(bases[l] for l in range(5) if l != i) for i in range(5)])
        assert_allclose(diversity_gradient(NoiseSpace(bases=bases)), expected, rtol=0, atol=1e-12)

    def test_reconstruction_and_sparsity(self):
        """Test exact, zero-weight and hand-evaluated residuals."""
        space = NoiseSpace(bases=np.eye(2))
        self.assertEqual(reconstruction_loss([2.0, -1.0], [2.0, -1.0], space), 0.0)
        self.assertEqual(reconstruction_loss([3.0, 4.0], [0.0, 0.0], space), 25.0)
        self.assertEqual(reconstruction_loss([2.0, 1.0], [1.0, 0.0], space), 2.0)
        self.assertEqual(sparsity_loss([0.5, -1.5]), 2.0)

    def test_loss_breakdown_total(self):
        """Test L_u = L_r + L_s + alpha * L_d, with L_d = 0 for one base."""
        space = init_noise_space(4, 6, 2, alpha=0.7)
        n_f, lam = self.rng.normal(size=6), self.rng.normal(size=4)
        b = loss_breakdown(space, n_f, lam)
        self.assertEqual(b.total, b.reconstruction + b.sparsity + 0.7 * b.diversity)
        self.assertGreaterEqual(b.reconstruction, 0.0)
        single = loss_breakdown(init_noise_space(1, 6, 2), n_f, lam[:1])
        self.assertEqual(single.diversity, 0.0)

    def test_gradient_stationary_and_decoupled(self):
        """Test zero gradients at exact reconstruction without diversity and at lambda = 0, alpha = 0."""
        space = init_noise_space(3, 5, 4, alpha=0.0)
        lam = np.array([0.5, -1.0, 2.0])
        assert_allclose(noise_space_gradient(space, lam @ space.bases, lam), np.zeros((3, 5)), atol=1e-12)
        assert_array_equal(noise_space_gradient(space, self.rng.normal(size=5), np.zeros(3)), np.zeros((3, 5)))

    def test_gradient_matches_finite_differences(self):
        """Test the analytic gradient on 100 random instances with k <= 8 and d <= 16."""
        for trial in range(100):
            k, d = int(self.rng.integers(2, 9)), int(self.rng.integers(1, 17))
            space = init_noise_space(k, d, trial, alpha=float(self.rng.uniform(0, 2)))
            n_f, lam = self.rng.normal(size=d), self.rng.normal(size=k)

            def objective(bases):
                trial_space = space.with_bases(bases.data)
                return reconstruction_loss(n_f, lam, trial_space) + trial_space.alpha * diversity_loss(trial_space)

            numeric = finite_diff_grad(objective, Tensor(space.bases))
            self.assertLessEqual(relative_error(noise_space_gradient(space, n_f, lam), numeric), 1e-4)

    def test_gradient_needs_two_bases(self):
        """Test the k >= 2 precondition."""
        with self.assertRaises(NoiseSpaceError):
            noise_space_gradient(init_noise_space(1, 3, 0), np.ones(3), np.ones(1))

    def test_batch_gradient_is_mean_of_samples(self):
        """Test the batch gradient against the mean per-sample gradient."""
        space = init_noise_space(4, 6, 8)
        samples = [(self.rng.normal(size=6), self.rng.normal(size=4)) for _ in range(3)]
        expected = np.mean([noise_space_gradient(space, n_f, lam) for n_f, lam in samples], axis=0)
        assert_allclose(batch_gradient(space, samples), expected, rtol=0, atol=1e-12)
        with self.assertRaises(NoiseSpaceError):
            batch_gradient(space, [])

    def test_batch_gradient_with_single_base(self):
        """Test that one base gets the reconstruction gradient only."""
        space = init_noise_space(1, 3, 0)
        n_f, lam = np.array([1.0, 2.0, 3.0]), np.array([0.5])
        residual = n_f - 0.5 * space.bases[0]
        assert_allclose(batch_gradient(space, [(n_f, lam)]), [-2 * 0.5 * residual])


class TestUpdate(unittest.TestCase):

    def test_full_decay_keeps_space(self):
        """Test that beta = 1 leaves the bases bit-identical."""
        space = init_noise_space(4, 3, 1, beta=1.0)
        updated = self_supervised_update(space, np.random.default_rng(0).normal(size=(4, 3)))
        self.assertEqual(updated.bases.tobytes(), space.bases.tobytes())

    def test_zero_gradient_shrinks(self):
        """Test that a zero gradient scales the bases by beta."""
        space = init_noise_space(4, 3, 1, beta=0.9)
        assert_array_equal(self_supervised_update(space, np.zeros((4, 3))).bases, 0.9 * space.bases)

    def test_hand_computed_step(self):
        """Test beta = 0.9, n = (1, 0), g = (1, 0) gives (0.8, 0)."""
        space = NoiseSpace(bases=np.array([[1.0, 0.0]]), beta=0.9)
        self.assertEqual(self_supervised_update(space, np.array([[1.0, 0.0]])).bases.tolist(), [[0.8, 0.0]])

    def test_as_written_sign(self):
        """Test the literal + update variant."""
        space = NoiseSpace(bases=np.array([[1.0, 0.0]]), beta=0.9, update_sign=UpdateSign.AS_WRITTEN)
        assert_allclose(self_supervised_update(space, np.array([[1.0, 0.0]])).bases, [[1.0, 0.0]])

    def test_zero_beta_is_pure_step(self):
        """Test that beta = 0 replaces the bases by the negated gradient."""
        space = NoiseSpace(bases=np.ones((2, 2)), beta=0.0)
        g = np.array([[1.0, -2.0], [0.5, 3.0]])
        assert_array_equal(self_supervised_update(space, g).bases, -g)

    def test_shape_mismatch(self):
        """Test that gradients must match the bases."""
        with self.assertRaises(NoiseSpaceError):
            self_supervised_update(init_noise_space(2, 3, 0), np.zeros((3, 2)))


class TestOnTape(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(13)
        self.space = init_noise_space(8, 16, 3)

    def test_values_match_estimate(self):
        """Test the differentiable reconstruction against the array path."""
        n_f = self.rng.normal(size=16)
        n_res, est = reconstruct_on_tape(self.space, Tensor(n_f))
        assert_allclose(n_res.data, est.reconstructed, rtol=0, atol=1e-12)

    def test_gradient_reaches_extracted_noise(self):
        """Test d(r . n_res)/d n_f against finite differences."""
        n_f = Tensor(self.rng.normal(size=16))
        r = Tensor(self.rng.normal(size=16))
        f = lambda v: dot(reconstruct_on_tape(self.space, v)[0], r)
        tape = Tape()
        tracked = tape.watch(n_f)
        analytic = backward(tape, f(tracked))[tracked]
        self.assertLessEqual(relative_error(analytic, finite_diff_grad(f, n_f)), 1e-6)

    def test_degenerate_is_constant_zero(self):
        """Test that a zero extracted noise yields an untracked zero vector."""
        tape = Tape()
        n_res, est = reconstruct_on_tape(self.space, tape.watch(Tensor(np.zeros(16))))
        self.assertTrue(est.degenerate)
        self.assertFalse(n_res.tracked)
        assert_array_equal(n_res.data, np.zeros(16))


class TestSerialization(unittest.TestCase):

    def test_layout_and_round_trip(self):
        """Test k, d header, payload size and bit-exact decode."""
        space = init_noise_space(3, 5, 0)
        payload = to_bytes(space)
        self.assertEqual(len(payload), 8 + 8 * 15)
        self.assertEqual(payload[:8], (3).to_bytes(4, 'little') + (5).to_bytes(4, 'little'))
        self.assertEqual(from_bytes(payload).bases.tobytes(), space.bases.tobytes())

    def test_truncated_payload(self):
        """Test that short payloads are rejected."""
        payload = to_bytes(init_noise_space(3, 5, 0))
        with self.assertRaises(NoiseSpaceError):
            from_bytes(payload[:-1])
        with self.assertRaises(NoiseSpaceError):
            from_bytes(payload[:4])


if __name__ == '__main__':
    unittest.main()
