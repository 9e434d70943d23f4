# -*- coding: utf-8 -*-
import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from autoencoder import (AutoencoderParams, ae_loss, ae_loss_backward, corrupt, decode, encode,  # noqa: E402
                         encode_backward)
from errors import DimensionError  # noqa: E402
from numerics import finite_diff_check, make_rng  # noqa: E402


def _random_params(n_assoc, n_sim, d, seed=0):
    rng = make_rng(seed)
    params = AutoencoderParams.initialize(n_assoc, n_sim, d, rng)
    for tensor in params.tensors().values():
        tensor[...] = rng.normal(scale=0.5, size=tensor.shape)
    return params


class TestCorrupt(unittest.TestCase):
    def test_zero_noise_is_identity(self):
        row = np.array([1.0, 0.0, 0.4, 1.0])
        np.testing.assert_array_equal(corrupt(row, 0.0, make_rng(0)), row)

    def test_full_noise_zeroes_everything(self):
        np.testing.assert_array_equal(corrupt(np.ones(10), 1.0, make_rng(0)), np.zeros(10))

    def test_masking_rate(self):
        for seed in range(20):
            out = corrupt(np.ones(1000), 0.2, make_rng(seed))
            self.assertTrue(0.76 <= out.mean() <= 0.84)
            self.assertTrue(set(np.unique(out)) <= {0.0, 1.0})

    def test_bad_noise_level(self):
        with self.assertRaises(ValueError):
            corrupt(np.ones(3), 1.5, make_rng(0))


class TestEncodeDecode(unittest.TestCase):
    def test_zero_weights_give_half(self):
        params = AutoencoderParams.zeros(3, 2, 4)
        latent = encode(np.array([1.0, 0.0, 1.0]), np.array([1.0, 0.5]), params)
        np.testing.assert_allclose(latent, 0.5)

    def test_hand_computed_latent(self):
        params = AutoencoderParams.zeros(2, 1, 1)
        params.W1[...] = [[1.0, -1.0]]
        params.V1[...] = [[2.0]]
        params.b_enc[...] = [0.5]
        latent = encode(np.array([1.0, 1.0]), np.array([0.25]), params)
        self.assertAlmostEqual(float(latent[0]), 1.0 / (1.0 + np.exp(-1.0)), places=12)

    def test_latent_in_open_interval(self):
        params = _random_params(5, 4, 3)
        latent = encode(np.ones(5), np.ones(4), params)
        self.assertTrue(np.all((latent > 0) & (latent < 1)))

    def test_batched_matches_single_rows(self):
        params = _random_params(5, 4, 3)
        rng = make_rng(1)
        assoc = rng.integers(0, 2, size=(6, 5)).astype(float)
        sim = rng.random((6, 4))
        block = encode(assoc, sim, params)
        for k in range(6):
            np.testing.assert_allclose(block[k], encode(assoc[k], sim[k], params), rtol=1e-14)

    def test_dimension_mismatch(self):
        params = AutoencoderParams.zeros(3, 2, 4)
        with self.assertRaises(DimensionError):
            encode(np.ones(4), np.ones(2), params)
        with self.assertRaises(DimensionError):
            decode(np.ones(3), params)

    def test_decode_shapes(self):
        params = _random_params(5, 4, 3)
        assoc_recon, sim_recon = decode(np.full(3, 0.5), params)
        self.assertEqual(assoc_recon.shape, (5,))
        self.assertEqual(sim_recon.shape, (4,))


class TestReconstructionLoss(unittest.TestCase):
    def test_perfect_reconstruction_without_regularizer(self):
        params = AutoencoderParams.zeros(2, 2, 1)
        s, sim = np.array([0.5, 0.5]), np.array([0.5, 0.5])
        self.assertEqual(ae_loss(s, sim, (s.copy(), sim.copy()), params, 0.3, 0.0), 0.0)

    def test_alpha_weighting(self):
        params = AutoencoderParams.zeros(1, 1, 1)
        loss = ae_loss(np.array([1.0]), np.array([1.0]), (np.array([0.0]), np.array([0.5])), params, 0.8, 0.0)
        self.assertAlmostEqual(loss, 0.8 * 1.0 + 0.2 * 0.25)

    def test_regularizer_counted_once_per_block(self):
        params = _random_params(3, 2, 2)
        rows = np.zeros((4, 3)), np.zeros((4, 2))
        loss = ae_loss(*rows, rows, params, 0.5, 0.1)
        self.assertAlmostEqual(loss, 0.1 * params.regularizer(), places=12)

    def test_backward_matches_finite_differences(self):
        params = _random_params(4, 3, 2, seed=5)
        rng = make_rng(6)
        assoc_in = rng.integers(0, 2, size=(3, 4)).astype(float)
        sim_in = rng.random((3, 3))
        assoc_target = rng.integers(0, 2, size=(3, 4)).astype(float)
        sim_target = rng.random((3, 3))
        alpha, lam, weight = 0.3, 0.05, 0.7

        def loss(p):
            latent = encode(assoc_in, sim_in, p)
            return weight * ae_loss(assoc_target, sim_target, decode(latent, p), p, alpha, lam)

        latent = encode(assoc_in, sim_in, params)
        grads = params.zeros_like()
        d_latent = ae_loss_backward(assoc_target, sim_target, decode(latent, params), latent,
                                    params, alpha, lam, weight, grads)
        encode_backward(d_latent, latent, assoc_in, sim_in, grads)
        self.assertLessEqual(finite_diff_check(loss, params, grads), 1e-4)


if __name__ == '__main__':
    unittest.main()
