"""
Tests of the loss functions against hand computed values, loop oracles and
finite difference gradients.
"""

import unittest

import numpy as np
import torch

from cfc import losses
from cfc.config import RunConfig
from cfc.gradients import compare_numeric_to_analytic_gradient
from cfc.uvgeom import UVField
from cfc_tests.testutil import random_uv_field

LN2 = np.log(2.)


def t(values):
    return torch.tensor(values, dtype=torch.float64)


def uv_tensor_field(field):
    return UVField(torch.from_numpy(field.coords), torch.from_numpy(field.valid))


class TestUVLoss(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_equal_fields(self):
        field = uv_tensor_field(random_uv_field(self.rng, 6, 6))
        self.assertEqual(losses.uv_loss(field, field).item(), 0.)

    def test_constant_offset(self):
        field = random_uv_field(self.rng, 6, 6)
        shifted = UVField(field.coords + np.array([.5, 0.]), field.valid)
        loss = losses.uv_loss(uv_tensor_field(shifted),
                              uv_tensor_field(field))
        self.assertAlmostEqual(loss.item(), .25, places=12)

    def test_loop_oracle(self):
        first = random_uv_field(self.rng, 5, 7)
        second = random_uv_field(self.rng, 5, 7)
        total, n = 0., 0
        for i in range(5):
            for j in range(7):
                if first.valid[i, j] and second.valid[i, j]:
                    total += abs(first.coords[i, j, 0]
                                 - second.coords[i, j, 0])
                    total += abs(first.coords[i, j, 1]
                                 - second.coords[i, j, 1])
                    n += 1
        loss = losses.uv_loss(uv_tensor_field(first), uv_tensor_field(second))
        self.assertAlmostEqual(loss.item(), total / (2 * n), delta=1e-12)

    def test_pixel_permutation_invariance(self):
        first = random_uv_field(self.rng, 4, 6)
        second = random_uv_field(self.rng, 4, 6)
        order = self.rng.permutation(24)

        def permuted(field):
            return UVField(field.coords.reshape(24, 1, 2)[order],
                           field.valid.reshape(24, 1)[order])

        self.assertAlmostEqual(
            losses.uv_loss(uv_tensor_field(first),
                           uv_tensor_field(second)).item(),
            losses.uv_loss(uv_tensor_field(permuted(first)),
                           uv_tensor_field(permuted(second))).item(),
            delta=1e-12)

    def test_rejections(self):
        field = random_uv_field(self.rng, 4, 4)
        disjoint = UVField(field.coords, ~field.valid)
        with self.assertRaises(losses.DisjointMasks):
            losses.uv_loss(uv_tensor_field(field), uv_tensor_field(disjoint))
        with self.assertRaises(ValueError):
            losses.uv_loss(uv_tensor_field(field), uv_tensor_field(
                random_uv_field(self.rng, 4, 5)))


class TestAdversarialLosses(unittest.TestCase):
    def test_gt(self):
        self.assertAlmostEqual(losses.gt_adversarial_loss(t([.5])).item(),
                               LN2, places=6)
        self.assertAlmostEqual(
            losses.gt_adversarial_loss(t([1 - losses.EPSILON])).item(), 0.,
            places=6)
        self.assertAlmostEqual(
            losses.gt_adversarial_loss(t([.5, .25])).item(), 1.0397208,
            places=6)

    def test_dt(self):
        self.assertAlmostEqual(losses.dt_loss(t([.5]), t([.5])).item(),
                               1.3862944, places=6)
        self.assertAlmostEqual(losses.dt_loss(t([0.]), t([1.])).item(), 0.,
                               places=6)
        self.assertAlmostEqual(losses.dt_loss(t([.75]), t([.25])).item(),
                               2.7725887, places=6)

    def test_gf(self):
        self.assertAlmostEqual(
            losses.gf_adversarial_loss(t([.5]), t([.5]), 10.).item(),
            7.6246189, places=6)
        self.assertAlmostEqual(
            losses.gf_adversarial_loss(t([.3, .6]), t([.1, .2]), 0.).item(),
            losses.gt_adversarial_loss(t([.3, .6])).item(), places=12)

    def test_df(self):
        half = t([.5])
        self.assertAlmostEqual(losses.df_loss(half, half, half, half).item(),
                               2.7725887, places=6)
        self.assertAlmostEqual(
            losses.df_loss(t([1.]), t([0.]), t([1.]), t([0.])).item(), 0.,
            places=6)

        rng = np.random.default_rng(1)
        low_real, low_fake, high_real, high_fake = rng.uniform(.05, .95,
                                                               (4, 6))
        oracle = 0.
        for real, fake in ((low_real, low_fake), (high_real, high_fake)):
            oracle += sum(-np.log(r) - np.log(1 - f)
                          for r, f in zip(real, fake)) / 6
        self.assertAlmostEqual(
            losses.df_loss(t(low_real), t(low_fake), t(high_real),
                           t(high_fake)).item(), oracle, delta=1e-10)

    def test_monotonicity(self):
        grid = t(np.linspace(.05, .95, 19))
        g = torch.stack([losses.gt_adversarial_loss(p[None]) for p in grid])
        self.assertTrue(torch.all(g[1:] < g[:-1]))
        d = torch.stack([losses.dt_loss(t([.3]), p[None]) for p in grid])
        self.assertTrue(torch.all(d[1:] < d[:-1]))
        d = torch.stack([losses.dt_loss(p[None], t([.3])) for p in grid])
        self.assertTrue(torch.all(d[1:] > d[:-1]))


class TestReconstructionLosses(unittest.TestCase):
    def test_perceptual(self):
        def identity(x):
            return x

        x = t([[1., 0.]])
        self.assertEqual(losses.perceptual_loss(identity, x, x).item(), 0.)
        self.assertAlmostEqual(
            losses.perceptual_loss(identity, x, t([[0., 1.]])).item(), 2.)

        rng = np.random.default_rng(2)
        first, second = rng.standard_normal((2, 3, 5))
        oracle = sum(sum((a - b) ** 2 for a, b in zip(row_1, row_2))
                     for row_1, row_2 in zip(first, second)) / 3
        self.assertAlmostEqual(
            losses.perceptual_loss(identity, t(first), t(second)).item(),
            oracle, delta=1e-10)

    def test_pixel(self):
        x = torch.rand(2, 3, 4, 4, dtype=torch.float64)
        self.assertEqual(losses.pixel_loss(x, x).item(), 0.)
        self.assertAlmostEqual(losses.pixel_loss(x, x + 1.).item(), .01,
                               places=12)
        with self.assertRaises(ValueError):
            losses.pixel_loss(x, x[:, :, :3])

    def test_total(self):
        self.assertEqual(losses.total_generator_loss(0, 0, 0, 0, 0), 0)
        self.assertEqual(losses.total_generator_loss(1, 2, 3, 4, 5), 15)
        rng = np.random.default_rng(3)
        x, fx = (t(rng.uniform(size=(2, 3, 4, 4))) for _ in range(2))
        terms = [losses.gt_adversarial_loss(t([.4, .7])),
                 losses.gt_adversarial_loss(t([.2])),
                 losses.gf_adversarial_loss(t([.3]), t([.6])),
                 losses.squared_distance(x, fx),
                 losses.pixel_loss(x, fx)]
        self.assertAlmostEqual(losses.total_generator_loss(*terms).item(),
                               sum(term.item() for term in terms),
                               delta=1e-12)

    def test_default_weights(self):
        config = RunConfig()
        self.assertEqual(config.lambda_high, 10.)
        self.assertEqual(config.alpha_pixel, .01)
        bundle = losses.LossBundle(*range(8))
        self.assertEqual(bundle.lambda_high, config.lambda_high)
        self.assertEqual(bundle.alpha_pixel, config.alpha_pixel)


class TestGradients(unittest.TestCase):
    def test_loss_gradients(self):
        rng = np.random.default_rng(4)
        probabilities = t(rng.uniform(.1, .9, 4))
        other = t(rng.uniform(.1, .9, 4))
        x = t(rng.uniform(size=(1, 3, 3, 3)))
        fx = t(rng.uniform(size=(1, 3, 3, 3)))
        cases = [
            (lambda: losses.gt_adversarial_loss(probabilities),
             [probabilities]),
            (lambda: losses.dt_loss(probabilities, other),
             [probabilities, other]),
            (lambda: losses.gf_adversarial_loss(probabilities, other),
             [probabilities, other]),
            (lambda: losses.df_loss(probabilities, other, other,
                                    probabilities), [probabilities, other]),
            (lambda: losses.squared_distance(x, fx), [x, fx]),
            (lambda: losses.pixel_loss(x, fx), [x, fx]),
        ]
        for function, inputs in cases:
            _, relative = compare_numeric_to_analytic_gradient(function,
                                                               inputs)
            self.assertLess(relative, 1e-3)

        field = random_uv_field(rng, 3, 3, p_valid=1.)
        coords = torch.from_numpy(field.coords)
        target = uv_tensor_field(random_uv_field(rng, 3, 3, p_valid=1.))
        _, relative = compare_numeric_to_analytic_gradient(
            lambda: losses.uv_loss(
                UVField(coords, torch.from_numpy(field.valid)), target),
            [coords])
        self.assertLess(relative, 1e-3)


if __name__ == '__main__':
    unittest.main()
