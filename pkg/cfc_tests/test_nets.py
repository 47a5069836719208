"""
Tests of the network shapes, ranges, gradients and checkpoints.
"""

import os
import tempfile
import unittest

import numpy as np
import torch

from cfc import nets, wavelet
from cfc.gradients import compare_numeric_to_analytic_gradient
from cfc.uvgeom import UVField
from cfc_tests.testutil import tiny_config


class TestShapes(unittest.TestCase):
    def setUp(self):
        self.config = tiny_config()
        self.networks = nets.build_networks(self.config, seed=0)
        self.images = torch.rand(3, 3, 16, 16)

    def test_generator_output(self):
        result = self.networks.generator(self.images)
        self.assertEqual(tuple(result.output_image.shape), (3, 3, 16, 16))
        self.assertEqual(tuple(result.predicted_uv.coords.shape),
                         (3, 16, 16, 2))
        self.assertEqual(tuple(result.predicted_uv.valid.shape), (3, 16, 16))
        self.assertEqual(result.predicted_uv.valid.dtype, torch.bool)
        self.assertEqual(tuple(result.texture_map.shape), (3, 32, 16, 16))
        self.assertEqual(tuple(result.identity_rep.shape), (3, 8))
        self.assertEqual(tuple(result.color_texture.shape), (3, 3, 16, 16))

        self.assertTrue(torch.all(result.predicted_uv.coords >= 0))
        self.assertTrue(torch.all(result.predicted_uv.coords <= 1))
        self.assertTrue(torch.all(result.output_image >= 0))
        self.assertTrue(torch.all(result.output_image <= 1))

    def test_spectrum_default(self):
        with torch.no_grad():
            default = self.networks.generator(self.images).output_image
            nir = nets.generator_forward(self.networks.generator, self.images,
                                         torch.ones(3)).output_image
        np.testing.assert_array_equal(default.numpy(), nir.numpy())

    def test_large_resolution(self):
        config = tiny_config(image_size=256)
        generator = nets.Generator(config)
        with torch.no_grad():
            result = generator(torch.rand(1, 3, 256, 256))
        self.assertEqual(tuple(result.output_image.shape), (1, 3, 256, 256))
        self.assertEqual(tuple(result.predicted_uv.coords.shape),
                         (1, 256, 256, 2))

    def test_resolution_mismatch(self):
        with self.assertRaises(ValueError):
            self.networks.generator(torch.rand(1, 3, 32, 32))
        with self.assertRaises(ValueError):
            nets.embed(self.networks.embedder, torch.rand(1, 3, 8, 8))
        with self.assertRaises(ValueError):
            self.networks.generator(torch.rand(3, 16, 16))

    def test_discriminators(self):
        discriminators = self.networks.discriminators
        low = discriminators.low(torch.rand(4, 3, 8, 8))
        high = discriminators.high(torch.rand(4, 9, 8, 8))
        for scores in (low, high):
            self.assertEqual(tuple(scores.shape), (4,))
            self.assertTrue(torch.all((scores > 0) & (scores < 1)))
        with self.assertRaises(ValueError):
            discriminators.low(torch.rand(4, 9, 8, 8))
        with self.assertRaises(ValueError):
            discriminators.high(torch.rand(4, 3, 8, 8))

        single = nets.Discriminators(tiny_config(image_adversary='single'))
        self.assertEqual(tuple(single.image(self.images).shape), (3,))
        self.assertFalse(hasattr(single, 'low'))
        plain = nets.Discriminators(tiny_config(image_adversary='none'))
        self.assertFalse(hasattr(plain, 'image'))

    def test_pair_discriminator(self):
        pair = self.networks.discriminators.pair
        scores = pair(torch.rand(5, 8), torch.rand(5, 8))
        self.assertEqual(tuple(scores.shape), (5,))
        self.assertTrue(torch.all((scores > 0) & (scores < 1)))
        with self.assertRaises(ValueError):
            pair(torch.rand(5, 7), torch.rand(5, 8))

    def test_embedder(self):
        embedder = self.networks.embedder
        self.assertFalse(any(p.requires_grad for p in embedder.parameters()))
        self.assertFalse(embedder.training)
        self.assertEqual(tuple(nets.embed(embedder, self.images).shape),
                         (3, 8))
        self.assertEqual(tuple(embedder.logits(self.images).shape), (3, 4))

    def test_spectrum_indicator(self):
        indicator = nets.spectrum_indicator(['NIR', 'VIS', 'NIR'])
        np.testing.assert_array_equal(indicator.numpy(), [1., 0., 1.])


class TestFusion(unittest.TestCase):
    def test_no_valid_pixel(self):
        torch.manual_seed(0)
        fusion = nets.FusionNet(feature_channels=32, width=8, layers=2)
        field = UVField(torch.rand(2, 16, 16, 2),
                        torch.zeros(2, 16, 16, dtype=torch.bool))
        with torch.no_grad():
            first = nets.fusion_forward(fusion, torch.rand(2, 32, 16, 16),
                                        field, torch.rand(2, 3, 16, 16))
            second = nets.fusion_forward(fusion, torch.rand(2, 32, 16, 16),
                                         field, torch.rand(2, 3, 16, 16))
        self.assertTrue(torch.all(torch.isfinite(first)))
        self.assertTrue(torch.all((first >= 0) & (first <= 1)))
        np.testing.assert_allclose(first.numpy(), second.numpy())

    def test_full_gate_reproduces_colour(self):
        fusion = nets.FusionNet(feature_channels=32, width=8, layers=2)
        with torch.no_grad():
            fusion.head.bias[3] = 50.
        texture = torch.rand(1, 3, 16, 16)
        coords = torch.stack(torch.meshgrid(
            torch.linspace(0, 1, 16), torch.linspace(0, 1, 16),
            indexing='xy'), dim=-1)[None]
        field = UVField(coords, torch.ones(1, 16, 16, dtype=torch.bool))
        with torch.no_grad():
            fusion.head.weight[3].zero_()
            output = nets.fusion_forward(fusion, torch.zeros(1, 32, 16, 16),
                                         field, texture)
        np.testing.assert_allclose(output.numpy(), texture.numpy(),
                                   atol=1e-5)


def sampled_parameters(module, rng, n=4):
    """A few flat indices of three parameter tensors spread over a module.
    """
    parameters = list(module.parameters())
    tensors = [parameters[0], parameters[len(parameters) // 2],
               parameters[-1]]
    indices = [rng.choice(p.numel(), size=min(n, p.numel()),
                          replace=False).tolist() for p in tensors]
    return tensors, indices


class TestGradients(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(7)
        torch.manual_seed(7)
        self.config = tiny_config()
        self.networks = nets.build_networks(self.config, seed=0)
        self.generator = self.networks.generator.double()
        self.discriminators = self.networks.discriminators.double()
        self.images = torch.rand(2, 3, 16, 16, dtype=torch.float64)

    def weighted(self, *shape):
        return torch.from_numpy(self.rng.standard_normal(shape))

    def assert_consistent(self, function, inputs, indices=None):
        _, relative = compare_numeric_to_analytic_gradient(
            function, inputs, delta_eps=1e-5, indices=indices)
        self.assertLess(relative, 1e-4)

    def test_pose_net(self):
        pose_net = self.generator.pose_net
        w_coords, w_mask = self.weighted(2, 16, 16, 2), self.weighted(2, 16, 16)

        def function():
            coords, mask_logits = pose_net(self.images)
            return (w_coords * coords).sum() + (w_mask * mask_logits).sum()

        self.assert_consistent(function,
                               *sampled_parameters(pose_net, self.rng))

    def test_texture_net(self):
        texture_net = self.generator.texture_net
        spectrum = torch.tensor([1., 0.], dtype=torch.float64)
        w_rep = self.weighted(2, self.config.rep_dim)
        w_features = self.weighted(2, 32, 16, 16)
        w_colour = self.weighted(2, 3, 16, 16)

        def function():
            rep, features, colour = texture_net(self.images, spectrum)
            return (w_rep * rep).sum() + (w_features * features).sum() \
                + (w_colour * colour).sum()

        self.assert_consistent(function,
                               *sampled_parameters(texture_net, self.rng))

    def test_fusion(self):
        fusion_net = self.generator.fusion_net
        features = torch.rand(2, 32, 16, 16, dtype=torch.float64)
        colour = torch.rand(2, 3, 16, 16, dtype=torch.float64)
        coords = .1 + .8 * torch.rand(2, 16, 16, 2, dtype=torch.float64)
        valid = torch.from_numpy(self.rng.uniform(size=(2, 16, 16)) < .7)
        w_out = self.weighted(2, 3, 16, 16)

        def function():
            return (w_out * nets.fusion_forward(
                fusion_net, features, UVField(coords, valid), colour)).sum()

        tensors, indices = sampled_parameters(fusion_net, self.rng)
        tensors += [features, colour, coords]
        indices += [self.rng.choice(t.numel(), size=6,
                                    replace=False).tolist()
                    for t in (features, colour, coords)]
        self.assert_consistent(function, tensors, indices)

    def test_pair_discriminator(self):
        pair = self.discriminators.pair
        candidate = torch.randn(3, self.config.rep_dim, dtype=torch.float64)
        anchor = torch.randn(3, self.config.rep_dim, dtype=torch.float64)
        w_out = self.weighted(3)

        def function():
            return (w_out * pair(candidate, anchor)).sum()

        self.assert_consistent(function, [candidate, anchor])
        self.assert_consistent(function, *sampled_parameters(pair, self.rng))

    def test_band_discriminators(self):
        low, high = self.discriminators.low, self.discriminators.high
        low_band = torch.rand(2, 3, 8, 8, dtype=torch.float64)
        high_bands = torch.randn(2, 9, 8, 8, dtype=torch.float64)
        w_low, w_high = self.weighted(2), self.weighted(2)

        def function():
            return (w_low * low(low_band)).sum() \
                + (w_high * high(high_bands)).sum()

        self.assert_consistent(function, [low_band, high_bands])
        for discriminator in (low, high):
            self.assert_consistent(
                function, *sampled_parameters(discriminator, self.rng))

        image = self.images.clone().requires_grad_(True)

        def through_wavelet():
            band_low, band_high = wavelet.split_bands(
                wavelet.haar_decompose(image))
            return (w_low * low(band_low)).sum() \
                + (w_high * high(band_high)).sum()

        self.assert_consistent(through_wavelet, [image])
        gradient, = torch.autograd.grad(through_wavelet(), [image])
        self.assertGreater(gradient.abs().sum().item(), 0)

    def test_generator_reaches_every_sub_network(self):
        with torch.no_grad():
            # every pixel valid
            self.generator.pose_net.head.bias[2] = 10.
        result = self.generator(self.images)
        (self.weighted(2, 3, 16, 16) * result.output_image).sum().backward()
        for name in ('pose_net', 'texture_net', 'fusion_net'):
            module = getattr(self.generator, name)
            norm = sum(p.grad.abs().sum().item() for p in module.parameters()
                       if p.grad is not None)
            self.assertGreater(norm, 0, name)


class TestCheckpoint(unittest.TestCase):
    def test_roundtrip(self):
        config = tiny_config()
        networks = nets.build_networks(config, seed=3)
        images = torch.rand(2, 3, 16, 16)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'model.pt')
            nets.save_checkpoint(path, networks, config, {'step': 7})
            checkpoint = nets.load_checkpoint(path)

        self.assertEqual(checkpoint.config, config)
        self.assertEqual(checkpoint.training_state, {'step': 7})
        with torch.no_grad():
            before = networks.generator(images).output_image
            after = checkpoint.networks.generator(images).output_image
            np.testing.assert_array_equal(before.numpy(), after.numpy())
            np.testing.assert_array_equal(
                nets.embed(networks.embedder, images).numpy(),
                nets.embed(checkpoint.networks.embedder, images).numpy())

    def test_seeded_initialization(self):
        config = tiny_config()
        first = nets.build_networks(config, seed=1).generator.state_dict()
        second = nets.build_networks(config, seed=1).generator.state_dict()
        third = nets.build_networks(config, seed=2).generator.state_dict()
        for key in first:
            np.testing.assert_array_equal(first[key].numpy(),
                                          second[key].numpy())
        self.assertTrue(any(not torch.equal(first[key], third[key])
                            for key in first))

    def test_rejections(self):
        config = tiny_config()
        networks = nets.build_networks(config, seed=0)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'other.pt')
            torch.save({'format': 'something else'}, path)
            with self.assertRaises(ValueError):
                nets.load_checkpoint(path)

            path = os.path.join(directory, 'tampered.pt')
            nets.save_checkpoint(path, networks, config)
            data = torch.load(path, weights_only=False)
            data['config_hash'] = '0' * 64
            torch.save(data, path)
            with self.assertRaises(ValueError):
                nets.load_checkpoint(path)

            path = os.path.join(directory, 'arch.pt')
            nets.save_checkpoint(path, networks, config)
            data = torch.load(path, weights_only=False)
            data['architecture'] = dict(data['architecture'], rep_dim=16)
            torch.save(data, path)
            with self.assertRaises(ValueError):
                nets.load_checkpoint(path)


if __name__ == '__main__':
    unittest.main()
