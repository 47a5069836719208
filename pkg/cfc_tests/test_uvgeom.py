"""
Tests of the UV geometry:

- cylindrical unwrapping conventions
- z-buffered rendering of UV fields, symmetry and culling
- mean fields
- the differentiable warp and its gradients
"""

import unittest

import numpy as np
import torch

from cfc import uvgeom
from cfc.gradients import compare_numeric_to_analytic_gradient
from cfc.uvgeom import UVField
from cfc_tests.testutil import random_uv_field

shape_params = np.array([.57, .62, .82, .09, .18, .025, .02, .02])


class TestCylindricalUnwrap(unittest.TestCase):
    def test_frontal_center(self):
        np.testing.assert_allclose(
            uvgeom.cylindrical_unwrap(np.array([0., 0., .6]), .8), [.5, .5])

    def test_mirror_symmetry(self):
        left = uvgeom.cylindrical_unwrap(np.array([-.3, .2, .5]), .8)
        right = uvgeom.cylindrical_unwrap(np.array([.3, .2, .5]), .8)
        self.assertAlmostEqual(left[0] + right[0], 1., places=12)
        self.assertEqual(left[1], right[1])

    def test_closed_form(self):
        rng = np.random.default_rng(0)
        theta = rng.uniform(-np.pi, np.pi, 10)
        psi = rng.uniform(-1.4, 1.4, 10)
        radius = uvgeom.surface_radius(shape_params, theta, psi)
        vertices = np.stack([radius * np.sin(theta),
                             shape_params[2] * np.sin(psi),
                             radius * np.cos(theta)], axis=-1)
        uv = uvgeom.cylindrical_unwrap(vertices, shape_params[2])
        for (u, v), vertex in zip(uv, vertices):
            self.assertAlmostEqual(
                u, .5 + np.arctan2(vertex[0], vertex[2]) / (2 * np.pi),
                delta=1e-12)
            self.assertAlmostEqual(v, .5 - vertex[1] / (2 * shape_params[2]),
                                   delta=1e-12)

    def test_axis_rejected(self):
        with self.assertRaises(uvgeom.UndefinedAzimuth):
            uvgeom.cylindrical_unwrap(np.array([0., .3, 0.]), .8)


class TestRenderUVField(unittest.TestCase):
    def test_frontal_symmetry(self):
        field = uvgeom.render_uv_field(shape_params, (0., 0.), (64, 64))
        asymmetric = np.sum(field.valid ^ field.valid[:, ::-1])
        self.assertGreater(field.valid.sum(), 0)
        self.assertLessEqual(asymmetric, .02 * field.valid.sum())

    def test_far_cheek_culled(self):
        frontal = uvgeom.render_uv_field(shape_params, (0., 0.), (64, 64))
        turned = uvgeom.render_uv_field(shape_params, (45., 0.), (64, 64))
        self.assertGreater(frontal.coords[frontal.valid, 0].max(),
                           .5 + 66 / 360)
        self.assertLess(turned.coords[turned.valid, 0].max(), .5 + 62 / 360)
        self.assertLess(turned.coords[turned.valid, 0].min(), .5 - 60 / 360)

    def test_coordinate_range(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            pose = (rng.uniform(-60, 60), rng.uniform(-30, 30))
            field = uvgeom.render_uv_field(shape_params, pose, (32, 32))
            self.assertTrue(np.all(field.coords >= 0))
            self.assertTrue(np.all(field.coords <= 1))
            self.assertTrue(np.all(field.coords[~field.valid] == 0))
            self.assertGreater(field.valid.sum(), 0)

    def test_z_buffer_keeps_nearest_sample(self):
        raster = uvgeom.rasterize_surface(shape_params, (20., 10.), (16, 16))
        pixel, depth, winner = raster['pixel'], raster['depth'], \
            raster['winner']
        for p in range(16 * 16):
            candidates = np.flatnonzero(pixel == p)
            if len(candidates) == 0:
                self.assertEqual(winner[p], -1)
            else:
                self.assertEqual(depth[winner[p]], depth[candidates].min())

    def test_degenerate_shape_rejected(self):
        flat = shape_params.copy()
        flat[1] = 0.
        with self.assertRaises(uvgeom.DegenerateShape):
            uvgeom.render_uv_field(flat, (0., 0.), (16, 16))


class TestMeanUVField(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(2)

    def test_single_and_identical(self):
        field = random_uv_field(self.rng, 6, 5)
        for fields in ([field], [field, field]):
            mean = uvgeom.mean_uv_field(fields)
            np.testing.assert_array_equal(mean.valid, field.valid)
            np.testing.assert_allclose(mean.coords[field.valid],
                                       field.coords[field.valid], atol=1e-15)

    def test_offset(self):
        field = random_uv_field(self.rng, 6, 5, p_valid=1.)
        field = UVField(field.coords * .8, field.valid)
        shifted = UVField(field.coords + np.array([.1, 0.]), field.valid)
        mean = uvgeom.mean_uv_field([field, shifted])
        np.testing.assert_allclose(mean.coords - field.coords,
                                   np.broadcast_to([.05, 0.], (6, 5, 2)),
                                   atol=1e-12)

    def test_majority_vote(self):
        fields = [random_uv_field(self.rng, 8, 8) for _ in range(3)]
        votes = sum(field.valid.astype(int) for field in fields)
        np.testing.assert_array_equal(uvgeom.mean_uv_field(fields).valid,
                                      votes >= 2)

    def test_permutation_invariance(self):
        fields = [random_uv_field(self.rng, 8, 8) for _ in range(4)]
        first = uvgeom.mean_uv_field(fields)
        second = uvgeom.mean_uv_field(fields[::-1])
        np.testing.assert_array_equal(first.valid, second.valid)
        np.testing.assert_allclose(first.coords, second.coords, atol=1e-14)

    def test_rejects_empty_and_mismatched(self):
        with self.assertRaises(ValueError):
            uvgeom.mean_uv_field([])
        with self.assertRaises(ValueError):
            uvgeom.mean_uv_field([random_uv_field(self.rng, 4, 4),
                                  random_uv_field(self.rng, 4, 5)])


class TestWarp(unittest.TestCase):
    def test_identity_field(self):
        texture = np.random.default_rng(3).uniform(size=(12, 10, 3))
        image, valid = uvgeom.warp(texture, uvgeom.identity_uv_field((12, 10)))
        self.assertTrue(valid.all())
        np.testing.assert_allclose(image, texture, atol=1e-12)

    def test_constant_texture(self):
        rng = np.random.default_rng(4)
        field = random_uv_field(rng, 7, 9)
        image, valid = uvgeom.warp(np.full((5, 6, 3), .3), field)
        np.testing.assert_allclose(image[valid], .3, atol=1e-12)
        self.assertTrue(np.all(image[~valid] == 0))

    def test_bilinear_midpoint(self):
        texture = np.array([0., 1., 2., 3.]).reshape(1, 4, 1)
        field = UVField(coords=np.array([[[.5, 0.]]]),
                        valid=np.ones((1, 1), dtype=bool))
        image, _ = uvgeom.warp(texture, field)
        self.assertAlmostEqual(image[0, 0, 0], 1.5, places=12)

    def test_clamped_coordinates(self):
        texture = np.array([0., 1., 2., 3.]).reshape(1, 4, 1)
        field = UVField(coords=np.array([[[1.5, 0.], [-.5, 0.]]]),
                        valid=np.ones((1, 2), dtype=bool))
        image, _ = uvgeom.warp(texture, field)
        np.testing.assert_allclose(image[0, :, 0], [3., 0.])

    def test_tensor_shapes(self):
        texture = torch.rand(2, 32, 8, 8)
        field = UVField(coords=torch.rand(2, 16, 12, 2),
                        valid=torch.rand(2, 16, 12) > .5)
        image, valid = uvgeom.warp(texture, field)
        self.assertEqual(tuple(image.shape), (2, 32, 16, 12))
        self.assertEqual(tuple(valid.shape), (2, 1, 16, 12))

    def test_gradient(self):
        rng = np.random.default_rng(5)
        texture_size = 5
        for _ in range(50):
            texture = torch.from_numpy(rng.standard_normal(
                (1, 2, texture_size, texture_size)))
            # keep samples away from texel boundaries
            texels = rng.integers(0, texture_size - 1, size=(1, 3, 4, 2)) \
                + rng.uniform(.1, .9, size=(1, 3, 4, 2))
            coords = torch.from_numpy(texels / (texture_size - 1))
            valid = torch.from_numpy(rng.uniform(size=(1, 3, 4)) < .8)
            weights = torch.from_numpy(rng.standard_normal((1, 2, 3, 4)))

            def function():
                image, _ = uvgeom.warp(texture, UVField(coords, valid))
                return (weights * image).sum()

            _, relative = compare_numeric_to_analytic_gradient(
                function, [texture, coords])
            self.assertLess(relative, 1e-3)


if __name__ == '__main__':
    unittest.main()
