""" Utility functions for the unit tests. """

from typing import Callable

import numpy as np

from cfc.config import RunConfig
from cfc.uvgeom import UVField


def tiny_config(**overrides) -> RunConfig:
    """A configuration small enough to train for a few steps in seconds. """
    values = dict(
        image_size=16, texture_size=16, n_identities=4, n_train_identities=2,
        nir_per_identity=2, vis_per_identity=2, max_occluders=1,
        rep_dim=8, feature_channels=32, pose_width=4, pose_depth=2,
        texture_width=4, texture_depth=2, fusion_width=8, fusion_layers=2,
        disc_width=4, disc_depth=2, pair_hidden=8, embed_dim=8,
        embed_width=4, batch_identities=2, max_steps=10, eval_interval=5,
        patience=2, embedder_identities=4, embedder_samples=2,
        embedder_steps=5, seed=0)
    values.update(overrides)
    return RunConfig(values)


def random_uv_field(rng: np.random.Generator, height: int, width: int,
                    p_valid: float = .8) -> UVField:
    return UVField(coords=rng.uniform(size=(height, width, 2)),
                   valid=rng.uniform(size=(height, width)) < p_valid)


def calculate_jacobian(
        func: Callable[[np.ndarray], np.ndarray],
        x0: np.ndarray,
        delta_x: float):
    x_shape = x0.shape
    num_par = x0.size
    y0 = np.ravel(func(x0))
    num_func = y0.size

    y = np.empty((num_par, num_func, 3), np.float64)

    for i in range(num_par):
        dif_x = np.zeros_like(x0, dtype=np.float64).flatten()
        dif_x[i] = delta_x
        dif_x = dif_x.reshape(x_shape)
        y[i, :, 1] = y0
        y[i, :, 0] = np.ravel(func(x0 - dif_x))
        y[i, :, 2] = np.ravel(func(x0 + dif_x))

    jacobian = np.gradient(y, delta_x, axis=2)
    return jacobian[:, :, 1]
