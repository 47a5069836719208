# -*- coding: utf-8 -*-
# =============================================================================
#     cfc
#     Copyright (C) 2026 The cfc developers
#
#     This program is free software: you can redistribute it and/or modify
#     it under the terms of the GNU General Public License as published by
#     the Free Software Foundation, either version 3 of the License, or
#     (at your option) any later version.
#
#     This program is distributed in the hope that it will be useful,
#     but WITHOUT ANY WARRANTY; without even the implied warranty of
#     MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
#     GNU General Public License for more details.
#
#     You should have received a copy of the GNU General Public License
#     along with this program. If not, see <http://www.gnu.org/licenses/>.
# =============================================================================
"""Loss functions of the generator and the discriminators.

Every loss is a scalar torch function of tensors and differentiable in
them. Expectations are batch means. Probabilities entering a logarithm are
clamped to ``[EPSILON, 1 - EPSILON]``.

Classes
-------
:class:`LossBundle`
    The values of all terms of one training step.

:class:`DisjointMasks`
    Raised when two UV fields share no valid pixel.

Functions
---------
:func:`uv_loss`
    Mean absolute difference of UV coordinates.

:func:`mask_loss`
    Binary cross entropy of the facial mask head.

:func:`gt_adversarial_loss`
    Generator loss against the representation pair discriminator.

:func:`dt_loss`
    Loss of the representation pair discriminator.

:func:`gf_adversarial_loss`
    Generator loss against the wavelet band discriminators.

:func:`df_loss`
    Loss of the wavelet band discriminators.

:func:`perceptual_loss`
    Squared distance of identity embeddings.

:func:`pixel_loss`
    Weighted mean absolute pixel difference.

:func:`total_generator_loss`
    Sum of the generator terms.

"""

from typing import Callable, Dict, NamedTuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from cfc.uvgeom import UVField

EPSILON = 1e-7

LOSS_NAMES = ('uv', 'g_t', 'd_t', 'g_f', 'd_f', 'perceptual', 'pixel',
              'total_g')


class DisjointMasks(ValueError):
    """Raised when the valid masks of two UV fields do not overlap. """
    pass


class LossBundle(NamedTuple):
    """Loss values of one training step.

    ``total_g`` is the sum of ``uv``, ``g_t``, ``g_f``, ``perceptual`` and
    ``pixel``. The weights of the high frequency term and of the pixel term
    are already applied inside ``g_f`` and ``pixel``.

    """
    uv: float
    g_t: float
    d_t: float
    g_f: float
    d_f: float
    perceptual: float
    pixel: float
    total_g: float
    lambda_high: float = 10.
    alpha_pixel: float = .01

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in LOSS_NAMES}

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(list(self.to_dict().values()))))


def _as_tensor(value) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.as_tensor(np.asarray(value))


def _log_probability(probability: torch.Tensor) -> torch.Tensor:
    return torch.log(_as_tensor(probability).clamp(EPSILON, 1 - EPSILON))


def _log_complement(probability: torch.Tensor) -> torch.Tensor:
    return torch.log(1 - _as_tensor(probability).clamp(EPSILON, 1 - EPSILON))


def uv_loss(predicted: UVField, target: UVField) -> torch.Tensor:
    """Mean absolute difference of the coordinates on jointly valid pixels.

    The mean runs over the pixels valid in both fields and over both
    coordinate channels.

    Parameters
    ----------
    predicted: UVField
        Coordinates of shape (..., H, W, 2).

    target: UVField
        Field of the same size.

    Returns
    -------
    loss: torch.Tensor
        Scalar.

    Raises
    ------
    ValueError
        For fields of different size.

    DisjointMasks
        If no pixel is valid in both fields.

    """
    predicted_coords = _as_tensor(predicted.coords)
    target_coords = _as_tensor(target.coords).to(predicted_coords.dtype)
    if predicted_coords.shape != target_coords.shape:
        raise ValueError('UV fields differ in shape: {} and {}.'.format(
            tuple(predicted_coords.shape), tuple(target_coords.shape)))
    joint = _as_tensor(predicted.valid).bool() & _as_tensor(target.valid).bool()
    n_joint = joint.sum()
    if n_joint == 0:
        raise DisjointMasks('The UV fields share no valid pixel.')
    difference = (predicted_coords - target_coords).abs() \
        * joint.unsqueeze(-1).to(predicted_coords.dtype)
    return difference.sum() / (2 * n_joint)


def mask_loss(mask_logits: torch.Tensor,
              target_valid: torch.Tensor) -> torch.Tensor:
    """Binary cross entropy of the facial mask logits. """
    target_valid = _as_tensor(target_valid).to(mask_logits.dtype)
    return F.binary_cross_entropy_with_logits(mask_logits, target_valid)


def gt_adversarial_loss(d_out: torch.Tensor) -> torch.Tensor:
    """Mean of -log(d_out) over the batch. """
    return -_log_probability(d_out).mean()


def dt_loss(d_fake: torch.Tensor, d_real: torch.Tensor) -> torch.Tensor:
    """Mean of -log(1 - d_fake) - log(d_real) over the batch. """
    return -_log_complement(d_fake).mean() - _log_probability(d_real).mean()


def gf_adversarial_loss(d_low: torch.Tensor, d_high: torch.Tensor,
                        lambda_high: float = 10.) -> torch.Tensor:
    """Mean of -log(d_low) - lambda_high log(d_high) over the batch. """
    return -_log_probability(d_low).mean() \
        - lambda_high * _log_probability(d_high).mean()


def df_loss(d_low_real: torch.Tensor, d_low_fake: torch.Tensor,
            d_high_real: torch.Tensor,
            d_high_fake: torch.Tensor) -> torch.Tensor:
    """Sum over both bands of the mean of -log(d_real) - log(1 - d_fake).
    """
    return dt_loss(d_low_fake, d_low_real) + dt_loss(d_high_fake, d_high_real)


def squared_distance(first: torch.Tensor,
                     second: torch.Tensor) -> torch.Tensor:
    """Batch mean of the squared Euclidean distance of flattened rows. """
    first = _as_tensor(first)
    second = _as_tensor(second)
    if first.dim() == 1:
        first, second = first[None], second[None]
    difference = first.flatten(1) - second.flatten(1)
    return (difference ** 2).sum(dim=1).mean()


def perceptual_loss(embedder: Callable[[torch.Tensor], torch.Tensor],
                    x: torch.Tensor, fx: torch.Tensor) -> torch.Tensor:
    """Squared distance between the identity embeddings of x and fx.

    Parameters
    ----------
    embedder: Callable
        Frozen recognizer mapping a batch of images to features.

    x, fx: torch.Tensor
        Image batches of shape (B, 3, H, W).

    """
    return squared_distance(embedder(x), embedder(fx))


def pixel_loss(x: torch.Tensor, fx: torch.Tensor,
               alpha: float = .01) -> torch.Tensor:
    """alpha times the mean absolute difference of two images.

    Raises
    ------
    ValueError
        For images of different shape.

    """
    x, fx = _as_tensor(x), _as_tensor(fx)
    if x.shape != fx.shape:
        raise ValueError('Images differ in shape: {} and {}.'.format(
            tuple(x.shape), tuple(fx.shape)))
    return alpha * (x - fx).abs().mean()


def total_generator_loss(uv: Union[float, torch.Tensor],
                         g_t: Union[float, torch.Tensor],
                         g_f: Union[float, torch.Tensor],
                         perceptual: Union[float, torch.Tensor],
                         pixel: Union[float, torch.Tensor]):
    """Unweighted sum of the five generator terms. """
    return uv + g_t + g_f + perceptual + pixel
