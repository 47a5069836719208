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
"""One-level two dimensional Haar wavelet transform.

The transform acts on the two trailing axes of a tensor of shape
(..., C, H, W). Each 2x2 block ``[[a, b], [c, d]]`` maps to one coefficient
per band with the orthonormal normalization

    ll = (a + b + c + d) / 2
    lh = (a - b + c - d) / 2
    hl = (a + b - c - d) / 2
    hh = (a - b - c + d) / 2

so that the squared norm is conserved. Gradients pass through, the bands
feed the discriminators of the low and the high frequencies.

Classes
-------
:class:`WaveletPyramid`
    The four bands of a decomposition.

Functions
---------
:func:`haar_decompose`
    Forward transform.

:func:`haar_reconstruct`
    Inverse transform.

:func:`split_bands`
    Low band and channel-concatenated high bands.

:func:`merge_bands`
    Inverse of :func:`split_bands`.

"""

from typing import NamedTuple, Tuple

import torch


class WaveletPyramid(NamedTuple):
    """Bands of a one-level Haar decomposition, each of shape
    (..., C, H/2, W/2). """
    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor


def haar_decompose(x: torch.Tensor) -> WaveletPyramid:
    """Decomposes x into its Haar bands.

    Parameters
    ----------
    x: torch.Tensor, shape (..., C, H, W)
        Input with even H and W.

    Returns
    -------
    pyramid: WaveletPyramid

    Raises
    ------
    ValueError
        If H or W is odd or x has less than two dimensions.

    """
    if x.dim() < 2:
        raise ValueError('Expected at least two dimensions, got shape '
                         '{}.'.format(tuple(x.shape)))
    height, width = x.shape[-2:]
    if height % 2 or width % 2:
        raise ValueError('The Haar transform requires even sizes, got '
                         '{}x{}. Pad the input first.'.format(height, width))
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return WaveletPyramid(ll=(a + b + c + d) / 2, lh=(a - b + c - d) / 2,
                          hl=(a + b - c - d) / 2, hh=(a - b - c + d) / 2)


def haar_reconstruct(pyramid: WaveletPyramid) -> torch.Tensor:
    """Exact inverse of :func:`haar_decompose`.

    Raises
    ------
    ValueError
        If the bands differ in shape.

    """
    shapes = {tuple(band.shape) for band in pyramid}
    if len(shapes) != 1:
        raise ValueError('All bands must have the same shape, got '
                         '{}.'.format(sorted(shapes)))
    ll, lh, hl, hh = pyramid
    a = (ll + lh + hl + hh) / 2
    b = (ll - lh + hl - hh) / 2
    c = (ll + lh - hl - hh) / 2
    d = (ll - lh - hl + hh) / 2
    # interleave columns, then rows
    top = torch.stack([a, b], dim=-1).flatten(-2)
    bottom = torch.stack([c, d], dim=-1).flatten(-2)
    return torch.stack([top, bottom], dim=-2).flatten(-3, -2)


def split_bands(pyramid: WaveletPyramid) -> Tuple[torch.Tensor, torch.Tensor]:
    """Returns the low band and the high bands concatenated along channels.

    For C input channels the high tensor has 3C channels ordered
    (lh, hl, hh).

    """
    return pyramid.ll, torch.cat([pyramid.lh, pyramid.hl, pyramid.hh],
                                 dim=-3)


def merge_bands(low: torch.Tensor, high: torch.Tensor) -> WaveletPyramid:
    """Rebuilds the pyramid from the output of :func:`split_bands`. """
    if high.shape[-3] != 3 * low.shape[-3]:
        raise ValueError('The high bands need three times the channels of the'
                         ' low band, got {} and {}.'.format(high.shape[-3],
                                                            low.shape[-3]))
    lh, hl, hh = torch.chunk(high, 3, dim=-3)
    return WaveletPyramid(ll=low, lh=lh, hl=hl, hh=hh)
