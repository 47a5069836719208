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
"""
Utility functions for the cross-spectral face completion package.

Functions
---------
:func:`git_blob_hash`
    Content hash of a text in the format used by git for blobs.

:func:`parameter_hash`
    Digest of all tensors of a torch module, used to verify frozen weights.

:func:`configure_threads`
    Applies the ``CFC_THREADS`` cap to torch.

:func:`images_to_tensor`
    Converts a stack of (H, W, C) numpy images to a (B, C, H, W) tensor.

:func:`tensor_to_images`
    Inverse of :func:`images_to_tensor`.

"""

import hashlib
import os
from typing import Optional, Sequence, Union

import numpy as np
import torch


def git_blob_hash(text: Union[str, bytes]) -> str:
    """SHA-1 of ``"blob <len>\\0" + text``, identical to ``git hash-object``.

    Parameters
    ----------
    text: str or bytes
        The content. Strings are encoded as UTF-8.

    Returns
    -------
    digest: str
        40 character hexadecimal digest.

    """
    if isinstance(text, str):
        text = text.encode('utf-8')
    header = 'blob {}\0'.format(len(text)).encode('ascii')
    return hashlib.sha1(header + text).hexdigest()


def parameter_hash(module: torch.nn.Module) -> str:
    """Digest over the names and raw bytes of every tensor in the state dict.

    Two modules have the same hash exactly if their states are bitwise equal.

    """
    sha = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        sha.update(name.encode('utf-8'))
        sha.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return sha.hexdigest()


def thread_cap() -> Optional[int]:
    """The value of ``CFC_THREADS`` or None if unset or not a positive int."""
    value = os.environ.get('CFC_THREADS')
    if value is None:
        return None
    try:
        n = int(value)
    except ValueError:
        return None
    return n if n > 0 else None


def configure_threads() -> None:
    """Caps torch's intra-op parallelism at ``CFC_THREADS`` if it is set."""
    cap = thread_cap()
    if cap is not None:
        torch.set_num_threads(cap)


def images_to_tensor(images: Union[np.ndarray, Sequence[np.ndarray]],
                     dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Stacks (H, W, C) images into a (B, C, H, W) tensor.

    A single (H, W, C) array yields a batch of one.

    """
    array = np.asarray(images)
    if array.ndim == 3:
        array = array[None]
    if array.ndim != 4:
        raise ValueError('Expected images of shape (H, W, C) or (B, H, W, C),'
                         ' got shape {}.'.format(array.shape))
    return torch.from_numpy(
        np.ascontiguousarray(array.transpose(0, 3, 1, 2))).to(dtype)


def tensor_to_images(tensor: torch.Tensor) -> np.ndarray:
    """(B, C, H, W) tensor to a float numpy array of shape (B, H, W, C)."""
    return tensor.detach().cpu().numpy().transpose(0, 2, 3, 1)
