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
"""UV correspondence fields.

A UV field binds every pixel of a face image to a coordinate (u, v) in the
flattened facial texture atlas. Fields map image pixels to texture
coordinates (backward warping), so a texture is brought into the image by
sampling it at the field's coordinates.

The face surface is a parametric head: an ellipsoid with half axes
(a, b, c) along (x, z, y) whose radius around the vertical axis is modulated
by Gaussian bumps for nose, cheeks, chin and brows. Surface points are
addressed by azimuth ``theta`` (0 at the face front, positive towards +x)
and polar angle ``psi`` (height ``y = c sin psi``).

Head frame and camera: x to the right of the image, y up, z towards the
camera. The camera is orthographic, looks along -z and images the square
``[-1, 1]^2``. Depth is ``-z``; smaller depth is nearer.

Classes
-------
:class:`UVField`
    Per-pixel texture coordinates with a validity mask.

:class:`UndefinedAzimuth`
    Raised for vertices on the cylinder axis.

:class:`DegenerateShape`
    Raised for shapes without volume.

Functions
---------
:func:`cylindrical_unwrap`
    Maps surface vertices to (u, v).

:func:`surface_radius`
    Radius of the head surface around the vertical axis.

:func:`sample_surface`
    Dense samples of the head surface in the head frame.

:func:`pose_rotation`
    Rotation matrix of a (yaw, pitch) pose.

:func:`rasterize_surface`
    Projects and z-buffers surface samples into pixels.

:func:`render_uv_field`
    The UV field of a shape under a pose.

:func:`identity_uv_field`
    Field sampling the texture at the normalized pixel coordinates.

:func:`mean_uv_field`
    Per-pixel mean of several fields.

:func:`warp`
    Differentiable bilinear warp of a texture through a field.

"""

from typing import NamedTuple, Sequence, Tuple, Union

import numpy as np
import scipy.ndimage
import torch
import torch.nn.functional as F
from scipy.spatial.transform import Rotation

# index layout of the shape parameter vector
SHAPE_PARAMETER_NAMES = ('half_width', 'half_depth', 'half_height',
                         'nose_amplitude', 'nose_width', 'cheek_amplitude',
                         'chin_amplitude', 'brow_amplitude')

# facial region of the atlas, u and v bounds
FACE_U_RANGE = (.5 - 80. / 360., .5 + 80. / 360.)
FACE_V_RANGE = (.1, .95)

# the camera images [-VIEW_EXTENT, VIEW_EXTENT]^2
VIEW_EXTENT = 1.

# upper bound of the projected sample spacing in pixels
_SAMPLE_SPACING = .35


class UndefinedAzimuth(ValueError):
    """Raised when the azimuth of a vertex on the cylinder axis is needed. """
    pass


class DegenerateShape(ValueError):
    """Raised for head shapes with a vanishing half axis. """
    pass


class UVField(NamedTuple):
    """Dense UV correspondence field.

    Attributes
    ----------
    coords: array, shape (..., H, W, 2)
        Texture coordinates (u, v) in [0, 1] at valid pixels and 0 elsewhere.
        Either a numpy array or a torch tensor.

    valid: array, shape (..., H, W)
        Boolean mask of facial pixels with a defined coordinate.

    """
    coords: Union[np.ndarray, torch.Tensor]
    valid: Union[np.ndarray, torch.Tensor]

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.valid.shape[-2:])


def _check_shape(shape_params: np.ndarray) -> np.ndarray:
    shape_params = np.asarray(shape_params, dtype=np.float64)
    if shape_params.shape != (len(SHAPE_PARAMETER_NAMES),):
        raise ValueError('Expected {} shape parameters, got shape {}.'.format(
            len(SHAPE_PARAMETER_NAMES), shape_params.shape))
    if not np.all(np.isfinite(shape_params)):
        raise DegenerateShape('Shape parameters must be finite.')
    if np.any(shape_params[:3] <= 1e-6) or shape_params[4] <= 1e-6:
        raise DegenerateShape(
            'The half axes and the nose width must be positive, got '
            '{}.'.format(shape_params[[0, 1, 2, 4]]))
    return shape_params


def cylindrical_unwrap(vertex: np.ndarray,
                       half_height: float) -> np.ndarray:
    """Maps vertices of the head surface to texture coordinates.

    ``u = 0.5 + atan2(x, z) / (2 pi)`` is the normalized azimuth, so the face
    front lies at u = 0.5 and the seam at the back of the head. ``v = 0.5 -
    y / (2 half_height)`` is the normalized height, growing downwards like
    image rows.

    Parameters
    ----------
    vertex: array, shape (..., 3)
        Points (x, y, z) in the head frame.

    half_height: float
        Half axis of the head along y.

    Returns
    -------
    uv: array, shape (..., 2)
        Coordinates in [0, 1]^2.

    Raises
    ------
    UndefinedAzimuth
        If a vertex lies on the vertical axis.

    """
    vertex = np.asarray(vertex, dtype=np.float64)
    x, y, z = vertex[..., 0], vertex[..., 1], vertex[..., 2]
    on_axis = x ** 2 + z ** 2 < 1e-24
    if np.any(on_axis):
        raise UndefinedAzimuth(
            'The azimuth of a vertex on the cylinder axis is undefined.')
    u = .5 + np.arctan2(x, z) / (2 * np.pi)
    v = .5 - y / (2 * half_height)
    return np.clip(np.stack([u, v], axis=-1), 0., 1.)


def _bump(theta, psi, theta_0, psi_0, width_theta, width_psi):
    return np.exp(-.5 * ((theta - theta_0) / width_theta) ** 2
                  - .5 * ((psi - psi_0) / width_psi) ** 2)


def surface_radius(shape_params: np.ndarray, theta: np.ndarray,
                   psi: np.ndarray) -> np.ndarray:
    """Distance of the surface from the vertical axis.

    Parameters
    ----------
    shape_params: array, shape (8,)
        See ``SHAPE_PARAMETER_NAMES``.

    theta: array
        Azimuth in radians, 0 at the face front.

    psi: array
        Polar angle in radians, ``y = half_height * sin(psi)``.

    Returns
    -------
    radius: array
        Broadcast shape of theta and psi.

    """
    a, b, _, nose, nose_w, cheek, chin, brow = _check_shape(shape_params)
    ellipse = a * b / np.sqrt((b * np.sin(theta)) ** 2
                              + (a * np.cos(theta)) ** 2)
    features = (
        nose * _bump(theta, psi, 0., -.05, nose_w, .22)
        + cheek * (_bump(theta, psi, .6, -.15, .35, .25)
                   + _bump(theta, psi, -.6, -.15, .35, .25))
        + chin * _bump(theta, psi, 0., -.8, .45, .18)
        + brow * (_bump(theta, psi, .3, .3, .25, .08)
                  + _bump(theta, psi, -.3, .3, .25, .08))
    )
    return np.cos(psi) * (ellipse + features)


def sample_surface(shape_params: np.ndarray, size: Tuple[int, int]) \
        -> Tuple[np.ndarray, np.ndarray]:
    """Samples the closed head surface densely enough for the image size.

    The sampling is a regular grid in (theta, psi) at cell centers, so no
    sample lies on the vertical axis.

    Returns
    -------
    points: array, shape (n, 3)
        Points in the head frame.

    uv: array, shape (n, 2)
        Their texture coordinates.

    """
    shape_params = _check_shape(shape_params)
    height, width = size
    pixel = 2 * VIEW_EXTENT / min(height, width)
    a, b, c = shape_params[:3]
    # the bumps stretch the surface, the factor 1.5 leaves room for them
    r_max = 1.5 * max(a, b) + np.sum(np.abs(shape_params[[3, 5, 6, 7]]))
    n_theta = int(np.ceil(2 * np.pi * r_max / (_SAMPLE_SPACING * pixel)))
    n_psi = int(np.ceil(np.pi * 1.5 * max(c, r_max)
                        / (_SAMPLE_SPACING * pixel)))
    theta = -np.pi + (np.arange(n_theta) + .5) * (2 * np.pi / n_theta)
    psi = -np.pi / 2 + (np.arange(n_psi) + .5) * (np.pi / n_psi)
    theta, psi = np.meshgrid(theta, psi, indexing='xy')
    theta, psi = theta.ravel(), psi.ravel()
    radius = surface_radius(shape_params, theta, psi)
    points = np.stack([radius * np.sin(theta), c * np.sin(psi),
                       radius * np.cos(theta)], axis=-1)
    uv = np.stack([.5 + theta / (2 * np.pi), .5 - np.sin(psi) / 2], axis=-1)
    return points, uv


def pose_rotation(yaw: float, pitch: float) -> np.ndarray:
    """Rotation from the head frame to the camera frame.

    Positive yaw turns the face towards +x, positive pitch tilts it
    downwards. The yaw is applied first.

    """
    return Rotation.from_euler('yx', [yaw, pitch], degrees=True).as_matrix()


def rasterize_surface(shape_params: np.ndarray, pose: Tuple[float, float],
                      size: Tuple[int, int]) -> dict:
    """Projects surface samples and keeps the nearest one per pixel.

    Parameters
    ----------
    shape_params: array, shape (8,)
        Head shape.

    pose: tuple of float
        (yaw, pitch) in degrees.

    size: tuple of int
        (H, W) of the image.

    Returns
    -------
    raster: dict
        'pixel': flat pixel index of every sample (-1 outside the image),
        'depth': depth of every sample, 'uv': coordinates of every sample,
        'winner': index of the nearest sample per pixel (-1 if none),
        'points': samples in the camera frame.

    """
    height, width = size
    points, uv = sample_surface(shape_params, size)
    camera_points = points @ pose_rotation(*pose).T
    column = np.floor((camera_points[:, 0] + VIEW_EXTENT)
                      / (2 * VIEW_EXTENT) * width).astype(np.int64)
    row = np.floor((VIEW_EXTENT - camera_points[:, 1])
                   / (2 * VIEW_EXTENT) * height).astype(np.int64)
    inside = (column >= 0) & (column < width) & (row >= 0) & (row < height)
    pixel = np.where(inside, row * width + column, -1)
    depth = -camera_points[:, 2]

    # z-buffer: sort by pixel, then by depth, keep the first per pixel
    candidates = np.flatnonzero(inside)
    order = candidates[np.lexsort((depth[candidates], pixel[candidates]))]
    first_pixels, first = np.unique(pixel[order], return_index=True)
    winner = -np.ones(height * width, dtype=np.int64)
    winner[first_pixels] = order[first]
    return {'pixel': pixel, 'depth': depth, 'uv': uv, 'winner': winner,
            'points': camera_points}


def _in_face(uv: np.ndarray) -> np.ndarray:
    return ((uv[..., 0] >= FACE_U_RANGE[0]) & (uv[..., 0] <= FACE_U_RANGE[1])
            & (uv[..., 1] >= FACE_V_RANGE[0])
            & (uv[..., 1] <= FACE_V_RANGE[1]))


def render_uv_field(shape_params: np.ndarray, pose: Tuple[float, float],
                    size: Tuple[int, int]) -> UVField:
    """Renders the UV field of a head under a pose.

    Every pixel records the (u, v) of the nearest surface sample projecting
    into it. Pixels whose nearest sample lies outside the facial region of
    the atlas, e.g. on the back of the head, are invalid. Interior pixels
    that no sample hit are filled from their nearest valid neighbour, and
    only the largest connected facial region is kept.

    Parameters
    ----------
    shape_params: array, shape (8,)
        Head shape.

    pose: tuple of float
        (yaw, pitch) in degrees.

    size: tuple of int
        (H, W).

    Returns
    -------
    field: UVField
        Numpy coords of shape (H, W, 2) and a boolean mask of shape (H, W).

    Raises
    ------
    DegenerateShape
        For shapes without volume.

    """
    height, width = size
    raster = rasterize_surface(shape_params, pose, size)
    winner = raster['winner']
    covered = winner >= 0
    coords = np.zeros((height * width, 2))
    coords[covered] = raster['uv'][winner[covered]]
    valid = covered & _in_face(coords)
    coords = coords.reshape(height, width, 2)
    valid = valid.reshape(height, width)

    labels, n_labels = scipy.ndimage.label(valid)
    if n_labels > 1:
        sizes = scipy.ndimage.sum(valid, labels, range(1, n_labels + 1))
        valid = labels == (1 + int(np.argmax(sizes)))

    holes = scipy.ndimage.binary_fill_holes(valid) & ~valid
    if np.any(holes):
        _, (rows, columns) = scipy.ndimage.distance_transform_edt(
            ~valid, return_indices=True)
        coords[holes] = coords[rows[holes], columns[holes]]
        valid = valid | holes
    coords[~valid] = 0.
    return UVField(coords=coords, valid=valid)


def identity_uv_field(size: Tuple[int, int]) -> UVField:
    """Field whose coordinates are the normalized pixel coordinates.

    With a texture of the image size, warping through it reproduces the
    texture.

    """
    height, width = size
    v, u = np.meshgrid(np.arange(height) / (height - 1),
                       np.arange(width) / (width - 1), indexing='ij')
    return UVField(coords=np.stack([u, v], axis=-1),
                   valid=np.ones((height, width), dtype=bool))


def mean_uv_field(fields: Sequence[UVField]) -> UVField:
    """Per-pixel mean of UV fields.

    The coordinates are averaged over the fields valid at the pixel. A pixel
    is valid if the strict majority of the fields is valid there. Pixels
    where no field is valid take the plain mean of all fields.

    Parameters
    ----------
    fields: list of UVField
        Numpy fields of equal size.

    Returns
    -------
    mean_field: UVField

    Raises
    ------
    ValueError
        For an empty list or fields of different size.

    """
    if len(fields) == 0:
        raise ValueError('The mean of an empty list of UV fields is '
                         'undefined.')
    if len({np.shape(field.valid) for field in fields}) != 1:
        raise ValueError('All UV fields must have the same size.')
    coords = np.stack([np.asarray(field.coords, dtype=np.float64)
                       for field in fields])
    valid = np.stack([np.asarray(field.valid, dtype=bool)
                      for field in fields])
    count = valid.sum(axis=0)
    masked_sum = np.sum(coords * valid[..., None], axis=0)
    with np.errstate(invalid='ignore', divide='ignore'):
        masked_mean = masked_sum / count[..., None]
    mean = np.where(count[..., None] > 0, masked_mean, coords.mean(axis=0))
    return UVField(coords=mean, valid=2 * count > len(fields))


def warp(texture: Union[np.ndarray, torch.Tensor], field: UVField) \
        -> Tuple[Union[np.ndarray, torch.Tensor], Union[np.ndarray,
                                                         torch.Tensor]]:
    """Warps a texture into image space through a UV field.

    The texture is sampled bilinearly at ``(u (W_t - 1), v (H_t - 1))``.
    Coordinates are clamped to the texture, invalid pixels are 0. The result
    is differentiable with respect to the texture and the coordinates.

    Parameters
    ----------
    texture: array
        Either a torch tensor of shape (B, C, H_t, W_t) or a numpy array of
        shape (H_t, W_t, C).

    field: UVField
        For tensor textures, coords of shape (B, H, W, 2) and valid of shape
        (B, H, W). For numpy textures, numpy arrays of shape (H, W, 2) and
        (H, W).

    Returns
    -------
    image: array
        (B, C, H, W) tensor or (H, W, C) numpy array.

    valid: array
        (B, 1, H, W) float tensor or (H, W) boolean numpy array.

    """
    if isinstance(texture, np.ndarray):
        image, valid = warp(
            torch.from_numpy(np.ascontiguousarray(
                texture.transpose(2, 0, 1)[None], dtype=np.float64)),
            UVField(coords=torch.from_numpy(np.asarray(
                field.coords, dtype=np.float64)[None]),
                    valid=torch.from_numpy(np.asarray(field.valid)[None])))
        return image[0].numpy().transpose(1, 2, 0), valid[0, 0].numpy() > 0

    coords = field.coords.to(texture.dtype).clamp(0., 1.)
    valid = field.valid.to(texture.dtype).unsqueeze(1)
    grid = 2. * coords - 1.
    image = F.grid_sample(texture, grid, mode='bilinear',
                          padding_mode='border', align_corners=True)
    return image * valid, valid
