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
"""Synthetic heterogeneous face data.

Every identity is a parametric head shape with a colour texture in the UV
atlas. Renderings warp the texture through the UV field of the head under a
pose, so every sample carries its exact ground-truth field. NIR renderings
pass the face through a fixed invertible spectral transform and zero the
background and random elliptical occluders.

All functions are pure functions of their seeds. Random streams are derived
with ``numpy.random.default_rng`` from integer tuples, so any sample can be
regenerated in isolation.

Classes
-------
:class:`Spectrum`
    NIR or VIS.

:class:`IdentityParams`
    Shape and canonical texture of one identity.

:class:`Corruption`
    Elliptical occluders relative to the face bounding box.

:class:`FaceSample`
    Image with labels, ground-truth UV field and corruption mask.

:class:`DatasetSplit`
    Identity-disjoint training and test sets.

Functions
---------
:func:`generate_identity`
    Draws the parameters of one identity.

:func:`render_sample`
    Renders one identity under a pose in one spectrum.

:func:`make_dataset`
    Generates a complete split.

:func:`nir_transform`
    The spectral transform from VIS to NIR.

:func:`inverse_nir_transform`
    Its inverse.

:func:`mean_uv_targets`
    Mean ground-truth UV field per training identity.

"""

import enum
import logging
import warnings
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.ndimage

from cfc.config import ConfigError, RunConfig
from cfc.uvgeom import UVField, mean_uv_field, render_uv_field, warp

logger = logging.getLogger(__name__)

# identities of the recognizer's pretraining pool start here
EMBEDDER_ID_OFFSET = 1000000

MAX_IDENTITY_ATTEMPTS = 16

# row-stochastic channel mix with positive entries: monotone and invertible
NIR_CHANNEL_MIX = np.array([[.70, .20, .10],
                            [.25, .60, .15],
                            [.15, .25, .60]])
NIR_GAMMA = .7

# stream tags of the dataset seeds
_SPLIT_STREAM = 1
_SAMPLE_STREAM = 2
_GALLERY_STREAM = 3
_POOL_STREAM = 4


class PoseOutOfRange(ValueError):
    """Raised for poses beyond 60 degrees yaw or 30 degrees pitch. """
    pass


class DatasetConfigError(ConfigError):
    """Raised for dataset configurations that cannot be generated. """
    pass


class Spectrum(str, enum.Enum):
    NIR = 'NIR'
    VIS = 'VIS'


class IdentityParams(NamedTuple):
    """Ground truth of one identity.

    Attributes
    ----------
    id: int
        Identity label.

    canonical_texture: np.ndarray, shape (H_t, W_t, 3)
        Colour texture in the UV atlas with values in [0.02, 0.98].

    shape_params: np.ndarray, shape (8,)
        Head shape, see ``cfc.uvgeom.SHAPE_PARAMETER_NAMES``.

    attempt: int
        Redraw counter used to generate the identity.

    """
    id: int
    canonical_texture: np.ndarray
    shape_params: np.ndarray
    attempt: int = 0


class Corruption(NamedTuple):
    """Elliptical occluders.

    Each occluder is ``(center_row, center_column, radius_row,
    radius_column)`` in fractions of the height and width of the face's
    bounding box.

    """
    occluders: Tuple[Tuple[float, float, float, float], ...] = ()


class FaceSample(NamedTuple):
    """A face image and its labels.

    Attributes
    ----------
    image: np.ndarray, shape (H, W, 3)
        Values in [0, 1].

    identity: int

    spectrum: Spectrum

    pose: tuple of float
        (yaw, pitch) in degrees.

    gt_uv: UVField or None
        Ground-truth UV field.

    corruption_mask: np.ndarray or None
        Boolean (H, W) mask of zeroed pixels, present exactly for NIR.

    """
    image: np.ndarray
    identity: int
    spectrum: Spectrum
    pose: Tuple[float, float]
    gt_uv: Optional[UVField] = None
    corruption_mask: Optional[np.ndarray] = None


class DatasetSplit(NamedTuple):
    """Identity-disjoint split.

    Attributes
    ----------
    train: list of FaceSample
        NIR and VIS samples of the training identities.

    test_gallery: list of FaceSample
        One frontal VIS sample per test identity.

    test_probe: list of FaceSample
        NIR samples of the test identities.

    identities: dict
        Maps every identity label to its parameters. Empty for splits read
        from a directory.

    seed: int
        Seed the split was generated with.

    """
    train: List[FaceSample]
    test_gallery: List[FaceSample]
    test_probe: List[FaceSample]
    identities: Dict[int, IdentityParams]
    seed: int

    @property
    def train_identities(self) -> List[int]:
        return sorted({sample.identity for sample in self.train})

    @property
    def test_identities(self) -> List[int]:
        return sorted({sample.identity for sample in self.test_gallery}
                      | {sample.identity for sample in self.test_probe})


def _blend(texture, weight, colour):
    weight = weight[..., None]
    return texture * (1 - weight) + np.asarray(colour) * weight


def _blob(u, v, u_0, v_0, sigma_u, sigma_v):
    return np.exp(-.5 * ((u - u_0) / sigma_u) ** 2
                  - .5 * ((v - v_0) / sigma_v) ** 2)


def generate_identity(seed: int, id: int, attempt: int = 0,
                      texture_size: int = 64) -> IdentityParams:
    """Draws the shape and texture of one identity.

    The texture is a skin tone with smooth identity-specific noise, hair
    above the hairline and eyes, brows, mouth and marks at
    identity-specific positions of the facial region.

    Parameters
    ----------
    seed: int
        Dataset seed.

    id: int
        Identity label.

    attempt: int
        Redraw counter. Different attempts give unrelated identities.

    texture_size: int
        Side length of the square texture.

    Returns
    -------
    identity: IdentityParams
        Bit-identical for identical arguments.

    """
    if seed < 0 or id < 0 or attempt < 0:
        raise ValueError('seed, id and attempt must be non-negative.')
    rng = np.random.default_rng([seed, id, attempt])
    shape_params = np.array([
        rng.uniform(.52, .62), rng.uniform(.56, .68), rng.uniform(.76, .88),
        rng.uniform(.06, .12), rng.uniform(.14, .22), rng.uniform(.01, .04),
        rng.uniform(0., .04), rng.uniform(.01, .03)
    ])

    v, u = np.meshgrid(np.linspace(0, 1, texture_size),
                       np.linspace(0, 1, texture_size), indexing='ij')
    tone = rng.uniform(.4, .85)
    skin = tone * np.array([1., rng.uniform(.7, .9), rng.uniform(.55, .8)])
    noise = scipy.ndimage.gaussian_filter(
        rng.standard_normal((texture_size, texture_size, 3)),
        sigma=(texture_size / 16, texture_size / 16, 0))
    noise /= noise.std() + 1e-12
    texture = skin + .1 * noise

    hair = rng.uniform(.05, .6) * np.array([1., rng.uniform(.6, 1.),
                                            rng.uniform(.4, 1.)])
    hairline = rng.uniform(.18, .26)
    texture = _blend(texture, 1 / (1 + np.exp((v - hairline) / .01)), hair)

    eye_u = rng.uniform(.045, .065)
    eye_v = rng.uniform(.40, .45)
    eye_size = rng.uniform(.018, .026)
    iris = rng.uniform(.05, .5, size=3)
    brow_v = eye_v - rng.uniform(.05, .08)
    for side in (-1, 1):
        texture = _blend(texture, _blob(u, v, .5 + side * eye_u, eye_v,
                                        eye_size, .6 * eye_size), iris)
        texture = _blend(texture, .8 * _blob(u, v, .5 + side * eye_u, brow_v,
                                             .035, .01), hair)
    mouth = np.clip(skin * np.array([1.15, .6, .6]), 0, 1)
    texture = _blend(texture, _blob(u, v, .5, rng.uniform(.68, .74),
                                    rng.uniform(.03, .045), .014), mouth)
    for _ in range(rng.integers(2, 5)):
        texture = _blend(
            texture,
            _blob(u, v, rng.uniform(.33, .67), rng.uniform(.25, .85),
                  *(2 * [rng.uniform(.01, .03)])),
            np.clip(skin * rng.uniform(.5, 1.2, size=3), 0, 1))

    texture = np.clip(texture, .02, .98)
    return IdentityParams(id=id, canonical_texture=texture,
                          shape_params=shape_params, attempt=attempt)


def texture_distance(first: IdentityParams, second: IdentityParams) -> float:
    """Mean absolute difference of two canonical textures. """
    return float(np.mean(np.abs(first.canonical_texture
                                - second.canonical_texture)))


def nir_transform(face: np.ndarray) -> np.ndarray:
    """Maps VIS colours in [0, 1] to NIR intensities.

    A channel mix with ``NIR_CHANNEL_MIX`` followed by the power
    ``NIR_GAMMA``. Both steps are monotone and invertible on [0, 1]^3.

    Parameters
    ----------
    face: np.ndarray, shape (..., 3)

    Returns
    -------
    nir: np.ndarray, shape (..., 3)

    """
    mixed = np.asarray(face) @ NIR_CHANNEL_MIX.T
    return np.clip(mixed, 0., 1.) ** NIR_GAMMA


def inverse_nir_transform(nir: np.ndarray) -> np.ndarray:
    """Inverse of :func:`nir_transform` on its range. """
    mixed = np.clip(np.asarray(nir), 0., 1.) ** (1 / NIR_GAMMA)
    return mixed @ np.linalg.inv(NIR_CHANNEL_MIX).T


def background(size: Tuple[int, int], seed: int) -> np.ndarray:
    """Mild colour gradient behind VIS faces. """
    rng = np.random.default_rng(seed)
    height, width = size
    y, x = np.meshgrid(np.linspace(-1, 1, height), np.linspace(-1, 1, width),
                       indexing='ij')
    offset = rng.uniform(.25, .75, size=3)
    slope_x, slope_y = rng.uniform(-.15, .15, size=(2, 3))
    return np.clip(offset + slope_x * x[..., None] + slope_y * y[..., None],
                   .05, .95)


def sample_corruption(rng: np.random.Generator, max_occluders: int,
                      max_radius: float) -> Corruption:
    """Draws 0 to max_occluders occluders with radii up to max_radius. """
    n = int(rng.integers(0, max_occluders + 1))
    occluders = tuple(
        (float(rng.uniform(.2, .8)), float(rng.uniform(.2, .8)),
         float(rng.uniform(.3, 1.) * max_radius),
         float(rng.uniform(.3, 1.) * max_radius))
        for _ in range(n))
    return Corruption(occluders=occluders)


def _occlusion_mask(valid: np.ndarray, corruption: Corruption) -> np.ndarray:
    height, width = valid.shape
    mask = np.zeros_like(valid)
    if not corruption.occluders or not valid.any():
        return mask
    rows, columns = np.nonzero(valid)
    top, bottom = rows.min(), rows.max() + 1
    left, right = columns.min(), columns.max() + 1
    y, x = np.meshgrid(np.arange(height) + .5, np.arange(width) + .5,
                       indexing='ij')
    for center_row, center_column, radius_row, radius_column in \
            corruption.occluders:
        c_y = top + center_row * (bottom - top)
        c_x = left + center_column * (right - left)
        r_y = max(radius_row * (bottom - top), .5)
        r_x = max(radius_column * (right - left), .5)
        mask |= ((y - c_y) / r_y) ** 2 + ((x - c_x) / r_x) ** 2 <= 1
    return mask


def check_pose(pose: Tuple[float, float]):
    yaw, pitch = pose
    if not (abs(yaw) <= 60 and abs(pitch) <= 30):
        raise PoseOutOfRange(
            'Supported poses are |yaw| <= 60 and |pitch| <= 30 degrees, got '
            'yaw={}, pitch={}.'.format(yaw, pitch))


def render_sample(identity: IdentityParams, pose: Tuple[float, float],
                  spectrum: Spectrum, corruption: Optional[Corruption] = None,
                  size: Tuple[int, int] = (64, 64),
                  seed: int = 0) -> FaceSample:
    """Renders an identity under a pose.

    The facial region is the canonical texture warped through the UV field
    of the pose. VIS images show a background gradient drawn from seed. NIR
    images apply :func:`nir_transform` to the face and are zero on the
    background and under the occluders.

    Parameters
    ----------
    identity: IdentityParams

    pose: tuple of float
        (yaw, pitch) in degrees.

    spectrum: Spectrum

    corruption: Corruption, optional
        Occluders of NIR renderings. Defaults to none.

    size: tuple of int
        (H, W).

    seed: int
        Seed of the VIS background.

    Returns
    -------
    sample: FaceSample

    Raises
    ------
    PoseOutOfRange
        For poses outside the supported range.

    ValueError
        For occluders on a VIS rendering.

    """
    check_pose(pose)
    spectrum = Spectrum(spectrum)
    pose = (float(pose[0]), float(pose[1]))
    field = render_uv_field(identity.shape_params, pose, size)
    face, valid = warp(identity.canonical_texture, field)

    if spectrum is Spectrum.VIS:
        if corruption is not None and corruption.occluders:
            raise ValueError('Only NIR renderings carry occluders.')
        image = np.where(valid[..., None], face, background(size, seed))
        return FaceSample(image=image, identity=identity.id,
                          spectrum=spectrum, pose=pose, gt_uv=field)

    mask = ~valid | _occlusion_mask(valid, corruption or Corruption())
    image = np.where(mask[..., None], 0., nir_transform(face))
    return FaceSample(image=image, identity=identity.id, spectrum=spectrum,
                      pose=pose, gt_uv=field, corruption_mask=mask)


def gallery_sample(identity: IdentityParams, size: Tuple[int, int],
                   dataset_seed: int) -> FaceSample:
    """The frontal VIS gallery image of an identity. """
    rng = np.random.default_rng([dataset_seed, _GALLERY_STREAM, identity.id])
    return render_sample(identity, (0., 0.), Spectrum.VIS, size=size,
                         seed=int(rng.integers(2 ** 31)))


def _vis_pose(rng: np.random.Generator, jitter: float) -> Tuple[float, float]:
    return (float(rng.uniform(-jitter, jitter)),
            float(rng.uniform(-jitter, jitter)))


def _draw_sample(identity: IdentityParams, spectrum: Spectrum, index: int,
                 config: RunConfig, seed: int) -> FaceSample:
    code = 0 if spectrum is Spectrum.NIR else 1
    rng = np.random.default_rng([seed, _SAMPLE_STREAM, identity.id, code,
                                 index])
    size = (config.image_size, config.image_size)
    if spectrum is Spectrum.NIR:
        pose = (float(rng.uniform(-config.max_yaw, config.max_yaw)),
                float(rng.uniform(-config.max_pitch, config.max_pitch)))
        corruption = sample_corruption(rng, config.max_occluders,
                                       config.occluder_radius)
        return render_sample(identity, pose, spectrum, corruption, size=size)
    return render_sample(identity, _vis_pose(rng, config.vis_pose_jitter),
                         spectrum, size=size,
                         seed=int(rng.integers(2 ** 31)))


def check_dataset_config(config: RunConfig):
    """Verifies that a split can be generated from config.

    Raises
    ------
    DatasetConfigError
        Naming the offending key.

    """
    if config.n_identities < 2:
        raise DatasetConfigError('n_identities',
                                 'at least 2 identities needed')
    if not 1 <= config.n_train_identities < config.n_identities:
        raise DatasetConfigError('n_train_identities',
                                 'must leave at least one test identity')
    if config.vis_per_identity < 2:
        raise DatasetConfigError(
            'vis_per_identity',
            'two VIS images per identity are needed for the real '
            'representation pairs')
    if config.nir_per_identity < 1:
        raise DatasetConfigError('nir_per_identity', 'must be positive')
    if not 0 <= config.max_yaw <= 60:
        raise DatasetConfigError('max_yaw', 'must lie in [0, 60]')
    if not 0 <= config.max_pitch <= 30:
        raise DatasetConfigError('max_pitch', 'must lie in [0, 30]')
    if not 0 <= config.vis_pose_jitter <= 30:
        raise DatasetConfigError('vis_pose_jitter', 'must lie in [0, 30]')
    if config.max_occluders < 0:
        raise DatasetConfigError('max_occluders', 'must be non-negative')


def draw_identities(ids: Sequence[int], seed: int, texture_size: int,
                    separation_floor: float) -> Dict[int, IdentityParams]:
    """Generates identities, redrawing those too close to earlier ones.

    An identity is redrawn with an incremented attempt counter while its
    texture distance to an identity drawn before falls below the floor.

    """
    identities = {}
    for id in ids:
        for attempt in range(MAX_IDENTITY_ATTEMPTS):
            identity = generate_identity(seed, id, attempt, texture_size)
            closest = min((texture_distance(identity, other)
                           for other in identities.values()), default=np.inf)
            if closest >= separation_floor:
                break
        else:
            warnings.warn('Identity {} stays within {:.3g} of another '
                          'identity after {} attempts.'.format(
                              id, closest, MAX_IDENTITY_ATTEMPTS))
        identities[id] = identity
    return identities


def make_dataset(config: RunConfig, seed: Optional[int] = None) \
        -> DatasetSplit:
    """Generates an identity-disjoint split.

    Training identities contribute ``nir_per_identity`` NIR samples with
    poses uniform in the configured range and ``vis_per_identity`` VIS
    samples with poses jittered around the front. Test identities contribute
    the same number of NIR probes and one frontal VIS gallery image.

    Parameters
    ----------
    config: RunConfig

    seed: int, optional
        Defaults to ``config.seed``.

    Returns
    -------
    split: DatasetSplit

    Raises
    ------
    DatasetConfigError
        If the configuration admits no split.

    """
    check_dataset_config(config)
    seed = config.seed if seed is None else seed
    ids = list(range(config.n_identities))
    identities = draw_identities(ids, seed, config.texture_size,
                                 config.separation_floor)

    order = np.random.default_rng([seed, _SPLIT_STREAM]).permutation(ids)
    train_ids = sorted(int(id) for id in order[:config.n_train_identities])
    test_ids = sorted(int(id) for id in order[config.n_train_identities:])

    train, gallery, probe = [], [], []
    for id in train_ids:
        train.extend(_draw_sample(identities[id], Spectrum.NIR, k, config,
                                  seed)
                     for k in range(config.nir_per_identity))
        train.extend(_draw_sample(identities[id], Spectrum.VIS, k, config,
                                  seed)
                     for k in range(config.vis_per_identity))
    size = (config.image_size, config.image_size)
    for id in test_ids:
        gallery.append(gallery_sample(identities[id], size, seed))
        probe.extend(_draw_sample(identities[id], Spectrum.NIR, k, config,
                                  seed)
                     for k in range(config.nir_per_identity))

    logger.info('Generated %d training samples of %d identities, %d gallery '
                'and %d probe samples of %d identities.', len(train),
                len(train_ids), len(gallery), len(probe), len(test_ids))
    return DatasetSplit(train=train, test_gallery=gallery, test_probe=probe,
                        identities=identities, seed=seed)


def make_vis_pool(config: RunConfig, seed: int) -> List[FaceSample]:
    """VIS samples of identities disjoint from every dataset identity.

    The pool has ``embedder_identities`` identities with
    ``embedder_samples`` jittered VIS renderings each. It is the training
    data of the recognizer.

    """
    ids = range(EMBEDDER_ID_OFFSET,
                EMBEDDER_ID_OFFSET + config.embedder_identities)
    identities = draw_identities(ids, seed, config.texture_size,
                                 config.separation_floor)
    size = (config.image_size, config.image_size)
    samples = []
    for id, identity in identities.items():
        for k in range(config.embedder_samples):
            rng = np.random.default_rng([seed, _POOL_STREAM, id, k])
            samples.append(render_sample(
                identity, _vis_pose(rng, config.vis_pose_jitter),
                Spectrum.VIS, size=size, seed=int(rng.integers(2 ** 31))))
    return samples


def mean_uv_targets(split: DatasetSplit) -> Dict[int, UVField]:
    """Mean ground-truth UV field of each training identity's VIS samples.

    These are the targets of the pose estimation loss.

    Raises
    ------
    ValueError
        If a training identity has no VIS sample with a UV field.

    """
    fields = {}
    for sample in split.train:
        if sample.spectrum is Spectrum.VIS and sample.gt_uv is not None:
            fields.setdefault(sample.identity, []).append(sample.gt_uv)
    missing = set(split.train_identities) - set(fields)
    if missing:
        raise ValueError('No VIS UV fields for training identities '
                         '{}.'.format(sorted(missing)))
    return {id: mean_uv_field(fields[id]) for id in sorted(fields)}
