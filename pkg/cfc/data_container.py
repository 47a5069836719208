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
"""Implements data storage.

Dataset directories have the layout::

    images/<id>/<spectrum>_<k>.png   8 bit RGB images
    uv/<id>/<spectrum>_<k>.uv        ground-truth UV fields
    masks/<id>/NIR_<k>.png           corruption masks of NIR samples
    manifest.tsv                     path, id, spectrum, yaw, pitch, split
    identities.tsv                   id, attempt, split, seed, texture_size

UV fields are stored as a 16 byte header (the 8 byte magic ``CFCUVF32``,
then H and W as little-endian uint32), the coordinates as little-endian
float32 of shape (H, W, 2) and the validity mask as uint8 of shape (H, W).

Protocol directories hold ``fold_<k>/gallery.txt`` and
``fold_<k>/probe.txt`` with one ``<path> <id>`` pair per line, the paths
being relative to the dataset directory.

Classes
-------
:class:`TrainingContainer`
    Collects the results of several training runs.

Functions
---------
:func:`write_uv_field`, :func:`read_uv_field`
    UV field rasters.

:func:`save_image`, :func:`load_image`, :func:`quantize_image`
    8 bit PNG images.

:func:`write_dataset`, :func:`read_dataset`
    Dataset directories.

:func:`write_protocols`
    Gallery and probe lists per fold.

"""

import copy
import os
import pickle
import struct
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from PIL import Image
from sklearn.model_selection import KFold

from cfc import synthgen, training_data
from cfc.uvgeom import UVField

UV_MAGIC = b'CFCUVF32'
_UV_HEADER = struct.Struct('<8sII')

MANIFEST_COLUMNS = ['path', 'id', 'spectrum', 'yaw', 'pitch', 'split']
IDENTITY_COLUMNS = ['id', 'attempt', 'split', 'seed', 'texture_size']


def write_uv_field(path: str, field: UVField):
    """Writes a UV field raster. """
    coords = np.asarray(field.coords, dtype='<f4')
    valid = np.asarray(field.valid, dtype=np.uint8)
    height, width = valid.shape
    if coords.shape != (height, width, 2):
        raise ValueError('UV coordinates of shape {} do not match the mask of '
                         'shape {}.'.format(coords.shape, valid.shape))
    with open(path, 'wb') as f:
        f.write(_UV_HEADER.pack(UV_MAGIC, height, width))
        f.write(coords.tobytes())
        f.write(valid.tobytes())


def read_uv_field(path: str) -> UVField:
    """Reads a UV field raster written by :func:`write_uv_field`.

    Raises
    ------
    ValueError
        For a wrong magic or a truncated file.

    """
    with open(path, 'rb') as f:
        data = f.read()
    if len(data) < _UV_HEADER.size:
        raise ValueError('{}: truncated UV field header.'.format(path))
    magic, height, width = _UV_HEADER.unpack_from(data)
    if magic != UV_MAGIC:
        raise ValueError('{}: not a UV field raster.'.format(path))
    n_coords = height * width * 2 * 4
    if len(data) != _UV_HEADER.size + n_coords + height * width:
        raise ValueError('{}: expected {}x{} UV field, file size '
                         'mismatch.'.format(path, height, width))
    coords = np.frombuffer(data, dtype='<f4', count=height * width * 2,
                           offset=_UV_HEADER.size)
    valid = np.frombuffer(data, dtype=np.uint8, count=height * width,
                          offset=_UV_HEADER.size + n_coords)
    return UVField(coords=coords.reshape(height, width, 2).astype(np.float64),
                   valid=valid.reshape(height, width).astype(bool))


def quantize_image(image: np.ndarray) -> np.ndarray:
    """Rounds an image in [0, 1] to the 8 bit grid of stored images. """
    return np.round(np.clip(image, 0, 1) * 255).astype(np.uint8) / 255.


def save_image(path: str, image: np.ndarray):
    """Saves an (H, W, 3) image in [0, 1] or a boolean mask as 8 bit PNG."""
    array = np.asarray(image)
    if array.dtype == bool:
        array = array.astype(np.uint8) * 255
    else:
        array = np.round(np.clip(array, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(array).save(path)


def load_image(path: str) -> np.ndarray:
    """Loads an RGB PNG as float array in [0, 1] of shape (H, W, 3). """
    with Image.open(path) as image:
        return np.asarray(image.convert('RGB'), dtype=np.uint8) / 255.


def load_mask(path: str) -> np.ndarray:
    with Image.open(path) as image:
        return np.asarray(image.convert('L')) > 127


def _sample_stem(sample: synthgen.FaceSample, counters: Dict) -> str:
    key = (sample.identity, sample.spectrum)
    k = counters.get(key, 0)
    counters[key] = k + 1
    return os.path.join(str(sample.identity),
                        '{}_{}'.format(sample.spectrum.value, k))


def write_dataset(split: synthgen.DatasetSplit, directory: str):
    """Writes a split into a dataset directory.

    Parameters
    ----------
    split: DatasetSplit
        Generated split. Its identities are recorded so that they can be
        regenerated on reading.

    directory: str
        Created if missing.

    """
    rows, counters = [], {}
    for split_name, samples in (('train', split.train),
                                ('gallery', split.test_gallery),
                                ('probe', split.test_probe)):
        for sample in samples:
            stem = _sample_stem(sample, counters)
            image_path = os.path.join('images', stem + '.png')
            for sub in ('images', 'uv', 'masks'):
                os.makedirs(os.path.join(directory, sub,
                                         str(sample.identity)), exist_ok=True)
            save_image(os.path.join(directory, image_path), sample.image)
            if sample.gt_uv is not None:
                write_uv_field(os.path.join(directory, 'uv', stem + '.uv'),
                               sample.gt_uv)
            if sample.corruption_mask is not None:
                save_image(os.path.join(directory, 'masks', stem + '.png'),
                           sample.corruption_mask)
            rows.append([image_path.replace(os.sep, '/'), sample.identity,
                         sample.spectrum.value, sample.pose[0],
                         sample.pose[1], split_name])
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(
        os.path.join(directory, 'manifest.tsv'), sep='\t', index=False)

    test_ids = set(split.test_identities)
    identity_rows = [[id, identity.attempt,
                      'test' if id in test_ids else 'train', split.seed,
                      identity.canonical_texture.shape[0]]
                     for id, identity in sorted(split.identities.items())]
    pd.DataFrame(identity_rows, columns=IDENTITY_COLUMNS).to_csv(
        os.path.join(directory, 'identities.tsv'), sep='\t', index=False)


def read_manifest(directory: str) -> pd.DataFrame:
    path = os.path.join(directory, 'manifest.tsv')
    if not os.path.isfile(path):
        raise FileNotFoundError('{}: dataset manifest not found.'.format(path))
    return pd.read_csv(path, sep='\t', dtype={'path': str, 'spectrum': str,
                                              'split': str})


def load_sample(directory: str, path: str, identity: int, spectrum: str,
                pose=(0., 0.)) -> synthgen.FaceSample:
    """Loads one sample with its UV field and mask if they exist. """
    stem = os.path.splitext(path)[0].split('/', 1)[-1]
    uv_path = os.path.join(directory, 'uv', stem + '.uv')
    mask_path = os.path.join(directory, 'masks', stem + '.png')
    return synthgen.FaceSample(
        image=load_image(os.path.join(directory, path)),
        identity=int(identity), spectrum=synthgen.Spectrum(spectrum),
        pose=(float(pose[0]), float(pose[1])),
        gt_uv=read_uv_field(uv_path) if os.path.isfile(uv_path) else None,
        corruption_mask=(load_mask(mask_path) if os.path.isfile(mask_path)
                         else None))


def read_dataset(directory: str) -> synthgen.DatasetSplit:
    """Reads a dataset directory written by :func:`write_dataset`.

    Images are on the 8 bit grid and UV coordinates at float32 precision.
    Identity parameters are regenerated from ``identities.tsv`` when present.

    """
    manifest = read_manifest(directory)
    parts = {'train': [], 'gallery': [], 'probe': []}
    for row in manifest.itertuples(index=False):
        parts[row.split].append(load_sample(
            directory, row.path, row.id, row.spectrum, (row.yaw, row.pitch)))

    identities, seed = {}, 0
    identity_path = os.path.join(directory, 'identities.tsv')
    if os.path.isfile(identity_path):
        for row in pd.read_csv(identity_path, sep='\t').itertuples(
                index=False):
            seed = int(row.seed)
            identities[int(row.id)] = synthgen.generate_identity(
                seed, int(row.id), int(row.attempt), int(row.texture_size))
    return synthgen.DatasetSplit(
        train=parts['train'], test_gallery=parts['gallery'],
        test_probe=parts['probe'], identities=identities, seed=seed)


def write_protocols(directory: str, n_folds: int = 1, seed: int = 0,
                    out: Optional[str] = None) -> List[str]:
    """Writes gallery and probe lists of a dataset directory.

    Every fold uses the complete gallery. The probes are partitioned into
    n_folds folds by a shuffled ``KFold``, a single fold holds all probes.

    Parameters
    ----------
    directory: str
        Dataset directory.

    n_folds: int
        Number of folds.

    seed: int
        Shuffling seed.

    out: str, optional
        Protocol directory, defaults to ``<directory>/protocols``.

    Returns
    -------
    fold_directories: list of str

    """
    manifest = read_manifest(directory)
    gallery = manifest[manifest.split == 'gallery']
    probe = manifest[manifest.split == 'probe']
    if n_folds < 1 or n_folds > max(len(probe), 1):
        raise ValueError('Cannot split {} probes into {} folds.'.format(
            len(probe), n_folds))
    if n_folds == 1:
        folds = [np.arange(len(probe))]
    else:
        folds = [test for _, test in KFold(
            n_splits=n_folds, shuffle=True,
            random_state=seed).split(np.arange(len(probe)))]

    out = os.path.join(directory, 'protocols') if out is None else out
    fold_directories = []
    for k, indices in enumerate(folds):
        fold_directory = os.path.join(out, 'fold_{}'.format(k))
        os.makedirs(fold_directory, exist_ok=True)
        for name, rows in (('gallery', gallery),
                           ('probe', probe.iloc[np.sort(indices)])):
            with open(os.path.join(fold_directory, name + '.txt'), 'w') as f:
                for row in rows.itertuples(index=False):
                    f.write('{} {}\n'.format(row.path, row.id))
        fold_directories.append(fold_directory)
    return fold_directories


class TrainingContainer:
    """Stores the results of several training runs.

    Parameters
    ----------
    storage_path : str, optional
        Directory the container is pickled to.

    file_name : str
        File name appended to the storage path.

    seeds : list of int
        Seed of every run.

    final_losses : list of dict
        Loss bundle of the last step of every run as dictionary.

    checkpoints : list of str
        Checkpoint path of every run.

    status : list of int
        Termination reason of every run, see
        :class:`cfc.training_data.TrainingResult`.

    summaries : list of TrainingSummary or None
        Loss history of every run.

    training_stats : list of PerformanceStatistics or None
        Timing of every run.

    """
    def __init__(self,
                 storage_path: Optional[str] = None,
                 file_name: str = 'training_container.pkl',
                 seeds: Optional[List[int]] = None,
                 final_losses: Optional[List[Dict]] = None,
                 checkpoints: Optional[List[str]] = None,
                 status: Optional[List[int]] = None,
                 summaries: Optional[List] = None,
                 training_stats: Optional[List] = None):
        self.storage_path = os.curdir if storage_path is None \
            else storage_path
        self.file_name = file_name
        self.seeds = [] if seeds is None else seeds
        self.final_losses = [] if final_losses is None else final_losses
        self.checkpoints = [] if checkpoints is None else checkpoints
        self.status = [] if status is None else status
        self.summaries = [] if summaries is None else summaries
        self.training_stats = [] if training_stats is None \
            else training_stats
        self.check_length()

    def __len__(self):
        """Number of training runs in the data. """
        return len(self.seeds)

    def check_length(self):
        lengths = {len(self.seeds), len(self.final_losses),
                   len(self.checkpoints), len(self.status),
                   len(self.summaries), len(self.training_stats)}
        if len(lengths) != 1:
            raise ValueError('All entries of the container must describe the '
                             'same number of runs.')

    def append_training_result(
            self, result: training_data.TrainingResult):
        """Appends the information of a training run. """
        self.seeds.append(result.seed)
        self.final_losses.append(
            None if result.final_losses is None
            else result.final_losses.to_dict())
        self.checkpoints.append(result.checkpoint)
        self.status.append(result.status)
        self.summaries.append(result.summary)
        self.training_stats.append(result.training_stats)
        self.check_length()

    def best_run(self, key: str = 'perceptual') -> int:
        """Index of the run with the lowest final loss term ``key``. """
        values = [np.inf if losses is None else losses[key]
                  for losses in self.final_losses]
        return int(np.argmin(values))

    def __deepcopy__(self, memo):
        return type(self)(**copy.deepcopy(self._to_dict(), memo))

    def to_pickle(self, filename: Optional[str] = None):
        """Dumps the container to pickle. """
        if filename is None:
            filename = os.path.join(self.storage_path, self.file_name)
        with open(filename, 'wb') as f:
            pickle.dump(self._to_dict(), f)

    @classmethod
    def from_pickle(cls, filename: str) -> 'TrainingContainer':
        """Reads a container pickled with :meth:`to_pickle`. """
        with open(filename, 'rb') as f:
            return cls._from_dict(pickle.load(f))

    def _to_dict(self):
        return dict(storage_path=self.storage_path,
                    file_name=self.file_name,
                    seeds=self.seeds,
                    final_losses=self.final_losses,
                    checkpoints=self.checkpoints,
                    status=self.status,
                    summaries=self.summaries,
                    training_stats=self.training_stats)

    @classmethod
    def _from_dict(cls, data_dict):
        return cls(**data_dict)

