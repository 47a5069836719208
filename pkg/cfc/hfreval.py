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
"""Recognition via generation.

NIR probes are matched against a VIS gallery with a frozen recognizer that
never sees synthesized images during its training. In mode 'raw' the
probes are embedded as they are, in mode 'cfc' the generator first
translates them to VIS and in mode 'cfc_fuse' the mean of both features is
used.

Scores are cosine similarities, or negative Euclidean distances. A pair
passes verification if its score is at least the threshold, so ties at the
threshold count as passes. The threshold at a false accept rate is the
smallest score at which the fraction of passing impostor pairs does not
exceed the rate.

Classes
-------
:class:`SimilarityMatrix`
    Gallery by probe scores with labels.

:class:`MetricsReport`
    Rank-1 rate, verification rates and ROC, optionally per fold.

:class:`OracleGenerator`
    Perfect generator rendering the gallery view of the probe's identity.

:class:`CheckpointGenerator`
    Generator of a trained checkpoint.

:class:`ProtocolError`
    Raised for inconsistent protocols.

Functions
---------
:func:`similarity_matrix`
    Scores of all gallery-probe pairs.

:func:`rank1`
    Fraction of probes whose best gallery match has their identity.

:func:`verification_rate`
    Genuine pass rate at a false accept rate.

:func:`roc_points`
    The ROC curve.

:func:`fuse_features`
    Mean of two features.

:func:`read_protocol`
    Reads the folds of a protocol directory.

:func:`run_protocol`
    Evaluates a model on a protocol.

"""

import logging
import os
import re
from typing import (Callable, Dict, List, NamedTuple, Optional, Sequence,
                    Tuple, Union)

import numpy as np
import pandas as pd
import torch
from sklearn.metrics import roc_curve

from cfc import data_container, nets, synthgen, trainer
from cfc.util import images_to_tensor

logger = logging.getLogger(__name__)

MODES = ('raw', 'cfc', 'cfc_fuse')


class ProtocolError(ValueError):
    """Raised for missing files, unknown identities and other protocol
    inconsistencies.

    Attributes
    ----------
    location: str or int or None
        Offending path or index.

    """
    def __init__(self, message: str, location=None):
        super().__init__(message)
        self.location = location


class SimilarityMatrix(NamedTuple):
    """Scores of all gallery-probe pairs.

    Attributes
    ----------
    scores: np.ndarray, shape (G, P)

    gallery_ids: np.ndarray, shape (G,)

    probe_ids: np.ndarray, shape (P,)

    """
    scores: np.ndarray
    gallery_ids: np.ndarray
    probe_ids: np.ndarray

    def check(self):
        if self.scores.shape != (len(self.gallery_ids), len(self.probe_ids)):
            raise ValueError('Scores of shape {} do not match {} gallery and {}'
                             ' probe labels.'.format(self.scores.shape,
                                                     len(self.gallery_ids),
                                                     len(self.probe_ids)))
        if not np.all(np.isfinite(self.scores)):
            raise ValueError('Scores must be finite.')
        return self

    @property
    def genuine(self) -> np.ndarray:
        """Boolean (G, P) mask of same-identity pairs. """
        return np.asarray(self.gallery_ids)[:, None] \
            == np.asarray(self.probe_ids)[None, :]


def _check_features(features: np.ndarray, name: str) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) == 0:
        raise ValueError('Expected a nonempty (n, d) array of {} features, '
                         'got shape {}.'.format(name, features.shape))
    norms = np.linalg.norm(features, axis=1)
    zero = np.flatnonzero(norms == 0)
    if len(zero):
        raise ProtocolError('{} feature {} has zero norm.'.format(
            name.capitalize(), zero[0]), location=int(zero[0]))
    return features


def similarity_matrix(gallery_feats: np.ndarray, probe_feats: np.ndarray,
                      gallery_ids: Optional[Sequence[int]] = None,
                      probe_ids: Optional[Sequence[int]] = None,
                      metric: str = 'cosine') -> SimilarityMatrix:
    """Scores every gallery feature against every probe feature.

    Parameters
    ----------
    gallery_feats: np.ndarray, shape (G, d)

    probe_feats: np.ndarray, shape (P, d)

    gallery_ids, probe_ids: list of int, optional
        Labels, default to the row indices.

    metric: str
        'cosine' for the cosine similarity or 'euclidean' for the negative
        Euclidean distance.

    Raises
    ------
    ProtocolError
        For a zero-norm feature, carrying its index.

    ValueError
        For different feature dimensions or an unknown metric.

    """
    gallery = _check_features(gallery_feats, 'gallery')
    probe = _check_features(probe_feats, 'probe')
    if gallery.shape[1] != probe.shape[1]:
        raise ValueError('Feature dimensions differ: {} and {}.'.format(
            gallery.shape[1], probe.shape[1]))
    if metric == 'cosine':
        scores = (gallery / np.linalg.norm(gallery, axis=1, keepdims=True)) \
            @ (probe / np.linalg.norm(probe, axis=1, keepdims=True)).T
    elif metric == 'euclidean':
        scores = -np.linalg.norm(gallery[:, None] - probe[None], axis=-1)
    else:
        raise ValueError('Unknown metric {!r}.'.format(metric))
    gallery_ids = np.arange(len(gallery)) if gallery_ids is None \
        else np.asarray(gallery_ids)
    probe_ids = np.arange(len(probe)) if probe_ids is None \
        else np.asarray(probe_ids)
    return SimilarityMatrix(scores, gallery_ids, probe_ids).check()


def rank1(sim: SimilarityMatrix) -> float:
    """Fraction of probes whose highest scoring gallery entry matches.

    Ties are broken in favour of the lowest gallery index.

    Raises
    ------
    ProtocolError
        If a probe identity is absent from the gallery.

    """
    gallery_ids = np.asarray(sim.gallery_ids)
    probe_ids = np.asarray(sim.probe_ids)
    absent = np.flatnonzero(~np.isin(probe_ids, gallery_ids))
    if len(absent):
        raise ProtocolError('Identity {} of probe {} is not in the '
                            'gallery.'.format(probe_ids[absent[0]],
                                              absent[0]),
                            location=int(absent[0]))
    best = np.argmax(sim.scores, axis=0)
    return float(np.mean(gallery_ids[best] == probe_ids))


def _genuine_impostor(sim: SimilarityMatrix) -> Tuple[np.ndarray,
                                                      np.ndarray]:
    genuine = sim.genuine
    if not genuine.any():
        raise ProtocolError('There are no genuine pairs.')
    if genuine.all():
        raise ProtocolError('There are no impostor pairs.')
    return sim.scores[genuine], sim.scores[~genuine]


def _roc(sim: SimilarityMatrix):
    genuine, impostor = _genuine_impostor(sim)
    labels = np.concatenate([np.ones(len(genuine)), np.zeros(len(impostor))])
    fpr, tpr, _ = roc_curve(labels, np.concatenate([genuine, impostor]),
                            drop_intermediate=False)
    return fpr, tpr


def verification_rate(sim: SimilarityMatrix, far: float) -> float:
    """Fraction of genuine pairs passing at the threshold of a false accept
    rate.

    Parameters
    ----------
    sim: SimilarityMatrix

    far: float
        False accept rate in (0, 1).

    Raises
    ------
    ProtocolError
        Without genuine or impostor pairs.

    ValueError
        For a rate outside (0, 1).

    """
    if not 0 < far < 1:
        raise ValueError('The false accept rate must lie in (0, 1), got '
                         '{}.'.format(far))
    fpr, tpr = _roc(sim)
    return float(np.max(tpr[fpr <= far]))


def roc_points(sim: SimilarityMatrix) -> np.ndarray:
    """ROC as (FAR, VR) rows with strictly increasing FAR.

    For each distinct FAR the highest VR is kept, so VR is non-decreasing.

    """
    fpr, tpr = _roc(sim)
    fars, first = np.unique(fpr, return_index=True)
    vrs = np.maximum.reduceat(tpr, first) if len(first) else tpr
    return np.stack([fars, np.maximum.accumulate(vrs)], axis=1)


def fuse_features(f_nir: np.ndarray, f_syn: np.ndarray) -> np.ndarray:
    """Element-wise mean of two features or feature stacks. """
    f_nir, f_syn = np.asarray(f_nir), np.asarray(f_syn)
    if f_nir.shape != f_syn.shape:
        raise ValueError('Feature shapes differ: {} and {}.'.format(
            f_nir.shape, f_syn.shape))
    return (f_nir + f_syn) / 2


class MetricsReport(object):
    """Recognition metrics of one fold or the aggregate of several.

    Attributes
    ----------
    rank1: float
        Rank-1 rate, the mean over folds for aggregates.

    vr_at_far: dict
        Verification rate per false accept rate.

    roc: np.ndarray, shape (n, 2)
        (FAR, VR) points. For aggregates those of the first fold.

    per_fold: list of MetricsReport
        Empty for single fold reports.

    rank1_std: float
        Standard deviation over folds, 0 for a single fold.

    vr_std: dict
        Standard deviation of the verification rates over folds.

    mode: str
        Evaluation mode.

    """

    def __init__(self, rank1: float, vr_at_far: Dict[float, float],
                 roc: Optional[np.ndarray] = None,
                 per_fold: Optional[List['MetricsReport']] = None,
                 rank1_std: float = 0.,
                 vr_std: Optional[Dict[float, float]] = None,
                 mode: str = 'raw'):
        self.rank1 = rank1
        self.vr_at_far = dict(vr_at_far)
        self.roc = np.zeros((0, 2)) if roc is None else np.asarray(roc)
        self.per_fold = [] if per_fold is None else per_fold
        self.rank1_std = rank1_std
        self.vr_std = {far: 0. for far in self.vr_at_far} if vr_std is None \
            else dict(vr_std)
        self.mode = mode

    def __eq__(self, other):
        return (isinstance(other, MetricsReport)
                and self.rank1 == other.rank1
                and self.vr_at_far == other.vr_at_far
                and self.rank1_std == other.rank1_std
                and self.vr_std == other.vr_std
                and self.mode == other.mode
                and self.per_fold == other.per_fold)

    @classmethod
    def from_similarity(cls, sim: SimilarityMatrix,
                        far_levels: Sequence[float],
                        mode: str = 'raw') -> 'MetricsReport':
        return cls(rank1=rank1(sim),
                   vr_at_far={float(far): verification_rate(sim, far)
                              for far in far_levels},
                   roc=roc_points(sim), mode=mode)

    @classmethod
    def aggregate(cls, reports: Sequence['MetricsReport']) \
            -> 'MetricsReport':
        """Mean and standard deviation over fold reports. """
        if not reports:
            raise ValueError('Cannot aggregate an empty list of reports.')
        fars = list(reports[0].vr_at_far)
        rank1s = np.array([report.rank1 for report in reports])
        vrs = {far: np.array([report.vr_at_far[far] for report in reports])
               for far in fars}
        return cls(rank1=float(rank1s.mean()),
                   vr_at_far={far: float(vrs[far].mean()) for far in fars},
                   roc=reports[0].roc, per_fold=list(reports),
                   rank1_std=float(rank1s.std()),
                   vr_std={far: float(vrs[far].std()) for far in fars},
                   mode=reports[0].mode)

    def to_frame(self) -> pd.DataFrame:
        """One row per fold followed by the rows 'mean' and 'std'. """
        fars = list(self.vr_at_far)
        columns = ['fold', 'mode', 'rank1'] + [
            'vr@far={!r}'.format(far) for far in fars]
        rows = [[str(k), fold.mode, fold.rank1]
                + [fold.vr_at_far[far] for far in fars]
                for k, fold in enumerate(self.per_fold)]
        rows.append(['mean', self.mode, self.rank1]
                    + [self.vr_at_far[far] for far in fars])
        rows.append(['std', self.mode, self.rank1_std]
                    + [self.vr_std[far] for far in fars])
        return pd.DataFrame(rows, columns=columns)

    def to_csv(self, path: str):
        self.to_frame().to_csv(path, index=False, float_format='%.17g')

    @classmethod
    def from_csv(cls, path: str) -> 'MetricsReport':
        """Reads a report written by :meth:`to_csv`. ROC points are not part
        of the file. """
        frame = pd.read_csv(path, dtype={'fold': str, 'mode': str},
                            float_precision='round_trip')
        far_columns = [column for column in frame.columns
                       if column.startswith('vr@far=')]
        fars = [float(re.sub('^vr@far=', '', column))
                for column in far_columns]

        def row_report(row):
            return cls(rank1=float(row['rank1']),
                       vr_at_far={far: float(row[column]) for far, column
                                  in zip(fars, far_columns)},
                       mode=row['mode'])

        rows = {row['fold']: row for _, row in frame.iterrows()}
        mean, std = row_report(rows['mean']), row_report(rows['std'])
        per_fold = [row_report(row) for fold, row in rows.items()
                    if fold not in ('mean', 'std')]
        return cls(rank1=mean.rank1, vr_at_far=mean.vr_at_far,
                   per_fold=per_fold, rank1_std=std.rank1,
                   vr_std=std.vr_at_far, mode=mean.mode)

    def roc_to_csv(self, path: str):
        pd.DataFrame(self.roc, columns=['far', 'vr']).to_csv(
            path, index=False, float_format='%.17g')


class OracleGenerator(object):
    """Renders the frontal VIS gallery view of the probe's identity.

    This is the perfect inverse of the data generation and bounds what any
    trained generator can achieve.

    Parameters
    ----------
    split: DatasetSplit
        Split with identity parameters.

    size: tuple of int
        Image size.

    quantize: bool
        Rounds the output to the 8 bit grid of stored images.

    """
    def __init__(self, split: synthgen.DatasetSplit, size: Tuple[int, int],
                 quantize: bool = True):
        if not split.identities:
            raise ProtocolError('The oracle needs the identity parameters of '
                                'the split.')
        self.split = split
        self.size = tuple(size)
        self.quantize = quantize

    def __call__(self, images: np.ndarray,
                 identities: Sequence[int]) -> np.ndarray:
        outputs = []
        for id in identities:
            if id not in self.split.identities:
                raise ProtocolError('Unknown identity {}.'.format(id),
                                    location=id)
            image = synthgen.gallery_sample(self.split.identities[id],
                                            self.size, self.split.seed).image
            outputs.append(data_container.quantize_image(image)
                           if self.quantize else image)
        return np.stack(outputs)


class CheckpointGenerator(object):
    """Synthesizes with the generator of a checkpoint. """

    def __init__(self, checkpoint: nets.Checkpoint):
        self.checkpoint = checkpoint

    def __call__(self, images: np.ndarray,
                 identities: Sequence[int]) -> np.ndarray:
        return trainer.synthesize(self.checkpoint, images)


class ProtocolEntry(NamedTuple):
    path: str
    identity: int


def _read_list(path: str) -> List[ProtocolEntry]:
    if not os.path.isfile(path):
        raise ProtocolError('{}: protocol file not found.'.format(path),
                            location=path)
    entries = []
    with open(path, 'r') as f:
        for number, line in enumerate(f, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2:
                raise ProtocolError('{}:{}: expected "<path> <id>".'.format(
                    path, number), location=path)
            try:
                entries.append(ProtocolEntry(fields[0], int(fields[1])))
            except ValueError:
                raise ProtocolError('{}:{}: identity must be an '
                                    'integer.'.format(path, number),
                                    location=path)
    return entries


def read_protocol(directory: str) \
        -> List[Tuple[List[ProtocolEntry], List[ProtocolEntry]]]:
    """Reads ``fold_<k>/gallery.txt`` and ``fold_<k>/probe.txt``.

    Returns
    -------
    folds: list of tuple
        (gallery entries, probe entries) per fold, ordered by k.

    Raises
    ------
    ProtocolError
        If the directory has no folds or a list is missing or malformed.

    """
    if not os.path.isdir(directory):
        raise ProtocolError('{}: protocol directory not found.'.format(
            directory), location=directory)
    folds = sorted((int(match.group(1)), name) for name in os.listdir(directory)
                   for match in [re.fullmatch(r'fold_(\d+)', name)] if match)
    if not folds:
        raise ProtocolError('{}: no fold_<k> directories.'.format(directory),
                            location=directory)
    return [(_read_list(os.path.join(directory, name, 'gallery.txt')),
             _read_list(os.path.join(directory, name, 'probe.txt')))
            for _, name in folds]


def _load_entries(data: str, entries: Sequence[ProtocolEntry],
                  manifest: pd.DataFrame,
                  spectrum: synthgen.Spectrum) -> List[synthgen.FaceSample]:
    """Samples of a protocol list.

    Images listed in the manifest keep its spectrum, pose and corruption
    mask. Others are taken as ``spectrum`` in frontal pose.

    """
    rows = manifest.set_index('path')
    samples = []
    for entry in entries:
        path = os.path.join(data, entry.path)
        if not os.path.isfile(path):
            raise ProtocolError('{}: image not found.'.format(path),
                                location=path)
        if entry.path not in rows.index:
            samples.append(synthgen.FaceSample(
                image=data_container.load_image(path),
                identity=entry.identity, spectrum=spectrum, pose=(0., 0.)))
            continue
        row = rows.loc[entry.path]
        if int(row.id) != entry.identity:
            raise ProtocolError(
                '{}: protocol identity {} differs from manifest identity '
                '{}.'.format(path, entry.identity, int(row.id)),
                location=path)
        samples.append(data_container.load_sample(
            data, entry.path, entry.identity, row.spectrum,
            pose=(row.yaw, row.pitch)))
    return samples


def _embed(embedder: nets.Embedder, images: np.ndarray,
           batch_size: int = 64) -> np.ndarray:
    features = []
    with torch.no_grad():
        for start in range(0, len(images), batch_size):
            features.append(nets.embed(embedder, images_to_tensor(
                images[start:start + batch_size])).double().numpy())
    return np.concatenate(features)


def evaluate_fold(embedder: nets.Embedder,
                  gallery: Sequence[synthgen.FaceSample],
                  probe: Sequence[synthgen.FaceSample], mode: str,
                  generator: Optional[Callable] = None,
                  far_levels: Sequence[float] = (.01, .001),
                  metric: str = 'cosine') -> MetricsReport:
    """Metrics of one gallery and probe set. """
    if mode not in MODES:
        raise ValueError('Unknown mode {!r}, expected one of {}.'.format(
            mode, ', '.join(MODES)))
    gallery_images = np.stack([sample.image for sample in gallery])
    probe_images = np.stack([sample.image for sample in probe])
    probe_ids = [sample.identity for sample in probe]
    gallery_feats = _embed(embedder, gallery_images)
    if mode == 'raw':
        probe_feats = _embed(embedder, probe_images)
    else:
        if generator is None:
            raise ValueError('Mode {!r} needs a generator.'.format(mode))
        probe_feats = _embed(embedder, np.asarray(
            generator(probe_images, probe_ids), dtype=np.float64))
        if mode == 'cfc_fuse':
            probe_feats = fuse_features(_embed(embedder, probe_images),
                                        probe_feats)
    sim = similarity_matrix(gallery_feats, probe_feats,
                            [sample.identity for sample in gallery],
                            probe_ids, metric)
    return MetricsReport.from_similarity(sim, far_levels, mode)


def run_protocol(checkpoint: Union[str, nets.Checkpoint],
                 data: Union[str, synthgen.DatasetSplit],
                 protocol: Optional[str] = None, mode: str = 'cfc',
                 generator: Optional[Callable] = None) -> MetricsReport:
    """Evaluates recognition via generation.

    The gallery is always embedded as it is. The recognizer is the embedder
    of the checkpoint.

    Parameters
    ----------
    checkpoint: str or Checkpoint
        Provides the configuration, the embedder and, unless ``generator``
        is given, the generator.

    data: str or DatasetSplit
        Dataset directory or split in memory.

    protocol: str, optional
        Protocol directory with one fold per subdirectory, relative paths
        resolved against the dataset directory. Without it the split's
        gallery and probes form a single fold.

    mode: str
        'raw', 'cfc' or 'cfc_fuse'.

    generator: Callable, optional
        Maps probe images (B, H, W, 3) and their identities to VIS images.

    Returns
    -------
    report: MetricsReport
        Aggregate over the folds.

    Raises
    ------
    ProtocolError
        For missing files and identity mismatches.

    """
    if isinstance(checkpoint, str):
        checkpoint = nets.load_checkpoint(checkpoint)
    config = checkpoint.config
    if generator is None:
        generator = CheckpointGenerator(checkpoint)

    if protocol is None:
        split = data_container.read_dataset(data) if isinstance(data, str) \
            else data
        folds = [(split.test_gallery, split.test_probe)]
    else:
        if not isinstance(data, str):
            raise ValueError('Protocol files need a dataset directory.')
        manifest = data_container.read_manifest(data)
        folds = [(_load_entries(data, gallery, manifest,
                                synthgen.Spectrum.VIS),
                  _load_entries(data, probe, manifest,
                                synthgen.Spectrum.NIR))
                 for gallery, probe in read_protocol(protocol)]

    reports = []
    for k, (gallery, probe) in enumerate(folds):
        report = evaluate_fold(checkpoint.networks.embedder, gallery, probe,
                               mode, generator, config.far_levels,
                               config.similarity)
        logger.info('fold %d, mode %s: rank-1 %.4f', k, mode, report.rank1)
        reports.append(report)
    return MetricsReport.aggregate(reports)
