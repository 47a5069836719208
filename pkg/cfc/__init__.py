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
"""Cross-spectral face completion: NIR to VIS face synthesis with a
pose-normalizing generator, and recognition via generation. """

from . import analyser, config, data_container, gradients, hfreval, losses, \
    nets, parallel, performance_statistics, synthgen, trainer, \
    training_data, util, uvgeom, wavelet
from .analyser import Analyser
from .config import ConfigError, RunConfig
from .data_container import TrainingContainer, read_dataset, write_dataset
from .hfreval import MetricsReport, OracleGenerator, SimilarityMatrix, \
    fuse_features, rank1, run_protocol, similarity_matrix, verification_rate
from .losses import LossBundle
from .nets import Generator, build_networks, load_checkpoint, \
    pretrain_embedder, save_checkpoint
from .parallel import run_training_parallel
from .performance_statistics import PerformanceStatistics
from .synthgen import DatasetSplit, FaceSample, Spectrum, make_dataset
from .trainer import Trainer, synthesize, train
from .training_data import TrainingResult, TrainingSummary
from .uvgeom import UVField, warp
from .wavelet import haar_decompose, haar_reconstruct

__all__ = [
    'Analyser', 'ConfigError', 'RunConfig', 'TrainingContainer',
    'read_dataset', 'write_dataset', 'MetricsReport', 'OracleGenerator',
    'SimilarityMatrix', 'fuse_features', 'rank1', 'run_protocol',
    'similarity_matrix', 'verification_rate', 'LossBundle', 'Generator',
    'build_networks', 'load_checkpoint', 'pretrain_embedder',
    'save_checkpoint', 'run_training_parallel', 'PerformanceStatistics',
    'DatasetSplit', 'FaceSample', 'Spectrum', 'make_dataset', 'Trainer',
    'synthesize', 'train', 'TrainingResult', 'TrainingSummary', 'UVField',
    'warp', 'haar_decompose', 'haar_reconstruct'
]

__version__ = '0.1.0'
__license__ = 'GNU GPLv3+'
__author__ = 'The cfc developers'
