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
"""This file contains some functions for the analysis of the training and
the evaluation.

Classes
-------
:class:`Analyser`
    Holds convenience functions to visualize training runs.

Functions
---------
:func:`plot_roc`
    Plots the ROC curves of evaluation reports.

:func:`mosaic`
    Grid of input, synthesized and ground truth images.

:func:`save_mosaic`
    Writes a mosaic as PNG.

"""

from typing import Dict, Optional, Sequence

import numpy as np
import matplotlib.pyplot as plt
from PIL import Image

from cfc import data_container
from cfc.hfreval import MetricsReport
from cfc.losses import LOSS_NAMES


class Analyser:
    """Holds convenience functions to visualize training runs.

    The Analyser plots the loss histories stored in a
    :class:`cfc.data_container.TrainingContainer` and summarizes the timing
    of the runs.

    """
    def __init__(self, data: data_container.TrainingContainer):
        self.data = data

    def losses(self, n: int = 0) -> np.ndarray:
        """Loss history of run n.

        Returns
        -------
        losses: numpy array, shape (n_steps, n_terms)
            Columns ordered as :data:`cfc.losses.LOSS_NAMES`.

        """
        summary = self.data.summaries[n]
        if summary is None or not len(summary):
            return np.zeros((0, len(LOSS_NAMES)))
        return summary.to_frame()[list(LOSS_NAMES)].to_numpy()

    def plot_losses(self, n: int = 0, names: Sequence[str] = LOSS_NAMES,
                    log_y: bool = False, ax=None):
        """Plots the loss terms as function of the training step.

        Parameters
        ----------
        n: int, optional
            Number of the training run. Defaults to 0.

        names: sequence of str, optional
            Loss terms to plot.

        log_y: bool, optional
            If True then the losses are plotted logarithmically.

        ax: matplotlib.pyplot.axes
            Axes element in which the data is plotted. If not specified, a new
            one will be created.

        Returns
        -------
        ax: matplotlib.pyplot.axes
            Axes with the plot.

        """
        if ax is None:
            _, ax = plt.subplots()

        frame = self.data.summaries[n].to_frame()
        for name in names:
            ax.plot(frame['step'], frame[name], label=name)
        ax.set_ylabel('Loss')
        ax.set_xlabel('Step')
        ax.legend()
        if log_y:
            ax.set_yscale('log')

        return ax

    def training_times(self) -> np.ndarray:
        """Wall-clock time of every run. """
        return np.array([stats.total_time for stats in self.data.training_stats])

    def mean_step_times(self) -> np.ndarray:
        """Mean duration of a discriminator plus generator step per run. """
        return np.array([stats.mean_step_time
                         for stats in self.data.training_stats])


def plot_roc(reports: Dict[str, MetricsReport], ax=None):
    """Plots the ROC of several reports, labeled by the dictionary keys. """
    if ax is None:
        _, ax = plt.subplots()

    for label, report in reports.items():
        ax.step(report.roc[:, 0], report.roc[:, 1], where='post',
                label='{} (rank-1 {:.3f})'.format(label, report.rank1))
    ax.set_xscale('log')
    ax.set_xlabel('False accept rate')
    ax.set_ylabel('Verification rate')
    ax.set_ylim(0, 1.02)
    ax.legend(loc='lower right')
    return ax


def mosaic(rows: Sequence[Sequence[np.ndarray]],
           padding: int = 2) -> np.ndarray:
    """Tiles images of shape (H, W, 3) into a grid.

    Parameters
    ----------
    rows: sequence of sequences of np.ndarray
        Each inner sequence is one row, e.g. input, synthesized and ground
        truth of one probe.

    padding: int
        White pixels between tiles.

    Returns
    -------
    grid: np.ndarray, shape (n_rows (H + p) + p, n_cols (W + p) + p, 3)
        Values in [0, 1].

    """
    if not rows or not rows[0]:
        raise ValueError('Need at least one image.')
    height, width = np.asarray(rows[0][0]).shape[:2]
    n_cols = max(len(row) for row in rows)
    grid = np.ones((len(rows) * (height + padding) + padding,
                    n_cols * (width + padding) + padding, 3))
    for i, row in enumerate(rows):
        for j, image in enumerate(row):
            image = np.asarray(image)
            if image.shape[:2] != (height, width):
                raise ValueError('All images must have the size {}.'.format(
                    (height, width)))
            if image.ndim == 2:
                image = np.repeat(image[..., None], 3, axis=-1)
            top = padding + i * (height + padding)
            left = padding + j * (width + padding)
            grid[top:top + height, left:left + width] = np.clip(image, 0, 1)
    return grid


def save_mosaic(path: str, rows: Sequence[Sequence[np.ndarray]],
                padding: int = 2, scale: Optional[int] = None):
    """Writes :func:`mosaic` of the rows as PNG, optionally upscaled by an
    integer factor. """
    grid = data_container.quantize_image(mosaic(rows, padding))
    image = Image.fromarray(np.round(grid * 255).astype(np.uint8))
    if scale is not None and scale > 1:
        image = image.resize((image.width * scale, image.height * scale),
                             Image.NEAREST)
    image.save(path)
