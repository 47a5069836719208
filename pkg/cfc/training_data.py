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
"""This module stores information about a training run and its result.

Classes
-------
:class:`TrainingResult`
    Describes the information gained by a training run.

:class:`TrainingSummary`
    The loss values of every step, written to and read from the CSV
    training log.

"""

from typing import Dict, List, Optional

import pandas as pd

from cfc.losses import LOSS_NAMES, LossBundle

LOG_COLUMNS = ['step'] + list(LOSS_NAMES)


class TrainingResult(object):
    """
    Resulting data of a training run.

    An instance of this class is returned by the `Trainer` after the training
    has terminated.

    Attributes
    ----------
    termination_reason : string
        Reason for the termination as string.

    status : None or int
        The termination reason as integer. None if the training has not
        started.
        0: the maximum number of steps is reached.
        2: the perceptual loss no longer decreases.
        5: wall time exceeded.

    final_losses : LossBundle or None
        Losses of the last step.

    num_steps : int
        Number of training steps taken.

    seed : int
        Seed of the run.

    checkpoint : str or None
        Path of the final checkpoint.

    summary : TrainingSummary or None
        Losses of every step.

    training_stats : PerformanceStatistics or None
        Timing of the run.

    """

    def __init__(self, final_losses: Optional[LossBundle] = None,
                 num_steps: int = 0, seed: Optional[int] = None,
                 termination_reason: str = 'not started yet',
                 status: Optional[int] = None,
                 checkpoint: Optional[str] = None,
                 summary: Optional['TrainingSummary'] = None,
                 training_stats=None):
        self.final_losses = final_losses
        self.num_steps = num_steps
        self.seed = seed
        self.termination_reason = termination_reason
        self.status = status
        self.checkpoint = checkpoint
        self.summary = summary
        self.training_stats = training_stats

    def to_dict(self) -> Dict:
        """Writes the information held by this instance to a dictionary.

        Returns
        -------
        dictionary: dict
            The information stored in a class instance as dictionary.

        """
        return {'final_losses': self.final_losses,
                'num_steps': self.num_steps,
                'seed': self.seed,
                'termination_reason': self.termination_reason,
                'status': self.status,
                'checkpoint': self.checkpoint,
                'summary': self.summary,
                'training_stats': self.training_stats}

    @classmethod
    def from_dict(cls, data_dict: Dict) -> 'TrainingResult':
        """Initialize the class with the information held in a dictionary.
        """
        return cls(**data_dict)


class TrainingSummary(object):
    """Losses of every step of a training run.

    Attributes
    ----------
    steps : list of int
        Step index of every entry, strictly increasing.

    losses : list of LossBundle
        One bundle per step.

    """

    def __init__(self, steps: Optional[List[int]] = None,
                 losses: Optional[List[LossBundle]] = None):
        self.steps = [] if steps is None else steps
        self.losses = [] if losses is None else losses

    def __len__(self):
        return len(self.steps)

    def append(self, step: int, losses: LossBundle):
        if self.steps and step <= self.steps[-1]:
            raise ValueError('Steps must increase, got {} after {}.'.format(
                step, self.steps[-1]))
        self.steps.append(step)
        self.losses.append(losses)

    def to_frame(self) -> pd.DataFrame:
        rows = [[step] + [getattr(bundle, name) for name in LOSS_NAMES]
                for step, bundle in zip(self.steps, self.losses)]
        return pd.DataFrame(rows, columns=LOG_COLUMNS)

    def to_csv(self, path: str):
        """Writes the training log with header
        ``step,uv,g_t,d_t,g_f,d_f,perceptual,pixel,total_g``. """
        self.to_frame().to_csv(path, index=False, float_format='%.17g')

    @classmethod
    def from_csv(cls, path: str, lambda_high: float = 10.,
                 alpha_pixel: float = .01) -> 'TrainingSummary':
        """Reads a training log written by :meth:`to_csv`.

        Raises
        ------
        ValueError
            For a wrong header.

        """
        frame = pd.read_csv(path, float_precision='round_trip')
        if list(frame.columns) != LOG_COLUMNS:
            raise ValueError('{}: expected the columns {}, got {}.'.format(
                path, ','.join(LOG_COLUMNS), ','.join(frame.columns)))
        summary = cls()
        for row in frame.itertuples(index=False):
            summary.append(int(row.step), LossBundle(
                *(float(getattr(row, name)) for name in LOSS_NAMES),
                lambda_high=lambda_high, alpha_pixel=alpha_pixel))
        return summary
