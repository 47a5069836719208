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
"""Statistics of the use of computational resources. """

from typing import Optional


class PerformanceStatistics(object):
    """Stores performance statistics of a training run.

    Attributes
    ----------
    start_t_train: float or None
        Time of the training start. None if it has not been set yet.

    end_t_train: float or None
        Time of the training end. None if it has not been set yet.

    d_step_times: list of float
        Durations of the discriminator updates.

    g_step_times: list of float
        Durations of the generator updates.

    """
    def __init__(self):
        self.start_t_train = None
        self.end_t_train = None
        self.d_step_times = []
        self.g_step_times = []

    @property
    def total_time(self) -> Optional[float]:
        """Wall time of the run, None before it ended. """
        if self.start_t_train is None or self.end_t_train is None:
            return None
        return self.end_t_train - self.start_t_train

    @property
    def mean_step_time(self) -> float:
        """Mean duration of one discriminator plus one generator update. """
        n = max(len(self.g_step_times), 1)
        return (sum(self.d_step_times) + sum(self.g_step_times)) / n
