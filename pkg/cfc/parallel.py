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
"""Independent training runs in a process pool. """

import os
from multiprocessing import Pool
from typing import Optional, Sequence

from cfc import trainer
from cfc.config import RunConfig
from cfc.data_container import TrainingContainer
from cfc.nets import Embedder
from cfc.synthgen import DatasetSplit
from cfc.util import configure_threads, thread_cap


def run_training(config: RunConfig, dataset: DatasetSplit, seed: int,
                 out: Optional[str], embedder: Optional[Embedder]):
    """ Executes one training run.

    Parameters
    ----------
    config: RunConfig

    dataset: DatasetSplit

    seed: int
        Seed of the run.

    out: str or None
        Output directory of the run.

    embedder: Embedder or None
        Frozen recognizer, pretrained per seed if None.

    Returns
    -------
    result: TrainingResult
        The result of the training.

    """
    configure_threads()
    return trainer.train(config, dataset, out=out, embedder=embedder,
                         seed=seed)


def run_training_parallel(config: RunConfig, dataset: DatasetSplit,
                          seeds: Sequence[int],
                          processes: Optional[int] = None,
                          out: Optional[str] = None,
                          embedder: Optional[Embedder] = None) \
        -> TrainingContainer:
    """ Trains one model per seed in parallel processes.

    Parameters
    ----------
    config: RunConfig

    dataset: DatasetSplit

    seeds: list of int

    processes: int, optional
        If an integer is given, then the runs are distributed over this
        number of processes. If 1 then no parallel computing is applied.
        If None then ``CFC_THREADS`` is used if set and cpu_count()
        otherwise.

    out: str, optional
        Every run writes into ``<out>/seed_<seed>``.

    embedder: Embedder, optional
        Shared frozen recognizer.

    Returns
    -------
    data: TrainingContainer
        A TrainingContainer in which the TrainingResults are saved.

    """
    processes = thread_cap() if processes is None else processes
    arguments = [
        (config, dataset, seed,
         None if out is None else os.path.join(out, 'seed_{}'.format(seed)),
         embedder)
        for seed in seeds]
    if processes == 1:
        results = [run_training(*args) for args in arguments]
    else:
        with Pool(processes=processes) as pool:
            results = pool.starmap(run_training, arguments)
    data = TrainingContainer(storage_path=out)
    for result in results:
        data.append_training_result(result)
    return data
