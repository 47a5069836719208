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
The desk-scale benchmark: a synthetic dataset of 20 identities at 64 x 64,
a few minutes of CPU training and the evaluation in all three modes.

The benchmark holds if for every seed the rank-1 rate of mode 'cfc' exceeds
the one of mode 'raw' by at least ``min_gain`` and mode 'cfc_fuse' stays
within ``fuse_tolerance`` of mode 'cfc'.

"""

import logging
import os
import tempfile
from typing import Dict, Optional, Sequence

from cfc import hfreval, nets, synthgen, trainer
from cfc.config import RunConfig

logger = logging.getLogger(__name__)

seeds = (0, 1, 2)
min_gain = .10
fuse_tolerance = .01


def run_seed(config: RunConfig, seed: int,
             out: str) -> Dict[str, hfreval.MetricsReport]:
    """Generates, trains and evaluates one seed. """
    config = config.replace(seed=seed)
    split = synthgen.make_dataset(config)
    result = trainer.train(config, split, out=out)
    checkpoint = nets.load_checkpoint(result.checkpoint)
    reports = {}
    for mode in hfreval.MODES:
        reports[mode] = hfreval.run_protocol(checkpoint, split, mode=mode)
        reports[mode].to_csv(os.path.join(out, 'report_{}.csv'.format(mode)))
    logger.info('seed %d: %s', seed, ', '.join(
        '{} {:.3f}'.format(mode, report.rank1)
        for mode, report in reports.items()))
    return reports


def holds(reports: Dict[str, hfreval.MetricsReport]) -> bool:
    return (reports['cfc'].rank1 - reports['raw'].rank1 >= min_gain
            and reports['cfc_fuse'].rank1 >= reports['cfc'].rank1
            - fuse_tolerance)


def run(seeds: Sequence[int] = seeds, config: Optional[RunConfig] = None,
        out: Optional[str] = None) \
        -> Dict[int, Dict[str, hfreval.MetricsReport]]:
    """Runs the benchmark for every seed.

    Parameters
    ----------
    seeds: sequence of int

    config: RunConfig, optional
        Defaults to the default configuration.

    out: str, optional
        Every seed writes into ``<out>/seed_<seed>``. A temporary directory
        is used if omitted.

    Returns
    -------
    reports: dict
        seed -> mode -> MetricsReport

    """
    config = RunConfig() if config is None else config
    out = tempfile.mkdtemp(prefix='cfc-bench-') if out is None else out
    results = {}
    for seed in seeds:
        directory = os.path.join(out, 'seed_{}'.format(seed))
        os.makedirs(directory, exist_ok=True)
        results[seed] = run_seed(config, seed, directory)
    return results
