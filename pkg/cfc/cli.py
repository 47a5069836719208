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
"""Command line interface.

``cfc <subcommand> [options]`` with the subcommands

gen-data
    Generates a synthetic dataset and its fold protocols.

train
    Trains a model on a dataset directory.

synth
    Translates NIR images with a checkpoint.

eval
    Evaluates recognition via generation and writes a metrics CSV.

report
    Writes loss curves, ROC curves and image mosaics.

Every subcommand writes the resolved configuration ``config.resolved`` and
its hash ``config.hash`` into its output directory. Failures print one line
``error: <kind>: <message>`` to stderr. The exit code is 2 for usage errors,
3 for invalid configurations and 1 for any other failure.

Functions
---------
:func:`dispatch`
    Runs a command line and returns the exit code.

:func:`main`
    Console script entry point.

"""

import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from cfc import (analyser, data_container, hfreval, nets,  # noqa: E402
                 synthgen, trainer)
from cfc.config import ConfigError, RunConfig  # noqa: E402
from cfc.training_data import TrainingSummary  # noqa: E402
from cfc.util import configure_threads  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3

IMAGE_SUFFIXES = ('.png', '.jpg', '.jpeg', '.bmp')


class _ArgumentParser(argparse.ArgumentParser):
    """Prints the usage and raises SystemExit(2) on unknown arguments. """

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, 'error: usage: {}\n'.format(message))


def _parse_overrides(items: Optional[Sequence[str]]) -> dict:
    overrides = {}
    for item in items or ():
        key, sep, value = item.partition('=')
        if not sep:
            raise ConfigError(item, 'expected key=value')
        overrides[key.strip()] = value.strip()
    return overrides


def _load_config(args) -> RunConfig:
    config = RunConfig() if args.config is None \
        else RunConfig.from_file(args.config)
    overrides = _parse_overrides(args.set)
    if getattr(args, 'seed', None) is not None:
        overrides['seed'] = args.seed
    if overrides:
        config = config.replace(**overrides)
    config.check()
    return config


def _write_metadata(config: RunConfig, out: str, prefix: str = ''):
    os.makedirs(out, exist_ok=True)
    config.to_file(os.path.join(out, prefix + 'config.resolved'))
    with open(os.path.join(out, prefix + 'config.hash'), 'w') as f:
        f.write(config.content_hash() + '\n')


def gen_data(args) -> int:
    config = _load_config(args)
    _write_metadata(config, args.out)
    split = synthgen.make_dataset(config)
    data_container.write_dataset(split, args.out)
    data_container.write_protocols(args.out, config.n_folds, config.seed)
    logger.info('Wrote %d training, %d gallery and %d probe samples to %s.',
                len(split.train), len(split.test_gallery),
                len(split.test_probe), args.out)
    return 0


def train(args) -> int:
    config = _load_config(args)
    _write_metadata(config, args.out)
    split = data_container.read_dataset(args.data)
    conditions = config.termination_conditions
    if args.max_steps is not None:
        conditions['max_steps'] = args.max_steps
    embedder = nets.pretrain_embedder(config, config.seed)
    model_trainer = trainer.Trainer(config, split, embedder, seed=config.seed,
                                    termination_conditions=conditions,
                                    out=args.out, progress=args.progress)
    state = None if args.resume is None else model_trainer.load(args.resume)
    result = model_trainer.run(state)
    logger.info('%s after %d steps, checkpoint %s.',
                result.termination_reason, result.num_steps,
                result.checkpoint)
    return 0


def _input_images(path: str) -> List[str]:
    if os.path.isdir(path):
        return sorted(os.path.join(path, name) for name in os.listdir(path)
                      if name.lower().endswith(IMAGE_SUFFIXES))
    if not os.path.isfile(path):
        raise FileNotFoundError('{}: no such file or directory.'.format(path))
    return [path]


def synth(args) -> int:
    checkpoint = nets.load_checkpoint(args.ckpt)
    _write_metadata(checkpoint.config, args.out)
    for path in _input_images(args.input):
        output = trainer.synthesize(checkpoint,
                                    data_container.load_image(path))
        name = os.path.splitext(os.path.basename(path))[0] + '.png'
        data_container.save_image(os.path.join(args.out, name), output)
        logger.debug('Synthesized %s.', path)
    return 0


def _report_path(out: str) -> str:
    if out.lower().endswith('.csv'):
        return out
    return os.path.join(out, 'report.csv')


def evaluate(args) -> int:
    checkpoint = nets.load_checkpoint(args.ckpt)
    report_path = _report_path(args.out)
    if report_path == args.out:
        # metadata of a report file sits next to it under its name
        _write_metadata(checkpoint.config,
                        os.path.dirname(report_path) or os.curdir,
                        os.path.splitext(os.path.basename(report_path))[0]
                        + '.')
    else:
        _write_metadata(checkpoint.config, args.out)
    report = hfreval.run_protocol(checkpoint, args.data, args.protocol,
                                  args.mode)
    report.to_csv(report_path)
    report.roc_to_csv(os.path.splitext(report_path)[0] + '_roc.csv')
    print('rank1={:.6f} {}'.format(report.rank1, ' '.join(
        'vr@far={}={:.6f}'.format(far, vr)
        for far, vr in report.vr_at_far.items())))
    return 0


def report(args) -> int:
    checkpoint = nets.load_checkpoint(args.ckpt)
    _write_metadata(checkpoint.config, args.out)
    split = data_container.read_dataset(args.data)

    probes = split.test_probe[:args.n_images]
    gallery = {sample.identity: sample.image for sample in split.test_gallery}
    synthesized = trainer.synthesize(
        checkpoint, [sample.image for sample in probes]) if probes else []
    rows = [[probe.image, output, gallery.get(probe.identity, output)]
            for probe, output in zip(probes, synthesized)]
    if rows:
        analyser.save_mosaic(os.path.join(args.out, 'mosaic.png'), rows,
                             scale=args.scale)

    reports = {mode: hfreval.run_protocol(checkpoint, split, mode=mode)
               for mode in hfreval.MODES}
    for mode, mode_report in reports.items():
        mode_report.to_csv(os.path.join(args.out,
                                        'report_{}.csv'.format(mode)))
    ax = analyser.plot_roc(reports)
    ax.figure.savefig(os.path.join(args.out, 'roc.png'))
    plt.close(ax.figure)

    if args.log is not None:
        container = data_container.TrainingContainer(
            seeds=[checkpoint.config.seed], final_losses=[None],
            checkpoints=[args.ckpt], status=[None],
            summaries=[TrainingSummary.from_csv(args.log)],
            training_stats=[None])
        ax = analyser.Analyser(container).plot_losses(log_y=args.log_y)
        ax.figure.savefig(os.path.join(args.out, 'losses.png'))
        plt.close(ax.figure)
    return 0


def _add_config_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help='key = value configuration file')
    parser.add_argument('--set', action='append', metavar='KEY=VALUE',
                        help='overrides a configuration key')
    parser.add_argument('--seed', type=int, help='overrides the seed')


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog='cfc', description='Cross-spectral face completion: NIR to VIS '
                                'face synthesis and recognition via '
                                'generation.')
    parser.add_argument('--verbose', '-v', action='store_true',
                        help='debug logging')
    subparsers = parser.add_subparsers(dest='command', metavar='subcommand',
                                       parser_class=_ArgumentParser)
    subparsers.required = True

    sub = subparsers.add_parser('gen-data', help='generate a synthetic '
                                                 'dataset')
    _add_config_arguments(sub)
    sub.add_argument('--out', required=True, help='dataset directory')
    sub.set_defaults(handler=gen_data)

    sub = subparsers.add_parser('train', help='train a model')
    _add_config_arguments(sub)
    sub.add_argument('--data', required=True, help='dataset directory')
    sub.add_argument('--out', required=True, help='run directory')
    sub.add_argument('--max-steps', type=int, help='overrides max_steps')
    sub.add_argument('--resume', help='checkpoint to continue from')
    sub.add_argument('--progress', action='store_true',
                     help='show a progress bar')
    sub.set_defaults(handler=train)

    sub = subparsers.add_parser('synth', help='translate NIR images to VIS')
    sub.add_argument('--ckpt', required=True, help='checkpoint file')
    sub.add_argument('--in', dest='input', required=True,
                     help='image file or directory')
    sub.add_argument('--out', required=True, help='output directory')
    sub.set_defaults(handler=synth)

    sub = subparsers.add_parser('eval', help='evaluate recognition')
    sub.add_argument('--ckpt', required=True, help='checkpoint file')
    sub.add_argument('--data', required=True, help='dataset directory')
    sub.add_argument('--protocol', help='protocol directory with fold_<k> '
                                        'subdirectories')
    sub.add_argument('--mode', choices=hfreval.MODES, default='cfc')
    sub.add_argument('--out', required=True,
                     help='report CSV file or directory')
    sub.set_defaults(handler=evaluate)

    sub = subparsers.add_parser('report', help='plots and image mosaics')
    sub.add_argument('--ckpt', required=True, help='checkpoint file')
    sub.add_argument('--data', required=True, help='dataset directory')
    sub.add_argument('--log', help='training log CSV')
    sub.add_argument('--log-y', action='store_true',
                     help='logarithmic loss axis')
    sub.add_argument('--n-images', type=int, default=8,
                     help='number of probes in the mosaic')
    sub.add_argument('--scale', type=int, default=2,
                     help='upscaling factor of the mosaic')
    sub.add_argument('--out', required=True, help='output directory')
    sub.set_defaults(handler=report)
    return parser


def _fail(kind: str, message) -> None:
    text = ' '.join(str(message).split())
    print('error: {}: {}'.format(kind, text), file=sys.stderr)


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Runs the command line argv and returns its exit code. """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit:
        return exit.code if isinstance(exit.code, int) else EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(name)s %(levelname)s: %(message)s')
    configure_threads()
    try:
        return args.handler(args)
    except ConfigError as error:
        _fail('config', error)
        return EXIT_CONFIG
    except Exception as error:
        logger.debug('Command failed.', exc_info=True)
        _fail(type(error).__name__, error)
        return EXIT_FAILURE


def main():
    sys.exit(dispatch())


if __name__ == '__main__':
    main()
