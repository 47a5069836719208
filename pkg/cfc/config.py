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
"""Run configuration.

All knobs of data generation, the networks, the losses, the optimizer and
the evaluation live in a single flat key-value configuration. The defaults
reproduce the desk-scale benchmark.

The file format is plain text with one ``key = value`` pair per line. A
``#`` starts a comment. Values are coerced to the type of the default value.

Classes
-------
:class:`RunConfig`
    Resolved configuration.

:class:`ConfigError`
    Raised for unknown keys and malformed values.

"""

import copy
from typing import Any, Dict, Mapping, Optional

from cfc.util import git_blob_hash

default_run_config = {
    # synthetic data
    'image_size': 64,
    'texture_size': 64,
    'n_identities': 20,
    'n_train_identities': 10,
    'nir_per_identity': 12,
    'vis_per_identity': 4,
    'max_yaw': 45.,
    'max_pitch': 20.,
    'vis_pose_jitter': 5.,
    'max_occluders': 2,
    'occluder_radius': .15,
    'separation_floor': .05,
    'n_folds': 1,
    # networks
    'rep_dim': 64,
    'feature_channels': 32,
    'pose_width': 16,
    'pose_depth': 3,
    'texture_width': 16,
    'texture_depth': 3,
    'fusion_width': 32,
    'fusion_layers': 4,
    'disc_width': 16,
    'disc_depth': 3,
    'pair_hidden': 64,
    'embed_dim': 64,
    'embed_width': 16,
    # losses
    'lambda_high': 10.,
    'alpha_pixel': .01,
    'pixel_target': 'input',
    'perceptual_layer': 'embedding',
    'image_adversary': 'multiscale',
    'use_perceptual': True,
    # optimizer and stopping rule
    'learning_rate': 2e-4,
    'beta1': .5,
    'beta2': .999,
    'adam_eps': 1e-8,
    'batch_identities': 8,
    'max_steps': 2000,
    'eval_interval': 50,
    'patience': 10,
    'min_relative_improvement': 1e-3,
    'max_wall_time': 10 * 60.,
    'uv_warmup_steps': 0,
    # recognizer
    'embedder_identities': 40,
    'embedder_samples': 8,
    'embedder_steps': 300,
    'embedder_lr': 1e-3,
    # evaluation
    'similarity': 'cosine',
    'far_levels': (.01, .001),
    'seed': 0,
}

_choices = {
    'pixel_target': ('input', 'matched_vis'),
    'perceptual_layer': ('embedding', 'pooling'),
    'image_adversary': ('multiscale', 'single', 'none'),
    'similarity': ('cosine', 'euclidean'),
}


class ConfigError(ValueError):
    """Raised for unknown configuration keys or malformed values. """

    def __init__(self, key: str, message: str):
        super().__init__('{}: {}'.format(key, message))
        self.key = key


def _coerce(key: str, raw: Any, default: Any) -> Any:
    """Converts raw to the type of default. """
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ('true', 'yes', '1', 'on'):
            return True
        if text in ('false', 'no', '0', 'off'):
            return False
        raise ConfigError(key, 'expected a boolean, got {!r}'.format(raw))
    if isinstance(default, tuple):
        if isinstance(raw, (tuple, list)):
            items = raw
        else:
            items = [item for item in str(raw).split(',') if item.strip()]
        try:
            return tuple(float(item) for item in items)
        except ValueError:
            raise ConfigError(
                key, 'expected comma separated numbers, got {!r}'.format(raw))
    try:
        if isinstance(default, int):
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError
            return int(str(raw).strip()) if not isinstance(raw, (int, float)) \
                else int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(key, 'expected {}, got {!r}'.format(
            type(default).__name__, raw))
    value = str(raw).strip()
    if key in _choices and value not in _choices[key]:
        raise ConfigError(key, 'must be one of {}, got {!r}'.format(
            ', '.join(_choices[key]), value))
    return value


class RunConfig(object):
    """Resolved run configuration.

    Values are accessible as attributes, e.g. ``config.image_size``.

    Parameters
    ----------
    overrides: dict, optional
        Values replacing the defaults. Unknown keys raise a `ConfigError`.

    """

    def __init__(self, overrides: Optional[Mapping[str, Any]] = None):
        self._values = copy.deepcopy(default_run_config)
        if overrides:
            for key, value in overrides.items():
                self[key] = value
        self.check()

    def __getattr__(self, key):
        values = self.__dict__.get('_values')
        if values is not None and key in values:
            return values[key]
        raise AttributeError(key)

    def __getitem__(self, key: str):
        return self._values[key]

    def __setitem__(self, key: str, value: Any):
        if key not in default_run_config:
            raise ConfigError(key, 'unknown configuration key')
        self._values[key] = _coerce(key, value, default_run_config[key])

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self._values == other._values

    def replace(self, **overrides) -> 'RunConfig':
        """A copy with some values replaced. """
        values = dict(self._values)
        values.update(overrides)
        return RunConfig(values)

    def to_dict(self) -> Dict[str, Any]:
        return dict(self._values)

    def check(self):
        """Verifies the relations between values.

        The dataset keys are checked by :func:`cfc.synthgen.make_dataset`.

        Raises
        ------
        ConfigError
            Naming the first key with an inconsistent value.

        """
        v = self._values
        for key in ('image_size', 'texture_size'):
            if v[key] < 8 or v[key] % 2:
                raise ConfigError(key, 'must be an even number >= 8')
        if v['pose_depth'] < 1 or v['image_size'] % (2 ** v['pose_depth']):
            raise ConfigError('pose_depth',
                              'image_size must be divisible by 2**pose_depth')
        if v['texture_depth'] < 1 \
                or v['image_size'] % (2 ** v['texture_depth']) \
                or v['texture_size'] % (2 ** v['texture_depth']):
            raise ConfigError(
                'texture_depth',
                'image and texture size must be divisible by 2**texture_depth')
        for key in ('eval_interval', 'patience', 'batch_identities',
                    'max_steps', 'n_folds'):
            if v[key] < 1:
                raise ConfigError(key, 'must be positive')
        if any(not 0 < far < 1 for far in v['far_levels']):
            raise ConfigError('far_levels', 'FAR levels must lie in (0, 1)')

    @property
    def termination_conditions(self) -> Dict[str, float]:
        """The stopping rule of the trainer. """
        return {
            'max_steps': self.max_steps,
            'eval_interval': self.eval_interval,
            'patience': self.patience,
            'min_relative_improvement': self.min_relative_improvement,
            'max_wall_time': self.max_wall_time,
        }

    @property
    def architecture(self) -> Dict[str, Any]:
        """Architecture descriptor stored alongside network parameters. """
        keys = ('image_size', 'texture_size', 'rep_dim', 'feature_channels',
                'pose_width', 'pose_depth', 'texture_width', 'texture_depth',
                'fusion_width', 'fusion_layers', 'disc_width', 'disc_depth',
                'pair_hidden', 'embed_dim', 'embed_width', 'image_adversary')
        return {key: self._values[key] for key in keys}

    def to_text(self) -> str:
        """Deterministic text form that :meth:`from_text` parses back. """
        lines = []
        for key in sorted(self._values):
            value = self._values[key]
            if isinstance(value, bool):
                text = 'true' if value else 'false'
            elif isinstance(value, tuple):
                text = ','.join(repr(item) for item in value)
            else:
                text = repr(value) if isinstance(value, float) else str(value)
            lines.append('{} = {}'.format(key, text))
        return '\n'.join(lines) + '\n'

    def content_hash(self) -> str:
        """Git-style content hash of :meth:`to_text`. """
        return git_blob_hash(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> 'RunConfig':
        """Parses the key-value format.

        Raises
        ------
        ConfigError
            For unknown keys, lines without '=' and malformed values.

        """
        overrides = {}
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError('line {}'.format(number),
                                  'expected "key = value"')
            key, value = (part.strip() for part in line.split('=', 1))
            overrides[key] = value
        return cls(overrides)

    @classmethod
    def from_file(cls, path: str) -> 'RunConfig':
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_text(f.read())

    def to_file(self, path: str):
        with open(path, 'w', encoding='utf-8') as f:
            f.write(self.to_text())
