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
"""Alternating adversarial training.

Every step first updates the discriminators on a batch and then the
generator on the same batch. A batch holds, per identity, one NIR sample
and two distinct VIS samples: the anchor and its companion. The generator
translates the NIR samples and the VIS companions.

The representation pair discriminator sees (companion, anchor) as real and
(NIR, anchor) as synthetic pairs. The image discriminators compare the VIS
anchors with the generator outputs, on the two wavelet bands or on the full
image depending on ``image_adversary``.

Training stops at ``max_steps``, when the wall time is exceeded, or when
the mean perceptual loss over the last evaluations fails to improve for
``patience`` consecutive evaluations.

Classes
-------
:class:`Trainer`
    Runs the training.

:class:`TrainState`
    Networks, optimizers, step counter, stopping history and random state.

:class:`Batch`
    Collated tensors of one step.

:class:`WallTimeExceeded`
    Raised when the time limit of the training is exceeded.

:class:`TrainingDiverged`
    Raised when a loss is not finite.

:class:`MissingAnchors`
    Raised for batches without VIS anchors.

Functions
---------
:func:`train`
    Trains a model on a dataset split.

:func:`synthesize`
    Translates NIR images with a trained model.

"""

import logging
import os
import tempfile
import time
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import torch
from tqdm import tqdm

from cfc import losses, nets, synthgen
from cfc.config import RunConfig
from cfc.performance_statistics import PerformanceStatistics
from cfc.training_data import TrainingResult, TrainingSummary
from cfc.util import images_to_tensor, tensor_to_images
from cfc.uvgeom import UVField
from cfc.wavelet import haar_decompose, split_bands

logger = logging.getLogger(__name__)

default_termination_conditions = {
    'max_steps': 2000,
    'eval_interval': 50,
    'patience': 10,
    'min_relative_improvement': 1e-3,
    'max_wall_time': 10 * 60.,
}


class WallTimeExceeded(Exception):
    """Raised when the time limit for the training is exceeded. """
    pass


class TrainingDiverged(Exception):
    """Raised when a loss becomes NaN or infinite.

    Attributes
    ----------
    checkpoint: str
        Path of the diagnostic checkpoint written before raising.

    """
    def __init__(self, step: int, checkpoint: str):
        super().__init__('training diverged at step {}, diagnostic '
                         'checkpoint {}'.format(step, checkpoint))
        self.step = step
        self.checkpoint = checkpoint


class MissingAnchors(ValueError):
    """Raised when an identity of a batch lacks two VIS samples. """
    pass


class Batch(NamedTuple):
    """Tensors of one training step, k identities.

    Attributes
    ----------
    identities: list of int
        Identity of every row.

    nir: torch.Tensor, shape (k, 3, H, W)

    vis_anchor: torch.Tensor, shape (k, 3, H, W)

    vis_companion: torch.Tensor, shape (k, 3, H, W)

    """
    identities: List[int]
    nir: torch.Tensor
    vis_anchor: torch.Tensor
    vis_companion: torch.Tensor

    @property
    def generator_input(self) -> torch.Tensor:
        """NIR samples followed by the VIS companions. """
        return torch.cat([self.nir, self.vis_companion])

    @property
    def spectrum(self) -> torch.Tensor:
        k = len(self.identities)
        return torch.cat([torch.ones(k), torch.zeros(k)]).to(self.nir.dtype)


class TrainState(object):
    """Mutable state of a training run.

    Attributes
    ----------
    networks: Networks
        Generator, discriminators and the frozen embedder.

    g_optimizer, d_optimizer: torch.optim.Adam
        Optimizers of the generator and of all discriminators.

    step: int
        Number of completed steps.

    rng: np.random.Generator
        Batch sampling.

    indicator: list of float
        Perceptual loss of every step since the last evaluation.

    history: list of float
        Mean perceptual loss of the last ``patience`` evaluations.

    best: float
        Best windowed mean so far.

    stale: int
        Consecutive evaluations without sufficient improvement.

    summary: TrainingSummary

    """
    def __init__(self, networks: nets.Networks, config: RunConfig, seed: int):
        self.networks = networks
        betas = (config.beta1, config.beta2)
        self.g_optimizer = torch.optim.Adam(
            networks.generator.parameters(), lr=config.learning_rate,
            betas=betas, eps=config.adam_eps)
        self.d_optimizer = torch.optim.Adam(
            networks.discriminators.parameters(), lr=config.learning_rate,
            betas=betas, eps=config.adam_eps)
        self.step = 0
        self.rng = np.random.default_rng(seed)
        self.indicator: List[float] = []
        self.history: List[float] = []
        self.best = np.inf
        self.stale = 0
        self.summary = TrainingSummary()

    def to_dict(self) -> Dict:
        """Training state without the network parameters. """
        return {'g_optimizer': self.g_optimizer.state_dict(),
                'd_optimizer': self.d_optimizer.state_dict(),
                'step': self.step,
                'rng': self.rng.bit_generator.state,
                'indicator': list(self.indicator),
                'history': list(self.history),
                'best': self.best,
                'stale': self.stale,
                'steps': list(self.summary.steps),
                'losses': [tuple(bundle) for bundle in self.summary.losses]}

    def load_dict(self, data: Dict):
        self.g_optimizer.load_state_dict(data['g_optimizer'])
        self.d_optimizer.load_state_dict(data['d_optimizer'])
        self.step = data['step']
        self.rng.bit_generator.state = data['rng']
        self.indicator = list(data['indicator'])
        self.history = list(data['history'])
        self.best = data['best']
        self.stale = data['stale']
        self.summary = TrainingSummary(
            list(data['steps']),
            [losses.LossBundle(*bundle) for bundle in data['losses']])


def _toggle(module: torch.nn.Module, requires_grad: bool):
    for parameter in module.parameters():
        parameter.requires_grad_(requires_grad)


class Trainer(object):
    """Adversarial training of the generator on a dataset split.

    Parameters
    ----------
    config: RunConfig
        Sizes, loss weights and optimizer settings.

    dataset: DatasetSplit
        Only the training samples are used.

    embedder: Embedder
        Frozen recognizer of the perceptual loss.

    seed: int, optional
        Seed of the initialization and the batch sampling. Defaults to
        ``config.seed``.

    termination_conditions: dict, optional
        Overrides ``config.termination_conditions``.

    out: str, optional
        Directory of the checkpoint and the training log.

    progress: bool
        Shows a progress bar.

    Raises
    ------
    MissingAnchors
        If a training identity lacks a NIR sample or two VIS samples.

    """

    def __init__(self, config: RunConfig, dataset: synthgen.DatasetSplit,
                 embedder: nets.Embedder, seed: Optional[int] = None,
                 termination_conditions: Optional[Dict] = None,
                 out: Optional[str] = None, progress: bool = False):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.embedder = nets.freeze(embedder)
        self.termination_conditions = dict(config.termination_conditions)
        if termination_conditions is not None:
            self.termination_conditions.update(termination_conditions)
        self.out = out
        self.progress = progress
        self.stats = None

        self._by_identity: Dict[int, Dict[str, list]] = {}
        for sample in dataset.train:
            entry = self._by_identity.setdefault(
                sample.identity, {'NIR': [], 'VIS': []})
            entry[sample.spectrum.value].append(sample)
        for id, entry in self._by_identity.items():
            if not entry['NIR'] or len(entry['VIS']) < 2:
                raise MissingAnchors(
                    'Training identity {} has {} NIR and {} VIS samples, at '
                    'least 1 and 2 are needed.'.format(
                        id, len(entry['NIR']), len(entry['VIS'])))
        self.identities = sorted(self._by_identity)

        targets = synthgen.mean_uv_targets(dataset)
        self._uv_targets = {
            id: UVField(coords=torch.from_numpy(
                np.asarray(field.coords, dtype=np.float32)),
                valid=torch.from_numpy(np.asarray(field.valid)))
            for id, field in targets.items()}
        self._exemplars = {}
        for id, entry in self._by_identity.items():
            frontal = min(entry['VIS'],
                          key=lambda sample: abs(sample.pose[0])
                          + abs(sample.pose[1]))
            self._exemplars[id] = images_to_tensor(frontal.image)[0]

    def initial_state(self) -> TrainState:
        networks = nets.build_networks(self.config, self.seed, self.embedder)
        return TrainState(networks, self.config, self.seed)

    def sample_batch(self, state: TrainState) -> List[synthgen.FaceSample]:
        """Draws the samples of one step with the state's generator.

        Per identity one NIR sample and two distinct VIS samples, the
        anchor first.

        """
        k = min(self.config.batch_identities, len(self.identities))
        chosen = state.rng.choice(len(self.identities), size=k,
                                  replace=False)
        samples = []
        for index in chosen:
            entry = self._by_identity[self.identities[index]]
            samples.append(entry['NIR'][state.rng.integers(len(entry['NIR']))])
            for vis in state.rng.choice(len(entry['VIS']), size=2,
                                        replace=False):
                samples.append(entry['VIS'][vis])
        return samples

    @staticmethod
    def collate(samples: Sequence[synthgen.FaceSample]) -> Batch:
        """Groups samples by identity into a batch.

        Each identity contributes its first NIR sample and its first two VIS
        samples, in order of appearance.

        Raises
        ------
        MissingAnchors
            If an identity lacks a NIR sample or two VIS samples.

        """
        groups: Dict[int, Dict[str, list]] = {}
        for sample in samples:
            groups.setdefault(sample.identity, {'NIR': [], 'VIS': []})[
                synthgen.Spectrum(sample.spectrum).value].append(sample)
        if not groups:
            raise MissingAnchors('The batch is empty.')
        for id, group in groups.items():
            if not group['NIR'] or len(group['VIS']) < 2:
                raise MissingAnchors(
                    'Identity {} of the batch needs a NIR sample and two VIS '
                    'samples.'.format(id))
        ids = list(groups)
        return Batch(
            identities=ids,
            nir=images_to_tensor([groups[id]['NIR'][0].image for id in ids]),
            vis_anchor=images_to_tensor(
                [groups[id]['VIS'][0].image for id in ids]),
            vis_companion=images_to_tensor(
                [groups[id]['VIS'][1].image for id in ids]))

    def _uv_target(self, batch: Batch) -> UVField:
        ids = batch.identities * 2
        return UVField(
            coords=torch.stack([self._uv_targets[id].coords for id in ids]),
            valid=torch.stack([self._uv_targets[id].valid for id in ids]))

    def _pixel_target(self, batch: Batch) -> torch.Tensor:
        if self.config.pixel_target == 'matched_vis':
            return torch.stack([self._exemplars[id]
                                for id in batch.identities * 2])
        return batch.generator_input

    def _perceptual_features(self, image: torch.Tensor) -> torch.Tensor:
        if self.config.perceptual_layer == 'pooling':
            return self.embedder.features(image)
        return nets.embed(self.embedder, image)

    def _image_scores(self, discriminators: nets.Discriminators,
                      image: torch.Tensor):
        if self.config.image_adversary == 'multiscale':
            low, high = split_bands(haar_decompose(image))
            return discriminators.low(low), discriminators.high(high)
        if self.config.image_adversary == 'single':
            return discriminators.image(image), None
        return None, None

    def discriminator_step(self, state: TrainState, batch: Batch) \
            -> Dict[str, float]:
        """One update of all discriminators. The generator is only read. """
        generator = state.networks.generator
        discriminators = state.networks.discriminators
        with torch.no_grad():
            fake = generator(batch.generator_input, batch.spectrum)
            nir_rep = fake.identity_rep[:len(batch.identities)]
            anchor_rep = generator.texture_net(
                batch.vis_anchor, torch.zeros(len(batch.identities)))[0]
            companion_rep = fake.identity_rep[len(batch.identities):]

        d_t = losses.dt_loss(discriminators.pair(nir_rep, anchor_rep),
                             discriminators.pair(companion_rep, anchor_rep))
        real_low, real_high = self._image_scores(discriminators,
                                                 batch.vis_anchor)
        fake_low, fake_high = self._image_scores(discriminators,
                                                 fake.output_image)
        if self.config.image_adversary == 'multiscale':
            d_f = losses.df_loss(real_low, fake_low, real_high, fake_high)
        elif self.config.image_adversary == 'single':
            d_f = losses.dt_loss(fake_low, real_low)
        else:
            d_f = torch.zeros(())

        state.d_optimizer.zero_grad(set_to_none=True)
        (d_t + d_f).backward()
        state.d_optimizer.step()
        return {'d_t': d_t.item(), 'd_f': d_f.item()}

    def perceptual_indicator(self, target: torch.Tensor,
                             output: torch.Tensor,
                             uv_only: bool = False) -> torch.Tensor:
        """Perceptual distance that decides early stopping.

        It is only differentiated when it enters the generator loss.

        """
        if uv_only or not self.config.use_perceptual:
            with torch.no_grad():
                return losses.perceptual_loss(self._perceptual_features,
                                              target, output)
        return losses.perceptual_loss(self._perceptual_features, target,
                                      output)

    def generator_step(self, state: TrainState, batch: Batch,
                       uv_only: bool = False) -> Dict[str, float]:
        """One update of the generator. The discriminators are only read.

        Returns the generator terms and the perceptual indicator.

        """
        generator = state.networks.generator
        discriminators = state.networks.discriminators
        k = len(batch.identities)
        _toggle(discriminators, False)
        try:
            result = generator(batch.generator_input, batch.spectrum)
            target = self._uv_target(batch)
            uv = losses.uv_loss(
                UVField(coords=result.predicted_uv.coords,
                        valid=target.valid), target) \
                + losses.mask_loss(result.mask_logits, target.valid)

            zero = torch.zeros(())
            g_t, g_f, perceptual, pixel = zero, zero, zero, zero
            pixel_target = self._pixel_target(batch)
            indicator = self.perceptual_indicator(
                pixel_target, result.output_image, uv_only)
            if not uv_only:
                with torch.no_grad():
                    anchor_rep = generator.texture_net(
                        batch.vis_anchor, torch.zeros(k))[0]
                g_t = losses.gt_adversarial_loss(discriminators.pair(
                    result.identity_rep[:k], anchor_rep))
                fake_low, fake_high = self._image_scores(
                    discriminators, result.output_image)
                if self.config.image_adversary == 'multiscale':
                    g_f = losses.gf_adversarial_loss(
                        fake_low, fake_high, self.config.lambda_high)
                elif self.config.image_adversary == 'single':
                    g_f = losses.gt_adversarial_loss(fake_low)
                if self.config.use_perceptual:
                    perceptual = indicator
                pixel = losses.pixel_loss(pixel_target, result.output_image,
                                          self.config.alpha_pixel)
            total = losses.total_generator_loss(uv, g_t, g_f, perceptual,
                                                pixel)
            state.g_optimizer.zero_grad(set_to_none=True)
            total.backward()
            state.g_optimizer.step()
        finally:
            _toggle(discriminators, True)
        return {'uv': uv.item(), 'g_t': g_t.item(), 'g_f': g_f.item(),
                'perceptual': perceptual.item(), 'pixel': pixel.item(),
                'total_g': total.item(), 'indicator': indicator.item()}

    def train_step(self, state: TrainState,
                   samples: Union[Batch, Sequence[synthgen.FaceSample]]):
        """One discriminator update followed by one generator update.

        During the first ``uv_warmup_steps`` steps only the UV term of the
        generator is optimized and the discriminators rest.

        Returns
        -------
        state: TrainState
            The updated state.

        bundle: LossBundle
            All loss values of the step.

        Raises
        ------
        MissingAnchors
            If an identity of the batch lacks VIS samples.

        """
        batch = samples if isinstance(samples, Batch) \
            else self.collate(samples)
        warmup = state.step < self.config.uv_warmup_steps
        t_0 = time.perf_counter()
        d_values = {'d_t': 0., 'd_f': 0.} if warmup \
            else self.discriminator_step(state, batch)
        t_1 = time.perf_counter()
        g_values = self.generator_step(state, batch, uv_only=warmup)
        t_2 = time.perf_counter()
        if self.stats is not None:
            self.stats.d_step_times.append(t_1 - t_0)
            self.stats.g_step_times.append(t_2 - t_1)

        state.step += 1
        state.indicator.append(g_values.pop('indicator'))
        bundle = losses.LossBundle(
            lambda_high=self.config.lambda_high,
            alpha_pixel=self.config.alpha_pixel, **d_values, **g_values)
        state.summary.append(state.step, bundle)
        return state, bundle

    def evaluate(self, state: TrainState) -> bool:
        """Applies the stopping rule. True if training should stop. """
        conditions = self.termination_conditions
        state.history.append(float(np.mean(state.indicator)))
        state.history = state.history[-int(conditions['patience']):]
        state.indicator = []
        window = float(np.mean(state.history))
        if np.isfinite(state.best) and state.best != 0:
            improvement = (state.best - window) / abs(state.best)
        else:
            improvement = np.inf
        if improvement < conditions['min_relative_improvement']:
            state.stale += 1
        else:
            state.stale = 0
        state.best = min(state.best, window)
        logger.debug('step %d: windowed perceptual loss %.6g, %d stale '
                     'evaluations', state.step, window, state.stale)
        return state.stale >= conditions['patience']

    def save(self, state: TrainState, path: str):
        nets.save_checkpoint(path, state.networks, self.config,
                             state.to_dict())

    def load(self, path: str) -> TrainState:
        """Restores a state saved with :meth:`save`. """
        checkpoint = nets.load_checkpoint(path)
        if checkpoint.config.content_hash() != self.config.content_hash():
            raise ValueError('{}: the checkpoint was written with another '
                             'configuration.'.format(path))
        state = TrainState(nets.Networks(checkpoint.networks.generator,
                                         checkpoint.networks.discriminators,
                                         self.embedder),
                           self.config, self.seed)
        if checkpoint.training_state is not None:
            state.load_dict(checkpoint.training_state)
        return state

    def _checkpoint_path(self, name: str) -> str:
        directory = self.out if self.out is not None else tempfile.mkdtemp(
            prefix='cfc-')
        os.makedirs(directory, exist_ok=True)
        return os.path.join(directory, name)

    def write_state_to_result(self, state: TrainState, status: int,
                              reason: str) -> TrainingResult:
        """Writes the current state into a `TrainingResult`.

        The final checkpoint and the training log are written to ``out``
        if it is set.

        """
        if self.stats is not None:
            self.stats.end_t_train = time.time()
        checkpoint = None
        if self.out is not None:
            checkpoint = self._checkpoint_path('checkpoint.pt')
            self.save(state, checkpoint)
            state.summary.to_csv(os.path.join(self.out, 'training_log.csv'))
        return TrainingResult(
            final_losses=state.summary.losses[-1] if len(state.summary)
            else None,
            num_steps=state.step, seed=self.seed,
            termination_reason=reason, status=status, checkpoint=checkpoint,
            summary=state.summary, training_stats=self.stats)

    def run(self, state: Optional[TrainState] = None) -> TrainingResult:
        """Trains until a termination condition holds.

        Parameters
        ----------
        state: TrainState, optional
            State to resume from. A fresh state by default.

        Raises
        ------
        TrainingDiverged
            After writing a diagnostic checkpoint, if a loss is not finite.

        """
        state = self.initial_state() if state is None else state
        conditions = self.termination_conditions
        self.stats = PerformanceStatistics()
        self.stats.start_t_train = time.time()
        max_steps = int(conditions['max_steps'])
        status, reason = 0, 'Maximum number of steps reached'
        with tqdm(total=max_steps, initial=state.step,
                  disable=not self.progress) as bar:
            try:
                while state.step < max_steps:
                    if time.time() - self.stats.start_t_train \
                            > conditions['max_wall_time']:
                        raise WallTimeExceeded
                    state, bundle = self.train_step(state,
                                                    self.sample_batch(state))
                    bar.update()
                    if not bundle.is_finite():
                        path = self._checkpoint_path('diverged.pt')
                        self.save(state, path)
                        logger.warning('Loss not finite at step %d: %s',
                                       state.step, bundle.to_dict())
                        raise TrainingDiverged(state.step, path)
                    if state.step % conditions['eval_interval'] == 0 \
                            and self.evaluate(state):
                        status = 2
                        reason = 'Perceptual loss no longer decreases'
                        break
            except WallTimeExceeded:
                status, reason = 5, 'Maximum Wall Time Exceeded'
        logger.info('Training stopped after %d steps: %s.', state.step,
                    reason)
        return self.write_state_to_result(state, status, reason)


def train(config: RunConfig, dataset: synthgen.DatasetSplit,
          out: Optional[str] = None,
          embedder: Optional[nets.Embedder] = None,
          seed: Optional[int] = None,
          termination_conditions: Optional[Dict] = None,
          progress: bool = False) -> TrainingResult:
    """Trains a model on the training part of a split.

    Parameters
    ----------
    config: RunConfig

    dataset: DatasetSplit

    out: str, optional
        Directory receiving ``checkpoint.pt`` and ``training_log.csv``.

    embedder: Embedder, optional
        Frozen recognizer. Pretrained with :func:`cfc.nets.pretrain_embedder`
        if omitted.

    seed: int, optional
        Defaults to ``config.seed``.

    termination_conditions: dict, optional
        Overrides of the stopping rule.

    progress: bool
        Shows a progress bar.

    Returns
    -------
    result: TrainingResult

    """
    seed = config.seed if seed is None else seed
    if embedder is None:
        embedder = nets.pretrain_embedder(config, seed)
    trainer = Trainer(config, dataset, embedder, seed=seed,
                      termination_conditions=termination_conditions, out=out,
                      progress=progress)
    return trainer.run()


def synthesize(checkpoint: Union[str, nets.Checkpoint],
               nir_image: np.ndarray) -> np.ndarray:
    """Translates NIR images into VIS images.

    Parameters
    ----------
    checkpoint: str or Checkpoint
        Path or loaded checkpoint.

    nir_image: np.ndarray
        One (H, W, 3) image or a stack (B, H, W, 3) in [0, 1].

    Returns
    -------
    vis_image: np.ndarray
        Of the input's shape, in [0, 1].

    Raises
    ------
    ValueError
        If the resolution differs from the checkpoint's.

    """
    if isinstance(checkpoint, str):
        checkpoint = nets.load_checkpoint(checkpoint)
    generator = checkpoint.networks.generator
    single = np.ndim(nir_image) == 3
    images = images_to_tensor(nir_image)
    was_training = generator.training
    generator.eval()
    try:
        with torch.no_grad():
            output = nets.generator_forward(generator, images).output_image
    finally:
        generator.train(was_training)
    output = tensor_to_images(output).astype(np.float64)
    return output[0] if single else output
