"""
Tests of the training loop: isolation of the updates, determinism, resuming
and the outputs of a run.
"""

import os
import tempfile
import unittest

import numpy as np
import torch

from cfc import nets, synthgen, trainer
from cfc.losses import LOSS_NAMES
from cfc.training_data import TrainingSummary
from cfc.util import parameter_hash
from cfc_tests.testutil import tiny_config


def assert_modules_close(test, first, second, atol=1e-6):
    first, second = first.state_dict(), second.state_dict()
    test.assertEqual(list(first), list(second))
    for key in first:
        np.testing.assert_allclose(first[key].numpy(), second[key].numpy(),
                                   atol=atol, err_msg=key)


class TrainerTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.config = tiny_config()
        cls.split = synthgen.make_dataset(cls.config)

    def make_trainer(self, config=None, **kwargs):
        config = self.config if config is None else config
        torch.manual_seed(123)
        embedder = nets.build_embedder(config)
        return trainer.Trainer(config, self.split, embedder, **kwargs)


class TestSteps(TrainerTestCase):
    def test_batch_layout(self):
        model_trainer = self.make_trainer()
        state = model_trainer.initial_state()
        samples = model_trainer.sample_batch(state)
        self.assertEqual(len(samples), 3 * self.config.batch_identities)
        batch = model_trainer.collate(samples)
        k = len(batch.identities)
        self.assertEqual(tuple(batch.generator_input.shape), (2 * k, 3, 16, 16))
        np.testing.assert_array_equal(batch.spectrum.numpy(),
                                      [1.] * k + [0.] * k)
        self.assertTrue(set(batch.identities)
                        <= set(self.split.train_identities))

    def test_update_isolation(self):
        model_trainer = self.make_trainer()
        state = model_trainer.initial_state()
        batch = model_trainer.collate(model_trainer.sample_batch(state))
        networks = state.networks

        generator, embedder = (parameter_hash(networks.generator),
                               parameter_hash(networks.embedder))
        discriminators = parameter_hash(networks.discriminators)
        model_trainer.discriminator_step(state, batch)
        self.assertEqual(parameter_hash(networks.generator), generator)
        self.assertEqual(parameter_hash(networks.embedder), embedder)
        self.assertNotEqual(parameter_hash(networks.discriminators),
                            discriminators)

        discriminators = parameter_hash(networks.discriminators)
        model_trainer.generator_step(state, batch)
        self.assertEqual(parameter_hash(networks.discriminators),
                         discriminators)
        self.assertEqual(parameter_hash(networks.embedder), embedder)
        self.assertNotEqual(parameter_hash(networks.generator), generator)
        self.assertTrue(all(p.requires_grad
                            for p in networks.discriminators.parameters()))

    def test_frozen_embedder(self):
        model_trainer = self.make_trainer()
        embedder = parameter_hash(model_trainer.embedder)
        state = model_trainer.initial_state()
        for _ in range(3):
            state, bundle = model_trainer.train_step(
                state, model_trainer.sample_batch(state))
            self.assertTrue(bundle.is_finite())
        self.assertEqual(parameter_hash(model_trainer.embedder), embedder)
        self.assertEqual(state.step, 3)

    def test_loss_bundle(self):
        model_trainer = self.make_trainer()
        state = model_trainer.initial_state()
        state, bundle = model_trainer.train_step(
            state, model_trainer.sample_batch(state))
        self.assertAlmostEqual(
            bundle.total_g, bundle.uv + bundle.g_t + bundle.g_f
            + bundle.perceptual + bundle.pixel, places=4)
        self.assertGreaterEqual(bundle.pixel, 0)
        self.assertEqual(bundle.lambda_high, self.config.lambda_high)

    def test_uv_warmup(self):
        config = self.config.replace(uv_warmup_steps=2)
        model_trainer = self.make_trainer(config)
        state = model_trainer.initial_state()
        discriminators = parameter_hash(state.networks.discriminators)
        state, bundle = model_trainer.train_step(
            state, model_trainer.sample_batch(state))
        self.assertEqual(parameter_hash(state.networks.discriminators),
                         discriminators)
        self.assertEqual((bundle.g_t, bundle.g_f, bundle.d_t, bundle.d_f),
                         (0., 0., 0., 0.))

    def test_indicator_graph(self):
        target = torch.rand(2, 3, 16, 16)
        output = torch.rand(2, 3, 16, 16, requires_grad=True)
        for overrides, uv_only, tracked in (({}, False, True),
                                            ({}, True, False),
                                            ({'use_perceptual': False},
                                             False, False)):
            with self.subTest(uv_only=uv_only, **overrides):
                model_trainer = self.make_trainer(
                    self.config.replace(**overrides))
                indicator = model_trainer.perceptual_indicator(
                    target, output, uv_only)
                self.assertEqual(indicator.requires_grad, tracked)
                self.assertEqual(indicator.grad_fn is not None, tracked)
                self.assertGreater(indicator.item(), 0)

    def test_variants(self):
        for overrides in ({'image_adversary': 'single'},
                          {'image_adversary': 'none'},
                          {'use_perceptual': False},
                          {'pixel_target': 'matched_vis'},
                          {'perceptual_layer': 'pooling'}):
            with self.subTest(**overrides):
                model_trainer = self.make_trainer(
                    self.config.replace(**overrides))
                state = model_trainer.initial_state()
                state, bundle = model_trainer.train_step(
                    state, model_trainer.sample_batch(state))
                self.assertTrue(bundle.is_finite())
                if overrides.get('image_adversary') == 'none':
                    self.assertEqual((bundle.g_f, bundle.d_f), (0., 0.))
                if 'use_perceptual' in overrides:
                    self.assertEqual(bundle.perceptual, 0.)

    def test_missing_anchors(self):
        model_trainer = self.make_trainer()
        state = model_trainer.initial_state()
        nir = [sample for sample in self.split.train
               if sample.spectrum is synthgen.Spectrum.NIR]
        with self.assertRaises(trainer.MissingAnchors):
            model_trainer.train_step(state, nir[:2])
        with self.assertRaises(trainer.MissingAnchors):
            model_trainer.train_step(state, [])

        identity = self.split.train_identities[0]
        crippled = self.split._replace(train=[
            sample for sample in self.split.train
            if sample.identity != identity
            or sample.spectrum is synthgen.Spectrum.NIR])
        with self.assertRaises(trainer.MissingAnchors):
            trainer.Trainer(self.config, crippled,
                            nets.build_embedder(self.config))


class TestRun(TrainerTestCase):
    def test_determinism(self):
        first = self.make_trainer(termination_conditions={'max_steps': 4})
        second = self.make_trainer(termination_conditions={'max_steps': 4})
        first_result, second_result = first.run(), second.run()
        self.assertEqual(first_result.num_steps, 4)
        np.testing.assert_allclose(
            [tuple(bundle) for bundle in first_result.summary.losses],
            [tuple(bundle) for bundle in second_result.summary.losses],
            rtol=1e-6)

    def test_resume(self):
        with tempfile.TemporaryDirectory() as directory:
            straight = self.make_trainer(
                termination_conditions={'max_steps': 8})
            state = straight.initial_state()
            straight.run(state)

            first_half = self.make_trainer(
                termination_conditions={'max_steps': 4},
                out=os.path.join(directory, 'first'))
            result = first_half.run()
            self.assertEqual(result.status, 0)
            self.assertTrue(os.path.isfile(result.checkpoint))

            second_half = self.make_trainer(
                termination_conditions={'max_steps': 8})
            resumed = second_half.load(result.checkpoint)
            self.assertEqual(resumed.step, 4)
            second_result = second_half.run(resumed)

        self.assertEqual(second_result.num_steps, 8)
        self.assertEqual(second_result.summary.steps, list(range(1, 9)))
        assert_modules_close(self, state.networks.generator,
                             resumed.networks.generator)
        assert_modules_close(self, state.networks.discriminators,
                             resumed.networks.discriminators)

    def test_resume_rejects_other_config(self):
        with tempfile.TemporaryDirectory() as directory:
            result = self.make_trainer(
                termination_conditions={'max_steps': 1}, out=directory).run()
            other = self.make_trainer(self.config.replace(lambda_high=1.))
            with self.assertRaises(ValueError):
                other.load(result.checkpoint)

    def test_outputs(self):
        with tempfile.TemporaryDirectory() as directory:
            result = self.make_trainer(
                termination_conditions={'max_steps': 3}, out=directory).run()
            self.assertEqual(result.termination_reason,
                             'Maximum number of steps reached')
            self.assertIsNotNone(result.training_stats.total_time)
            self.assertEqual(len(result.training_stats.g_step_times), 3)

            log = os.path.join(directory, 'training_log.csv')
            with open(log) as f:
                self.assertEqual(f.readline().strip(),
                                 'step,' + ','.join(LOSS_NAMES))
            summary = TrainingSummary.from_csv(log)
            self.assertEqual(summary.steps, [1, 2, 3])
            for read, written in zip(summary.losses, result.summary.losses):
                self.assertEqual(tuple(read), tuple(written))

            checkpoint = nets.load_checkpoint(result.checkpoint)
            self.assertEqual(checkpoint.config, self.config)
            self.assertEqual(checkpoint.training_state['step'], 3)

    def test_early_stop(self):
        model_trainer = self.make_trainer(termination_conditions={
            'max_steps': 100, 'eval_interval': 1, 'patience': 1,
            'min_relative_improvement': np.inf})
        result = model_trainer.run()
        self.assertEqual(result.status, 2)
        self.assertEqual(result.num_steps, 2)

    def test_wall_time(self):
        model_trainer = self.make_trainer(
            termination_conditions={'max_wall_time': -1.})
        result = model_trainer.run()
        self.assertEqual(result.status, 5)
        self.assertEqual(result.num_steps, 0)

    def test_divergence(self):
        config = self.config.replace(lambda_high=float('inf'))
        with tempfile.TemporaryDirectory() as directory:
            model_trainer = self.make_trainer(
                config, termination_conditions={'max_steps': 3},
                out=directory)
            with self.assertRaises(trainer.TrainingDiverged) as context:
                model_trainer.run()
            self.assertEqual(context.exception.step, 1)
            self.assertTrue(os.path.isfile(context.exception.checkpoint))


class TestSynthesize(TrainerTestCase):
    def test_shapes_and_range(self):
        networks = nets.build_networks(self.config, seed=0)
        checkpoint = nets.Checkpoint(self.config, networks, None)
        probe = self.split.test_probe[0].image

        single = trainer.synthesize(checkpoint, probe)
        self.assertEqual(single.shape, (16, 16, 3))
        self.assertTrue(np.all((single >= 0) & (single <= 1)))

        stack = trainer.synthesize(checkpoint, np.stack([probe, probe]))
        self.assertEqual(stack.shape, (2, 16, 16, 3))
        np.testing.assert_allclose(stack[0], single, atol=1e-6)

        with self.assertRaises(ValueError):
            trainer.synthesize(checkpoint, np.zeros((32, 32, 3)))


if __name__ == '__main__':
    unittest.main()
