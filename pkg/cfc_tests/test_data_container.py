"""
Tests of the storage of datasets, protocols and training results.
"""

import os
import tempfile
import unittest

import numpy as np

from cfc import data_container, synthgen
from cfc.losses import LossBundle
from cfc.performance_statistics import PerformanceStatistics
from cfc.training_data import TrainingResult, TrainingSummary
from cfc_tests.testutil import random_uv_field, tiny_config


class TestUVFieldStorage(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.directory.name, 'field.uv')

    def tearDown(self):
        self.directory.cleanup()

    def test_layout(self):
        field = random_uv_field(np.random.default_rng(0), 5, 7)
        data_container.write_uv_field(self.path, field)
        with open(self.path, 'rb') as f:
            data = f.read()
        self.assertEqual(data[:8], b'CFCUVF32')
        self.assertEqual(len(data), 16 + 5 * 7 * 2 * 4 + 5 * 7)
        self.assertEqual(int.from_bytes(data[8:12], 'little'), 5)
        self.assertEqual(int.from_bytes(data[12:16], 'little'), 7)

        read = data_container.read_uv_field(self.path)
        np.testing.assert_array_equal(read.valid, field.valid)
        np.testing.assert_array_equal(
            read.coords, field.coords.astype(np.float32).astype(np.float64))

    def test_bad_files_rejected(self):
        with open(self.path, 'wb') as f:
            f.write(b'NOTAFIELD' + bytes(20))
        with self.assertRaises(ValueError):
            data_container.read_uv_field(self.path)
        field = random_uv_field(np.random.default_rng(1), 3, 3)
        data_container.write_uv_field(self.path, field)
        with open(self.path, 'rb') as f:
            data = f.read()
        with open(self.path, 'wb') as f:
            f.write(data[:-1])
        with self.assertRaises(ValueError):
            data_container.read_uv_field(self.path)


class TestDatasetDirectory(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.directory = tempfile.TemporaryDirectory()
        cls.split = synthgen.make_dataset(tiny_config())
        data_container.write_dataset(cls.split, cls.directory.name)

    @classmethod
    def tearDownClass(cls):
        cls.directory.cleanup()

    def test_manifest(self):
        manifest = data_container.read_manifest(self.directory.name)
        self.assertEqual(list(manifest.columns),
                         data_container.MANIFEST_COLUMNS)
        self.assertEqual(len(manifest), len(self.split.train)
                         + len(self.split.test_gallery)
                         + len(self.split.test_probe))
        for path in manifest.path:
            self.assertTrue(path.startswith('images/'))
            self.assertTrue(os.path.isfile(
                os.path.join(self.directory.name, path)))

    def test_read_back(self):
        split = data_container.read_dataset(self.directory.name)
        self.assertEqual(split.seed, self.split.seed)
        self.assertEqual(split.train_identities, self.split.train_identities)
        for original, read in zip(self.split.test_probe, split.test_probe):
            np.testing.assert_array_equal(
                read.image, data_container.quantize_image(original.image))
            np.testing.assert_array_equal(read.corruption_mask,
                                          original.corruption_mask)
            np.testing.assert_array_equal(read.gt_uv.valid,
                                          original.gt_uv.valid)
            self.assertEqual(read.spectrum, original.spectrum)
        for id, identity in self.split.identities.items():
            np.testing.assert_array_equal(
                split.identities[id].canonical_texture,
                identity.canonical_texture)

    def test_missing_manifest(self):
        with tempfile.TemporaryDirectory() as empty:
            with self.assertRaises(FileNotFoundError):
                data_container.read_dataset(empty)

    def test_protocols(self):
        with tempfile.TemporaryDirectory() as out:
            single = data_container.write_protocols(
                self.directory.name, 1, out=os.path.join(out, 'single'))
            folds = data_container.write_protocols(
                self.directory.name, 2, seed=3,
                out=os.path.join(out, 'folds'))
            self.assertEqual(len(single), 1)
            self.assertEqual(len(folds), 2)

            def lines(directory, name):
                with open(os.path.join(directory, name)) as f:
                    return [line.split() for line in f if line.strip()]

            n_probes = len(self.split.test_probe)
            self.assertEqual(len(lines(single[0], 'probe.txt')), n_probes)
            probes = [entry[0] for fold in folds
                      for entry in lines(fold, 'probe.txt')]
            self.assertEqual(len(probes), n_probes)
            self.assertEqual(len(set(probes)), n_probes)
            for fold in folds:
                gallery = lines(fold, 'gallery.txt')
                self.assertEqual(len(gallery), len(self.split.test_gallery))

            with self.assertRaises(ValueError):
                data_container.write_protocols(self.directory.name,
                                               n_probes + 1, out=out)


class TestTrainingContainer(unittest.TestCase):
    def result(self, seed, perceptual):
        bundle = LossBundle(.1, .2, .3, .4, .5, perceptual, .01, 1.)
        summary = TrainingSummary()
        summary.append(1, bundle)
        return TrainingResult(final_losses=bundle, num_steps=1, seed=seed,
                              termination_reason='done', status=0,
                              checkpoint='ckpt_{}.pt'.format(seed),
                              summary=summary,
                              training_stats=PerformanceStatistics())

    def test_append_and_pickle(self):
        container = data_container.TrainingContainer()
        container.append_training_result(self.result(0, .7))
        container.append_training_result(self.result(1, .3))
        self.assertEqual(len(container), 2)
        self.assertEqual(container.best_run(), 1)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'container.pkl')
            container.to_pickle(path)
            read = data_container.TrainingContainer.from_pickle(path)
        self.assertEqual(read.seeds, [0, 1])
        self.assertEqual(read.final_losses, container.final_losses)
        self.assertEqual(read.summaries[1].losses,
                         container.summaries[1].losses)

    def test_length_check(self):
        with self.assertRaises(ValueError):
            data_container.TrainingContainer(seeds=[0], final_losses=[])


if __name__ == '__main__':
    unittest.main()
