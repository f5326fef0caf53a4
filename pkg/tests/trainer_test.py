import unittest

import torch

from patchforge.core.errors import EmptyDataset, NonFiniteGradient, ShapeMismatch
from patchforge.core.patch import Patch, random_patch
from patchforge.core.runtime import configure_determinism, torch_generator
from patchforge.core.trainer import (
    EpochRecord,
    TrainHistory,
    ascent_step,
    init_patch,
    patch_gradient_step,
    train_patch,
    transformed_batch,
)
from patchforge.eval.suite import DecayLogger
from patchforge.models.schemas import TransformConfig

from toy_fixtures import tiny_dataset, tiny_model, tiny_train_config


class TestAscentStep(unittest.TestCase):
    """Signed gradient step followed by the clip."""

    def test_signed_step(self):
        patch = Patch(torch.full((3, 1, 1), 0.5))
        grad = torch.tensor([2.0, -0.1, 0.0]).view(3, 1, 1)
        updated = ascent_step(patch, grad, 0.005)
        expected = torch.tensor([0.505, 0.495, 0.5]).view(3, 1, 1)
        self.assertTrue(torch.allclose(updated.values, expected, atol=1e-7))

    def test_clipped_at_bounds(self):
        patch = Patch(torch.tensor([1.0, 0.0, 0.999]).view(3, 1, 1))
        grad = torch.tensor([1.0, -1.0, 1.0]).view(3, 1, 1)
        updated = ascent_step(patch, grad, 0.01)
        self.assertEqual(updated.values.flatten().tolist(), [1.0, 0.0, 1.0])

    def test_random_steps_stay_in_range(self):
        """50 steps with random gradients: values stay in [0, 1] and move at most step_size."""
        generator = torch.Generator().manual_seed(0)
        patch = random_patch(6, 6, 0)
        for _ in range(50):
            grad = torch.randn(3, 6, 6, generator=generator)
            updated = ascent_step(patch, grad, 0.05)
            self.assertGreaterEqual(float(updated.values.min()), 0.0)
            self.assertLessEqual(float(updated.values.max()), 1.0)
            self.assertLessEqual(float((updated.values - patch.values).abs().max()), 0.05 + 1e-6)
            patch = updated

    def test_bad_gradients(self):
        patch = random_patch(2, 2, 0)
        with self.assertRaises(NonFiniteGradient):
            ascent_step(patch, torch.full((3, 2, 2), float("nan")), 0.01)
        with self.assertRaises(ShapeMismatch):
            ascent_step(patch, torch.zeros(3, 2, 3), 0.01)

    def test_meta_preserved(self):
        patch = random_patch(2, 2, 0).with_meta(source_model="tiny_cnn", train_epochs=3)
        self.assertEqual(ascent_step(patch, torch.ones(3, 2, 2), 0.01).meta, patch.meta)


class TestTrainHistory(unittest.TestCase):

    def test_consecutive_epochs(self):
        history = TrainHistory()
        history.append(EpochRecord(epoch=1, mean_loss=0.3, wall_time_s=1.0))
        with self.assertRaises(ValueError):
            history.append(EpochRecord(epoch=3, mean_loss=0.3, wall_time_s=1.0))

    def test_list_round_trip(self):
        history = TrainHistory([EpochRecord(epoch=1, mean_loss=0.3, wall_time_s=1.0, eval_miou=0.5, per_class_iou=[0.5, None])])
        self.assertEqual(TrainHistory.from_list(history.to_list()), history)


class TestPatchGradientStep(unittest.TestCase):
    """A single EOT batch step."""

    def setUp(self):
        self.adapter = tiny_model()
        self.cfg = tiny_train_config()
        records = [tiny_dataset(3)[i] for i in range(3)]
        self.images, self.labels = transformed_batch(records, self.cfg, torch_generator(0, 1))

    def test_batch_is_transformed_to_crop(self):
        self.assertEqual(tuple(self.images.shape), (3, 3, 32, 32))
        self.assertEqual(tuple(self.labels.shape), (3, 32, 32))

    def test_change_bounded_by_step(self):
        patch = init_patch(self.cfg)
        updated, loss, omega = patch_gradient_step(self.adapter, patch, self.images, self.labels, 0.005)
        self.assertLessEqual(float((updated.values - patch.values).abs().max()), 0.005 + 1e-6)
        self.assertGreaterEqual(loss, 0.0)
        self.assertGreaterEqual(omega, 0)
        self.assertLessEqual(omega, 3 * (32 * 32 - 25))

    def test_zero_step_leaves_patch_unchanged(self):
        patch = init_patch(self.cfg)
        updated, _, _ = patch_gradient_step(self.adapter, patch, self.images, self.labels, 0.0)
        self.assertTrue(torch.equal(updated.values, patch.values))


class TestTrainPatch(unittest.TestCase):
    """Full EOT patch training on the tiny synthetic setup."""

    @classmethod
    def setUpClass(cls):
        configure_determinism(True)

    def setUp(self):
        self.dataset = tiny_dataset(6)

    def test_init_patch(self):
        patch = init_patch(tiny_train_config(patch_size=7, seed=3))
        self.assertEqual(patch.shape, (3, 7, 7))
        self.assertEqual(patch.meta.seed, 3)
        self.assertTrue(torch.equal(patch.values, random_patch(7, 7, 3).values))

    def test_unset_pad_value_uses_dataset_mean(self):
        """Crops larger than the 32x64 images need padding; the dataset mean fills in for an unset pad color."""
        cfg = tiny_train_config(epochs=1, eval_every=0, transform=TransformConfig(crop_size=64, scale_min=1.0, scale_max=1.0))
        self.assertIsNone(cfg.transform.pad_image_value)
        patch, history = train_patch(tiny_model(), self.dataset, cfg)
        self.assertEqual(len(history.records), 1)
        self.assertEqual(patch.shape, (3, 5, 5))

    def test_history_and_meta(self):
        adapter = tiny_model()
        epochs_seen = []
        patch, history = train_patch(
            adapter, self.dataset, tiny_train_config(epochs=2),
            on_epoch_end=lambda epoch, patch, record, history: epochs_seen.append(epoch),
        )
        self.assertEqual([record.epoch for record in history.records], [1, 2])
        self.assertEqual(epochs_seen, [1, 2])
        self.assertTrue(all(record.eval_miou is not None for record in history.records))
        self.assertEqual(patch.meta.source_model, "tiny_cnn")
        self.assertEqual(patch.meta.train_epochs, 2)
        self.assertEqual(patch.meta.step_size, 0.005)
        self.assertEqual(patch.shape, (3, 5, 5))

    def test_parameters_frozen(self):
        adapter = tiny_model()
        before = adapter.parameter_checksum()
        train_patch(adapter, self.dataset, tiny_train_config(epochs=3, eval_every=0))
        self.assertEqual(adapter.parameter_checksum(), before)

    def test_deterministic(self):
        first, _ = train_patch(tiny_model(), self.dataset, tiny_train_config())
        second, _ = train_patch(tiny_model(), self.dataset, tiny_train_config())
        self.assertTrue(torch.equal(first.values, second.values))

    def test_zero_step_size_keeps_initial_patch(self):
        cfg = tiny_train_config(step_size=0.0)
        patch, _ = train_patch(tiny_model(), self.dataset, cfg)
        self.assertTrue(torch.equal(patch.values, init_patch(cfg).values))

    def test_decay_starts_at_epoch_zero(self):
        adapter = tiny_model()
        decay = DecayLogger(adapter, tiny_dataset(3, split="val"))
        train_patch(adapter, self.dataset, tiny_train_config(epochs=2), decay=decay)
        self.assertEqual([point.epoch for point in decay.points], [0, 1, 2])

    def test_eval_every(self):
        _, history = train_patch(tiny_model(), self.dataset, tiny_train_config(epochs=3, eval_every=2))
        self.assertEqual([record.eval_miou is not None for record in history.records], [False, True, True])

    def test_resume_matches_uninterrupted(self):
        """One epoch, then a resumed second epoch, equals two epochs in one go."""
        full_patch, full_history = train_patch(tiny_model(), self.dataset, tiny_train_config(epochs=2))

        half_patch, half_history = train_patch(tiny_model(), self.dataset, tiny_train_config(epochs=1))
        resumed_patch, resumed_history = train_patch(
            tiny_model(), self.dataset, tiny_train_config(epochs=2),
            initial_patch=half_patch, start_epoch=1, history=half_history,
        )
        self.assertTrue(torch.equal(resumed_patch.values, full_patch.values))
        self.assertEqual(len(resumed_history), 2)
        self.assertEqual(
            [record.mean_loss for record in resumed_history.records],
            [record.mean_loss for record in full_history.records],
        )

    def test_empty_dataset(self):
        with self.assertRaises(EmptyDataset):
            train_patch(tiny_model(), self.dataset.subset([]), tiny_train_config())


if __name__ == '__main__':
    unittest.main()
