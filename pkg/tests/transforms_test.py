import unittest

import torch

from patchforge.core.errors import ConfigError, InvalidSpec
from patchforge.core.runtime import torch_generator
from patchforge.core.transforms import TransformSpec, apply_transform, identity_spec, sample_transform, scaled_size
from patchforge.models.schemas import TransformConfig


class TestSampleTransform(unittest.TestCase):
    """Draws from the transformation distribution."""

    def test_single_valid_draw(self):
        """Fixed scale 1, no flips, image the size of the crop: the only draw is the identity."""
        cfg = TransformConfig(scale_min=1.0, scale_max=1.0, crop_size=1024, flip_prob=0.0)
        spec = sample_transform(torch_generator(0), cfg, 1024, 1024)
        self.assertEqual(spec, TransformSpec(scale=1.0, flip=False, crop_row0=0, crop_col0=0))

    def test_scale_mean(self):
        """10000 default draws have a mean scale within the 3-sigma band of 1.25."""
        cfg = TransformConfig(crop_size=8)
        generator = torch_generator(1)
        scales = [sample_transform(generator, cfg, 16, 32).scale for _ in range(10000)]
        mean = sum(scales) / len(scales)
        self.assertGreaterEqual(mean, 1.22)
        self.assertLessEqual(mean, 1.28)
        self.assertTrue(all(0.5 <= s <= 2.0 for s in scales))

    def test_downscaled_image_is_padded(self):
        """1024x2048 at scale 0.5 is 512x1024, padded to the crop, so the origin is (0, 0)."""
        cfg = TransformConfig(scale_min=0.5, scale_max=0.5, crop_size=1024)
        spec = sample_transform(torch_generator(2), cfg, 1024, 2048)
        self.assertEqual((scaled_size(1024, 0.5), scaled_size(2048, 0.5)), (512, 1024))
        self.assertEqual((spec.crop_row0, spec.crop_col0), (0, 0))

    def test_same_stream_same_draws(self):
        cfg = TransformConfig(crop_size=16)
        first = [sample_transform(torch_generator(5, 1), cfg, 32, 64) for _ in range(20)]
        second = [sample_transform(torch_generator(5, 1), cfg, 32, 64) for _ in range(20)]
        self.assertEqual(first, second)

    def test_crop_window_inside_padded_frame(self):
        cfg = TransformConfig(crop_size=24)
        generator = torch_generator(9)
        for _ in range(200):
            spec = sample_transform(generator, cfg, 20, 40)
            padded_h = max(scaled_size(20, spec.scale), 24)
            padded_w = max(scaled_size(40, spec.scale), 24)
            self.assertLessEqual(spec.crop_row0 + 24, padded_h)
            self.assertLessEqual(spec.crop_col0 + 24, padded_w)


class TestApplyTransform(unittest.TestCase):
    """Applying a single draw to an image/label pair."""

    def setUp(self):
        generator = torch.Generator().manual_seed(0)
        self.image = torch.rand(3, 16, 16, generator=generator)
        self.label = torch.randint(0, 3, (16, 16), generator=generator)
        self.cfg = TransformConfig(crop_size=16)

    def test_identity(self):
        """scale 1, no flip, zero offset on an SxS input is the identity."""
        image, label = apply_transform(self.image, self.label, identity_spec(), self.cfg)
        self.assertTrue(torch.equal(image, self.image))
        self.assertTrue(torch.equal(label, self.label))

    def test_flip_involution(self):
        spec = TransformSpec(scale=1.0, flip=True, crop_row0=0, crop_col0=0)
        once_image, once_label = apply_transform(self.image, self.label, spec, self.cfg)
        self.assertFalse(torch.equal(once_image, self.image))
        twice_image, twice_label = apply_transform(once_image, once_label, spec, self.cfg)
        self.assertTrue(torch.equal(twice_image, self.image))
        self.assertTrue(torch.equal(twice_label, self.label))

    def test_nearest_labels_keep_classes(self):
        """Resized labels only hold input classes or the ignore index, over 50 seeded draws."""
        label = (torch.arange(40 * 60).view(40, 60) // 7 % 2).to(torch.int64)
        image = torch.rand(3, 40, 60, generator=torch.Generator().manual_seed(1))
        cfg = TransformConfig(crop_size=32, pad_image_value=(0.5, 0.5, 0.5))
        generator = torch_generator(4)
        for _ in range(50):
            spec = sample_transform(generator, cfg, 40, 60)
            out_image, out_label = apply_transform(image, label, spec, cfg)
            self.assertEqual(tuple(out_image.shape), (3, 32, 32))
            self.assertTrue(set(out_label.unique().tolist()) <= {0, 1, 255})
            self.assertGreaterEqual(float(out_image.min()), 0.0)
            self.assertLessEqual(float(out_image.max()), 1.0)

    def test_scale_17_keeps_classes(self):
        spec = TransformSpec(scale=1.7, flip=False, crop_row0=3, crop_col0=5)
        _, label = apply_transform(self.image, (self.label > 0).to(torch.int64), spec, self.cfg)
        self.assertTrue(set(label.unique().tolist()) <= {0, 1, 255})

    def test_padding_values(self):
        """Padding goes on the bottom/right with the configured image and label values."""
        cfg = TransformConfig(crop_size=20, pad_image_value=(0.1, 0.2, 0.3), pad_label_value=255)
        image, label = apply_transform(self.image, self.label, identity_spec(), cfg)
        self.assertTrue(torch.equal(image[:, :16, :16], self.image))
        self.assertTrue(bool((label[16:, :] == 255).all()))
        self.assertTrue(bool((label[:, 16:] == 255).all()))
        self.assertAlmostEqual(float(image[2, 19, 19]), 0.3, places=6)

    def test_unset_pad_value_needs_a_dataset_mean(self):
        cfg = TransformConfig(crop_size=20)
        self.assertIsNone(cfg.pad_image_value)
        with self.assertRaises(ConfigError):
            apply_transform(self.image, self.label, identity_spec(), cfg)
        filled = cfg.with_pad_default((0.25, 0.5, 0.75))
        image, _ = apply_transform(self.image, self.label, identity_spec(), filled)
        self.assertAlmostEqual(float(image[0, 19, 19]), 0.25, places=6)
        self.assertAlmostEqual(float(image[2, 19, 19]), 0.75, places=6)

    def test_explicit_pad_value_wins_over_dataset_mean(self):
        cfg = TransformConfig(crop_size=20, pad_image_value=(0.1, 0.2, 0.3))
        self.assertEqual(cfg.with_pad_default((0.5, 0.5, 0.5)).pad_image_value, (0.1, 0.2, 0.3))

    def test_invalid_crop(self):
        spec = TransformSpec(scale=1.0, flip=False, crop_row0=1, crop_col0=0)
        with self.assertRaises(InvalidSpec):
            apply_transform(self.image, self.label, spec, self.cfg)


if __name__ == '__main__':
    unittest.main()
