import itertools
import unittest

import torch

from patchforge.core.errors import ClassIdOutOfRange, NoDefinedClasses
from patchforge.core.metrics import (
    ConfusionMatrix,
    SpreadProfile,
    chebyshev_distance_map,
    iou_per_class,
    miou,
    spread_profile,
    update_confusion,
)
from patchforge.core.patch import Region


def oracle_counts(preds, labels, num_classes):
    """Per-class (intersection, union) pixel counts by brute force over every pixel."""
    inter = [0] * num_classes
    union = [0] * num_classes
    for pred, label in zip(preds, labels):
        for p, g in zip(pred.flatten().tolist(), label.flatten().tolist()):
            for c in range(num_classes):
                if p == c and g == c:
                    inter[c] += 1
                if p == c or g == c:
                    union[c] += 1
    return inter, union


class TestConfusionMatrix(unittest.TestCase):
    """Dataset-level IoU from the confusion matrix."""

    def test_matches_pixel_oracle(self):
        """200 random 8x8 masks over 3-5 classes: exact agreement with the per-pixel oracle."""
        generator = torch.Generator().manual_seed(0)
        for trial in range(200):
            num_classes = 3 + trial % 3
            pred = torch.randint(0, num_classes, (8, 8), generator=generator)
            label = torch.randint(0, num_classes, (8, 8), generator=generator)
            cm = ConfusionMatrix(num_classes).update(pred, label)
            inter, union = oracle_counts([pred], [label], num_classes)
            counts = cm.counts
            self.assertEqual(counts.diagonal().tolist(), inter)
            self.assertEqual((counts.sum(0) + counts.sum(1) - counts.diagonal()).tolist(), union)
            expected = [i / u if u else None for i, u in zip(inter, union)]
            self.assertEqual(iou_per_class(cm), expected)

    def test_merge_equals_whole_split(self):
        generator = torch.Generator().manual_seed(1)
        preds = [torch.randint(0, 4, (8, 8), generator=generator) for _ in range(10)]
        labels = [torch.randint(0, 4, (8, 8), generator=generator) for _ in range(10)]
        merged = ConfusionMatrix(4)
        for pred, label in zip(preds, labels):
            merged = merged + ConfusionMatrix(4).update(pred, label)
        whole = ConfusionMatrix(4).update(torch.cat(preds), torch.cat(labels))
        self.assertEqual(merged, whole)
        self.assertEqual(miou(merged), miou(whole))

    def test_undefined_classes_excluded(self):
        cm = ConfusionMatrix(3).update(torch.tensor([[0, 0]]), torch.tensor([[0, 0]]))
        self.assertEqual(iou_per_class(cm), [1.0, None, None])
        self.assertEqual(miou(cm), 1.0)

    def test_no_defined_classes(self):
        with self.assertRaises(NoDefinedClasses):
            miou(ConfusionMatrix(3))

    def test_ignore_and_region_excluded(self):
        pred = torch.zeros(4, 4, dtype=torch.int64)
        label = torch.zeros(4, 4, dtype=torch.int64)
        label[0, 0] = 255
        cm = ConfusionMatrix(2).update(pred, label, Region(1, 1, 3, 3), ignore_index=255)
        self.assertEqual(cm.total, 16 - 1 - 4)

    def test_update_confusion_matches_method(self):
        pred = torch.tensor([[0, 1], [1, 1]])
        label = torch.tensor([[0, 1], [0, 255]])
        cm = update_confusion(ConfusionMatrix(2), pred, label, None, 255)
        self.assertEqual(cm, ConfusionMatrix(2).update(pred, label, None, 255))
        self.assertEqual(cm.total, 3)

    def test_two_class_example(self):
        cm = ConfusionMatrix(2, torch.tensor([[3, 1], [2, 4]]))
        iou = iou_per_class(cm)
        self.assertAlmostEqual(iou[0], 0.5, places=6)
        self.assertAlmostEqual(iou[1], 4 / 7, places=6)
        self.assertAlmostEqual(iou[1], 0.5714, places=4)
        self.assertAlmostEqual(miou(cm), 0.5357, delta=1e-4)

    def test_accumulation_ignores_pixel_order(self):
        generator = torch.Generator().manual_seed(3)
        pred = torch.randint(0, 4, (1, 60), generator=generator)
        label = torch.randint(0, 4, (1, 60), generator=generator)
        reference = ConfusionMatrix(4).update(pred, label)
        for seed in range(5):
            order = torch.randperm(60, generator=torch.Generator().manual_seed(seed))
            shuffled = ConfusionMatrix(4).update(pred[:, order], label[:, order])
            self.assertEqual(shuffled, reference)
        halves = ConfusionMatrix(4).update(pred[:, 30:], label[:, 30:]).update(pred[:, :30], label[:, :30])
        self.assertEqual(halves, reference)

    def test_correcting_a_pixel_never_lowers_miou(self):
        """Every 2-class matrix with entries up to 3: moving one pixel onto the diagonal keeps or raises MIoU."""
        for a, b, c, d in itertools.product(range(4), repeat=4):
            counts = torch.tensor([[a, b], [c, d]])
            if counts.sum() == 0:
                continue
            before = miou(ConfusionMatrix(2, counts))
            for g in range(2):
                p = 1 - g
                if counts[g, p] == 0:
                    continue
                moved = counts.clone()
                moved[g, p] -= 1
                moved[g, g] += 1
                self.assertGreaterEqual(miou(ConfusionMatrix(2, moved)), before - 1e-12, f"{counts.tolist()} row {g}")

    def test_class_out_of_range(self):
        with self.assertRaises(ClassIdOutOfRange):
            ConfusionMatrix(2).update(torch.zeros(2, 2, dtype=torch.int64), torch.full((2, 2), 5))


class TestSpreadProfile(unittest.TestCase):
    """Prediction flips binned by distance from the patch."""

    def test_distance_map(self):
        distance = chebyshev_distance_map(5, 5, Region(2, 2, 3, 3))
        self.assertEqual(int(distance[2, 2]), 0)
        self.assertEqual(int(distance[0, 0]), 2)
        self.assertEqual(int(distance[2, 4]), 2)
        self.assertEqual(int(distance[1, 3]), 1)

    def test_binning_and_far_flips(self):
        """Flips at distance 1 and 6 on a 1px patch; bin width 2, far radius 2."""
        clean = torch.zeros(13, 13, dtype=torch.int64)
        attacked = clean.clone()
        region = Region(6, 6, 7, 7)
        attacked[6, 6] = 1  # inside the patch, never counted
        attacked[5, 6] = 1  # distance 1
        attacked[0, 6] = 1  # distance 6
        profile = spread_profile(clean, attacked, region, bin_width=2, far_radius=2)
        self.assertEqual(profile.bin_edges, [1, 3, 5, 7])
        # ring of distance d holds 8d pixels
        self.assertEqual(profile.pixel_counts, [8 + 16, 24 + 32, 40 + 48])
        self.assertEqual(profile.flip_counts, [1, 0, 1])
        self.assertEqual(profile.far_flips, 1)
        self.assertEqual(profile.far_flip_ratio, 0.5)

    def test_no_flips(self):
        pred = torch.zeros(8, 8, dtype=torch.int64)
        profile = spread_profile(pred, pred, Region(3, 3, 5, 5), bin_width=4)
        self.assertEqual(profile.total_flips, 0)
        self.assertEqual(profile.far_flip_ratio, 0.0)
        self.assertEqual(profile.far_radius, 4)

    def test_dict_round_trip_and_merge(self):
        clean = torch.zeros(9, 9, dtype=torch.int64)
        attacked = clean.clone()
        attacked[0, 0] = 2
        profile = spread_profile(clean, attacked, Region(4, 4, 5, 5), bin_width=1)
        restored = SpreadProfile.from_dict(profile.to_dict())
        self.assertEqual(restored, profile)
        merged = profile.merge(profile)
        self.assertEqual(merged.total_flips, 2)
        self.assertEqual(merged.pixel_counts, [2 * n for n in profile.pixel_counts])


if __name__ == '__main__':
    unittest.main()
