import math
import unittest

import torch
import torch.nn as nn

from patchforge.core.errors import EmptyBatch
from patchforge.core.loss import attack_loss, batch_loss, correctness_mask, masked_cross_entropy
from patchforge.core.patch import Region
from patchforge.zoo.adapter import TorchSegmentationAdapter


class TestCorrectnessMask(unittest.TestCase):
    """The correctly classified pixel set."""

    def test_excludes_patch_and_ignore(self):
        logits = torch.zeros(2, 3, 3)
        logits[1] = 1.0  # predicts class 1 everywhere
        label = torch.ones(3, 3, dtype=torch.int64)
        label[0, 0] = 255
        label[2, 2] = 0
        cmask = correctness_mask(logits, label, Region(1, 1, 2, 2), ignore_index=255)
        # 9 pixels - ignore - patch - misclassified
        self.assertEqual(cmask.count, 6)
        self.assertFalse(bool(cmask.mask[1, 1]))
        self.assertTrue(bool(cmask.excluded[0, 0]) and bool(cmask.excluded[1, 1]))
        self.assertTrue(bool(cmask.incorrect[2, 2]))
        self.assertEqual(int(cmask.incorrect.sum()), 1)

    def test_ties_go_to_lowest_class(self):
        logits = torch.zeros(3, 1, 1)
        label = torch.zeros(1, 1, dtype=torch.int64)
        self.assertEqual(correctness_mask(logits, label, None, 255).count, 1)


class TestMaskedCrossEntropy(unittest.TestCase):
    """Loss over the correctly classified pixels."""

    def test_hand_computed_value(self):
        logits = torch.tensor([[[2.0, 0.0]], [[0.0, 1.0]]])  # [2, 1, 2]
        label = torch.tensor([[0, 1]])
        cmask = correctness_mask(logits, label, None, 255)
        loss = masked_cross_entropy(logits, label, cmask)
        expected = (math.log(1 + math.exp(-2.0)) + math.log(1 + math.exp(-1.0))) / 2
        self.assertAlmostEqual(float(loss), expected, places=6)

    def test_empty_mask_gives_zero_and_zero_gradient(self):
        logits = torch.tensor([[[0.0]], [[1.0]]], requires_grad=True)
        label = torch.tensor([[0]])
        cmask = correctness_mask(logits, label, None, 255)
        self.assertEqual(cmask.count, 0)
        loss = masked_cross_entropy(logits, label, cmask)
        loss.backward()
        self.assertEqual(float(loss), 0.0)
        self.assertTrue(torch.equal(logits.grad, torch.zeros_like(logits)))

    def test_three_pixels_against_scalar_softmax(self):
        logits = torch.tensor(
            [[[3.0, 0.2, -1.0]], [[1.0, 2.5, 0.5]], [[-0.5, 1.0, 0.9]]], dtype=torch.float64
        )  # [3, 1, 3]
        label = torch.tensor([[0, 1, 2]])
        cmask = correctness_mask(logits, label, None, 255)
        self.assertEqual(cmask.count, 3)

        def scalar_ce(column, target):
            values = [float(logits[c, 0, column]) for c in range(3)]
            peak = max(values)
            log_sum = peak + math.log(sum(math.exp(v - peak) for v in values))
            return log_sum - values[target]

        expected = sum(scalar_ce(column, target) for column, target in enumerate([0, 1, 2])) / 3
        self.assertAlmostEqual(float(masked_cross_entropy(logits, label, cmask)), expected, delta=1e-6)

    def test_per_pixel_shift_invariance(self):
        """Adding the same value to every class logit of a pixel leaves the loss unchanged."""
        generator = torch.Generator().manual_seed(7)
        for _ in range(10):
            logits = torch.randn(4, 6, 6, generator=generator, dtype=torch.float64)
            label = torch.randint(0, 4, (6, 6), generator=generator)
            label[:3] = logits[:, :3].argmax(dim=0)
            shift = 50.0 * torch.randn(1, 6, 6, generator=generator, dtype=torch.float64)
            base = masked_cross_entropy(logits, label, correctness_mask(logits, label, Region(2, 2, 4, 4), 255))
            moved = logits + shift
            shifted = masked_cross_entropy(moved, label, correctness_mask(moved, label, Region(2, 2, 4, 4), 255))
            self.assertAlmostEqual(float(shifted), float(base), delta=1e-6)

    def test_loss_is_non_negative(self):
        generator = torch.Generator().manual_seed(11)
        for _ in range(50):
            logits = 10.0 * torch.randn(3, 5, 5, generator=generator)
            label = logits.argmax(dim=0)
            label[0, :2] = 255
            loss = masked_cross_entropy(logits, label, correctness_mask(logits, label, None, 255))
            self.assertGreaterEqual(float(loss), 0.0)

    def test_batch_mean(self):
        self.assertAlmostEqual(float(batch_loss([torch.tensor(1.0), torch.tensor(3.0)])), 2.0)
        with self.assertRaises(EmptyBatch):
            batch_loss([])

    def test_attack_loss_is_mean_of_images(self):
        generator = torch.Generator().manual_seed(0)
        logits = torch.randn(2, 3, 4, 4, generator=generator)
        labels = logits.argmax(dim=1)
        loss, masks = attack_loss(logits, labels, Region(1, 1, 2, 2), 255)
        singles = [masked_cross_entropy(logits[i], labels[i], masks[i]) for i in range(2)]
        self.assertAlmostEqual(float(loss), float(sum(singles) / 2), places=6)
        self.assertEqual([m.count for m in masks], [15, 15])


class TestInputGradient(unittest.TestCase):
    """Analytic input gradient of the masked loss against central finite differences."""

    def test_finite_differences(self):
        for seed in range(5):
            torch.manual_seed(seed)
            module = nn.Sequential(nn.Conv2d(3, 6, 3, padding=1), nn.Tanh(), nn.Conv2d(6, 2, 1))
            adapter = TorchSegmentationAdapter(module, name="smooth", num_classes=2).to(torch.float64)
            images = torch.rand(1, 3, 4, 4, dtype=torch.float64)

            # labels agree with the clean prediction on most pixels, so the mask is never empty
            clean = adapter.forward(images)
            labels = clean.argmax(dim=1)
            labels[0, 0, :2] = 1 - labels[0, 0, :2]
            cmask = correctness_mask(clean[0], labels[0], None, 255)
            self.assertGreater(cmask.count, 0)

            def fixed_mask_loss(logits):
                return masked_cross_entropy(logits[0], labels[0], cmask)

            _, grad = adapter.value_and_gradient(images, fixed_mask_loss)

            step = 1e-6
            numeric = torch.zeros_like(images)
            flat = images.view(-1)
            for i in range(flat.numel()):
                plus, minus = flat.clone(), flat.clone()
                plus[i] += step
                minus[i] -= step
                f_plus = float(fixed_mask_loss(adapter.forward(plus.view_as(images))))
                f_minus = float(fixed_mask_loss(adapter.forward(minus.view_as(images))))
                numeric.view(-1)[i] = (f_plus - f_minus) / (2 * step)

            error = float((grad - numeric).norm() / max(float(grad.norm()), float(numeric.norm()), 1e-12))
            self.assertLess(error, 1e-4)

            # recomputing the mask inside the loss gives the same gradient
            _, attack_grad = adapter.value_and_gradient(images, lambda logits: attack_loss(logits, labels, None, 255)[0])
            self.assertTrue(torch.allclose(attack_grad, grad, atol=1e-12))


if __name__ == '__main__':
    unittest.main()
