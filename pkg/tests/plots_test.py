import tempfile
import unittest
from pathlib import Path

import numpy as np
import torch

from patchforge.data.cityscapes import CITYSCAPES_PALETTE
from patchforge.eval.plots import colorize, save_prediction_panel


class TestColorize(unittest.TestCase):
    """Class-id masks rendered as RGB arrays."""

    def test_cityscapes_palette(self):
        mask = torch.tensor([[0, 13], [18, 255]])
        rgb = colorize(mask, num_classes=19)
        self.assertEqual(rgb.shape, (2, 2, 3))
        np.testing.assert_allclose(rgb[0, 0], np.array(CITYSCAPES_PALETTE[0]) / 255.0)
        np.testing.assert_allclose(rgb[0, 1], np.array(CITYSCAPES_PALETTE[13]) / 255.0)
        np.testing.assert_allclose(rgb[1, 1], np.zeros(3))

    def test_small_class_count(self):
        mask = torch.tensor([[0, 1], [2, 255]])
        rgb = colorize(mask, num_classes=3)
        self.assertEqual(rgb.shape, (2, 2, 3))
        self.assertTrue(((rgb >= 0.0) & (rgb <= 1.0)).all())
        self.assertFalse(np.allclose(rgb[0, 0], rgb[0, 1]))
        np.testing.assert_allclose(rgb[1, 1], np.zeros(3))

    def test_prediction_panel_written(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "panels" / "p__m__0.png"
            pred = torch.zeros(8, 8, dtype=torch.long)
            written = save_prediction_panel(path, torch.rand(3, 8, 8), pred, pred + 1, num_classes=3, title="p on m")
            self.assertTrue(Path(written).is_file())


if __name__ == '__main__':
    unittest.main()
