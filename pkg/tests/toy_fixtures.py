"""Small shared builders for the test suite: everything here runs in well under a second."""
from patchforge.data.synthetic import SyntheticShapes
from patchforge.models.schemas import ToyModelConfig, ToyModelKind, TrainConfig, TransformConfig
from patchforge.zoo.toy import build_toy_model

NUM_CLASSES = 4
HEIGHT = 32
WIDTH = 64

# --set overrides that shrink the toy preset to seconds
TINY_OVERRIDES = [
    "dataset.n_train=6",
    "dataset.n_val=3",
    "dataset.height=32",
    "dataset.width=64",
    "dataset.num_classes=4",
    "model.width=4",
    "pretrain.epochs=1",
    "pretrain.batch_size=3",
    "train.step_size=0.005",
    "train.patch_size=5",
    "train.epochs=1",
    "train.batch_size=3",
    "train.eval_subset=3",
    "transform.crop_size=32",
    "eval.spread_subset=2",
]


def tiny_dataset(n_images: int = 6, split: str = "train", seed: int = 0) -> SyntheticShapes:
    return SyntheticShapes(n_images, height=HEIGHT, width=WIDTH, num_classes=NUM_CLASSES, seed=seed, split=split)


def tiny_model(kind: ToyModelKind = ToyModelKind.TINY_CNN, seed: int = 0, width: int = 4):
    return build_toy_model(ToyModelConfig(kind=kind, num_classes=NUM_CLASSES, width=width, seed=seed))


def tiny_train_config(**changes) -> TrainConfig:
    transform = TransformConfig(crop_size=32, pad_image_value=(0.5, 0.5, 0.5))
    values = dict(step_size=0.005, epochs=2, batch_size=3, patch_size=5, transform=transform, seed=0, eval_every=1, eval_subset=3)
    values.update(changes)
    return TrainConfig(**values)
