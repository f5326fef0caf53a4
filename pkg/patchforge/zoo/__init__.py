"""
Model zoo: adapter contract, registry, toy reference models and their pretraining
"""
from patchforge.zoo.adapter import ModelAdapter, TorchSegmentationAdapter
from patchforge.zoo.registry import get_adapter, load_plugin, register_adapter, registered_names
from patchforge.zoo.toy import TinyAttention, TinyCNN, build_toy_model

__all__ = [
    "ModelAdapter",
    "TorchSegmentationAdapter",
    "TinyAttention",
    "TinyCNN",
    "build_toy_model",
    "get_adapter",
    "load_plugin",
    "register_adapter",
    "registered_names",
]
