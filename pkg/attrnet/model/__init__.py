"""The attribute network: configuration, parameters, forward pass and checkpoints."""
from attrnet.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from attrnet.model.config import LayerSpec, ModelConfig, build_dan_vgg16, build_tinydan, set_trainable
from attrnet.model.network import LayerActivation, forward, forward_with_activations
from attrnet.model.params import ParameterSet, initialize, mark_trainable, warm_start

__all__ = [
    "LayerSpec",
    "ModelConfig",
    "build_tinydan",
    "build_dan_vgg16",
    "set_trainable",
    "ParameterSet",
    "initialize",
    "mark_trainable",
    "warm_start",
    "forward",
    "forward_with_activations",
    "LayerActivation",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]
