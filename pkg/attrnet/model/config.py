"""Layer specifications, network configurations and the layer freezing rules of two-phase training."""
from __future__ import annotations

from collections.abc import Sequence

from pydantic import Field, model_validator
from typing_extensions import Self

from attrnet.consts import PARAMETRIC_LAYER_KINDS, VGG_CROP_SIZE, LayerKind, Phase
from attrnet.errors import ConfigError
from attrnet.generic.models import AttrNetModel
from attrnet.tensor.ops import conv_output_size


class LayerSpec(AttrNetModel):
    """One layer of a network. Which of the size fields apply depends on `kind`."""

    name: str = Field(min_length=1)
    """Unique within a `ModelConfig`, e.g. `conv1_1` or `fcA`."""
    kind: LayerKind
    block_id: int | None = None
    """The VGG-style block a layer belongs to; conv, relu and pool layers of one block share it."""
    frozen: bool = False
    """When True, the optimizer never updates this layer's parameters."""

    out_channels: int | None = Field(default=None, ge=1)
    """conv only."""
    kernel_size: int | None = Field(default=None, ge=1)
    """conv only."""
    stride: int = Field(default=1, ge=1)
    padding: int = Field(default=0, ge=0)
    out_features: int | None = Field(default=None, ge=1)
    """affine only."""
    rate: float | None = Field(default=None, ge=0, lt=1)
    """dropout only."""

    @model_validator(mode="after")
    def kind_specific_fields(self) -> Self:
        if self.kind == LayerKind.conv and (self.out_channels is None or self.kernel_size is None):
            raise ValueError(f"conv layer {self.name} needs out_channels and kernel_size")
        if self.kind == LayerKind.affine and self.out_features is None:
            raise ValueError(f"affine layer {self.name} needs out_features")
        if self.kind == LayerKind.dropout and self.rate is None:
            raise ValueError(f"dropout layer {self.name} needs a rate")
        return self

    @property
    def has_parameters(self) -> bool:
        return self.kind in PARAMETRIC_LAYER_KINDS

    def architecture_key(self) -> tuple:
        """Everything about the layer except its freeze flag."""
        return (
            self.name,
            self.kind,
            self.block_id,
            self.out_channels,
            self.kernel_size,
            self.stride,
            self.padding,
            self.out_features,
            self.rate,
        )


def layer_output_shape(layer: LayerSpec, input_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Return the per-sample output shape of `layer` given its per-sample input shape.

    Raises:
        ConfigError: If the layer cannot consume `input_shape`.
    """
    if layer.kind == LayerKind.conv:
        if len(input_shape) != 3:
            raise ConfigError(f"{layer.name}: conv needs a [C,H,W] input, got {input_shape}")
        assert layer.kernel_size is not None and layer.out_channels is not None
        _, height, width = input_shape
        if layer.kernel_size > min(height, width) + 2 * layer.padding:
            raise ConfigError(f"{layer.name}: kernel {layer.kernel_size} does not fit {height}x{width}")
        return (
            layer.out_channels,
            conv_output_size(height, layer.kernel_size, layer.stride, layer.padding),
            conv_output_size(width, layer.kernel_size, layer.stride, layer.padding),
        )
    if layer.kind == LayerKind.pool:
        if len(input_shape) != 3 or input_shape[1] % 2 or input_shape[2] % 2:
            raise ConfigError(f"{layer.name}: pooling needs a [C,H,W] input with even H and W, got {input_shape}")
        return (input_shape[0], input_shape[1] // 2, input_shape[2] // 2)
    if layer.kind == LayerKind.flatten:
        if len(input_shape) != 3:
            raise ConfigError(f"{layer.name}: flatten needs a [C,H,W] input, got {input_shape}")
        return (input_shape[0] * input_shape[1] * input_shape[2],)
    if layer.kind == LayerKind.affine:
        if len(input_shape) != 1:
            raise ConfigError(f"{layer.name}: affine needs a flat input, got {input_shape}")
        assert layer.out_features is not None
        return (layer.out_features,)
    return input_shape


class ModelConfig(AttrNetModel):
    """An ordered stack of layers plus the facts the trainer needs about it.

    Construction validates that every layer can consume its predecessor's output.
    """

    layers: tuple[LayerSpec, ...]
    input_size: tuple[int, int, int]
    """(channels, height, width) of one input sample."""
    num_classes: int = Field(ge=1)
    finetune_boundary: str
    """The earliest conv layer unfrozen in phase 2."""

    @model_validator(mode="after")
    def validate_topology(self) -> Self:
        names = [layer.name for layer in self.layers]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f"layer names must be unique, repeated: {duplicates}")
        if any(size < 1 for size in self.input_size):
            raise ValueError(f"input_size must be positive, got {self.input_size}")
        if not self.layers or self.layers[-1].kind != LayerKind.sigmoid:
            raise ValueError("the final layer must be a sigmoid")
        shapes = self.output_shapes()
        if shapes[-1] != (self.num_classes,):
            raise ValueError(f"the sigmoid must cover exactly {self.num_classes} units, got {shapes[-1]}")
        boundary = self.layer(self.finetune_boundary) if self.finetune_boundary in names else None
        if boundary is None or boundary.kind != LayerKind.conv:
            raise ValueError(f"finetune_boundary {self.finetune_boundary!r} must name a conv layer")
        return self

    def output_shapes(self) -> list[tuple[int, ...]]:
        """Return the per-sample output shape of every layer, in order."""
        shapes: list[tuple[int, ...]] = []
        shape: tuple[int, ...] = tuple(self.input_size)
        for layer in self.layers:
            shape = layer_output_shape(layer, shape)
            shapes.append(shape)
        return shapes

    def input_shapes(self) -> list[tuple[int, ...]]:
        """Return the per-sample input shape of every layer, in order."""
        return [tuple(self.input_size), *self.output_shapes()[:-1]]

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise ConfigError(f"no layer named {name!r}")

    def layer_index(self, name: str) -> int:
        for index, layer in enumerate(self.layers):
            if layer.name == name:
                return index
        raise ConfigError(f"no layer named {name!r}")

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        """Return the shape of every parameter tensor, keyed `<layer>.weight` / `<layer>.bias`."""
        shapes: dict[str, tuple[int, ...]] = {}
        for layer, input_shape in zip(self.layers, self.input_shapes()):
            if layer.kind == LayerKind.conv:
                assert layer.out_channels is not None and layer.kernel_size is not None
                shapes[f"{layer.name}.weight"] = (
                    layer.out_channels,
                    input_shape[0],
                    layer.kernel_size,
                    layer.kernel_size,
                )
                shapes[f"{layer.name}.bias"] = (layer.out_channels,)
            elif layer.kind == LayerKind.affine:
                assert layer.out_features is not None
                shapes[f"{layer.name}.weight"] = (layer.out_features, input_shape[0])
                shapes[f"{layer.name}.bias"] = (layer.out_features,)
        return shapes

    def frozen_parameter_names(self) -> set[str]:
        return {
            f"{layer.name}.{suffix}"
            for layer in self.layers
            if layer.has_parameters and layer.frozen
            for suffix in ("weight", "bias")
        }

    def same_architecture(self, other: ModelConfig) -> bool:
        """Return True if both configs describe the same network, ignoring freeze flags."""
        return (
            self.input_size == other.input_size
            and self.num_classes == other.num_classes
            and [layer.architecture_key() for layer in self.layers]
            == [layer.architecture_key() for layer in other.layers]
        )


def _vgg_blocks(
    conv_widths: Sequence[int],
    convs_per_block: Sequence[int],
) -> list[LayerSpec]:
    layers: list[LayerSpec] = []
    for block, (width, count) in enumerate(zip(conv_widths, convs_per_block), start=1):
        for index in range(1, count + 1):
            layers.append(
                LayerSpec(
                    name=f"conv{block}_{index}",
                    kind=LayerKind.conv,
                    block_id=block,
                    out_channels=width,
                    kernel_size=3,
                    padding=1,
                ),
            )
            layers.append(LayerSpec(name=f"relu{block}_{index}", kind=LayerKind.relu, block_id=block))
        layers.append(LayerSpec(name=f"pool{block}", kind=LayerKind.pool, block_id=block))
    return layers


def _attribute_head(fc_widths: tuple[int, int], num_classes: int, dropout_rate: float) -> list[LayerSpec]:
    fc6_width, fca_width = fc_widths
    return [
        LayerSpec(name="flatten", kind=LayerKind.flatten),
        LayerSpec(name="fc6", kind=LayerKind.affine, out_features=fc6_width),
        LayerSpec(name="relu6", kind=LayerKind.relu),
        LayerSpec(name="drop6", kind=LayerKind.dropout, rate=dropout_rate),
        LayerSpec(name="fcA", kind=LayerKind.affine, out_features=fca_width),
        LayerSpec(name="reluA", kind=LayerKind.relu),
        LayerSpec(name="dropA", kind=LayerKind.dropout, rate=dropout_rate),
        LayerSpec(name="fcB", kind=LayerKind.affine, out_features=num_classes),
        LayerSpec(name="sigmoid", kind=LayerKind.sigmoid),
    ]


def build_tinydan(
    num_classes: int,
    input_size: tuple[int, int, int] = (3, 64, 64),
    *,
    conv_widths: tuple[int, int, int, int] = (16, 32, 64, 64),
    fc_widths: tuple[int, int] = (256, 128),
    dropout_rate: float = 0.5,
) -> ModelConfig:
    """Build the desk-scale attribute network.

    Four VGG-style blocks (two 3x3 convs in each of the first three, one in the last, each block ending in a
    2x2 pool), then fc6, fcA and fcB with ReLU and dropout after the first two, and a sigmoid. The finetune
    boundary is `conv4_1`.

    Args:
        num_classes (int): Width of fcB.
        input_size (tuple[int, int, int], optional): (C, H, W); H and W must be divisible by 16.
            Defaults to (3, 64, 64).
        conv_widths (tuple[int, int, int, int], optional): Channels per block. Defaults to (16, 32, 64, 64).
        fc_widths (tuple[int, int], optional): Widths of fc6 and fcA. Defaults to (256, 128).
        dropout_rate (float, optional): Defaults to 0.5.

    Raises:
        ConfigError: If H or W is not divisible by 16, or `num_classes < 1`.
    """
    if num_classes < 1:
        raise ConfigError(f"num_classes must be >= 1, got {num_classes}")
    _, height, width = input_size
    if height % 16 or width % 16:
        raise ConfigError(f"input height and width must be divisible by 16, got {height}x{width}")
    layers = _vgg_blocks(conv_widths, (2, 2, 2, 1)) + _attribute_head(fc_widths, num_classes, dropout_rate)
    return ModelConfig(
        layers=tuple(layers),
        input_size=input_size,
        num_classes=num_classes,
        finetune_boundary="conv4_1",
    )


def build_dan_vgg16(
    num_classes: int = 25,
    input_size: tuple[int, int, int] = (3, VGG_CROP_SIZE, VGG_CROP_SIZE),
) -> ModelConfig:
    """Build the full-scale topology: the thirteen VGG-16 convs, fc6 4096, fcA 1024, fcB and a sigmoid.

    The finetune boundary is `conv5_1`. Input height and width must be divisible by 32.
    """
    if num_classes < 1:
        raise ConfigError(f"num_classes must be >= 1, got {num_classes}")
    _, height, width = input_size
    if height % 32 or width % 32:
        raise ConfigError(f"input height and width must be divisible by 32, got {height}x{width}")
    layers = _vgg_blocks((64, 128, 256, 512, 512), (2, 2, 3, 3, 3)) + _attribute_head((4096, 1024), num_classes, 0.5)
    return ModelConfig(
        layers=tuple(layers),
        input_size=input_size,
        num_classes=num_classes,
        finetune_boundary="conv5_1",
    )


def set_trainable(config: ModelConfig, phase: Phase) -> ModelConfig:
    """Return a copy of `config` with freeze flags set for `phase`.

    - `phase1`: only affine layers train.
    - `phase2`: every layer from the start of the finetune boundary's block onward trains.
    - `full`: everything trains.
    """
    if phase == Phase.full:
        first_trainable = 0
    elif phase == Phase.phase2:
        boundary = config.layer(config.finetune_boundary)
        first_trainable = config.layer_index(boundary.name)
        if boundary.block_id is not None:
            first_trainable = next(
                index for index, layer in enumerate(config.layers) if layer.block_id == boundary.block_id
            )
    else:
        first_trainable = len(config.layers)

    layers = []
    for index, layer in enumerate(config.layers):
        trainable = index >= first_trainable or layer.kind == LayerKind.affine
        layers.append(layer.model_copy(update={"frozen": not trainable}))
    return config.model_copy(update={"layers": tuple(layers)})


__all__ = [
    "LayerSpec",
    "ModelConfig",
    "layer_output_shape",
    "build_tinydan",
    "build_dan_vgg16",
    "set_trainable",
]
