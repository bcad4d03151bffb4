"""Class-conditioned attention maps and their image exports."""
from attrnet.attention.excitation import (
    INPUT_LAYER,
    AttentionMap,
    AttentionMapMetadata,
    affine_excitation,
    conv_excitation,
    excitation_map,
    excitation_map_from_params,
    input_view,
    network_input,
)
from attrnet.attention.heatmap import export_heatmap, overlay_pixels

__all__ = [
    "INPUT_LAYER",
    "AttentionMap",
    "AttentionMapMetadata",
    "affine_excitation",
    "conv_excitation",
    "excitation_map",
    "excitation_map_from_params",
    "input_view",
    "network_input",
    "export_heatmap",
    "overlay_pixels",
]
