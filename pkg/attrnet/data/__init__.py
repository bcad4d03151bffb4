"""Datasets: records, synthetic generation, manifests and preprocessing."""
from attrnet.data.labels import map_labels, merge_classes, target_matrix
from attrnet.data.manifest import load_manifest, write_manifest
from attrnet.data.preprocess import (
    PreparedSplit,
    augment,
    compute_mean_rgb,
    crop_bbox_margin,
    hflip,
    prepare_views,
    preprocess,
)
from attrnet.data.records import AttributeSchema, BBox, DatasetRecord, records_of_split
from attrnet.data.synthetic import SyntheticConfig, generate_synthetic

__all__ = [
    "AttributeSchema",
    "BBox",
    "DatasetRecord",
    "records_of_split",
    "map_labels",
    "target_matrix",
    "merge_classes",
    "load_manifest",
    "write_manifest",
    "SyntheticConfig",
    "generate_synthetic",
    "crop_bbox_margin",
    "preprocess",
    "augment",
    "hflip",
    "compute_mean_rgb",
    "prepare_views",
    "PreparedSplit",
]
