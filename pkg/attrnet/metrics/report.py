"""Evaluating a checkpoint on a split and assembling the metrics report."""
from __future__ import annotations

import csv
import io
from collections.abc import Callable, Iterable, Sequence
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import Field

from attrnet.consts import CURVE_COLUMNS, AttributeGroup, CropMode, CurveKind, Split
from attrnet.data.preprocess import prepare_views
from attrnet.data.records import AttributeSchema, DatasetRecord
from attrnet.errors import ConfigMismatchError, ParameterError, UndefinedMetricError
from attrnet.generic.models import AttrNetModel
from attrnet.metrics.ranking import (
    average_precision,
    binarize_eval_labels,
    macro_mean,
    micro_map,
    micro_roc_auc,
    precision_recall_curve,
    roc_auc,
    roc_curve,
)
from attrnet.model.checkpoint import Checkpoint
from attrnet.model.network import forward
from attrnet.model.params import parameters_from_arrays
from attrnet.tensor import Tensor, no_grad
from attrnet.utils import atomic_write_text


class CurvePoint(AttrNetModel):
    class_name: str
    kind: CurveKind
    x: float
    """Recall for PR curves, false positive rate for ROC curves."""
    y: float
    """Precision for PR curves, true positive rate for ROC curves."""


class ClassMetrics(AttrNetModel):
    name: str
    group: AttributeGroup
    positives: int
    negatives: int
    ap: float | None = None
    """None when the class has no positives; such classes are left out of every mean."""
    roc_auc: float | None = None
    """None unless the class has both positives and negatives."""


class GroupMetrics(AttrNetModel):
    """Aggregates over a set of classes. Micro values pool every (sample, class) pair; macro values average the
    per-class values which are defined.
    """

    name: str
    """An attribute group, or `overall`."""
    classes: tuple[str, ...]
    micro_map: float | None = None
    macro_map: float | None = None
    micro_roc_auc: float | None = None
    macro_roc_auc: float | None = None
    undefined_ap_classes: tuple[str, ...] = ()


class MetricsReport(AttrNetModel):
    split: Split | None = None
    crop_mode: CropMode
    num_samples: int
    fallback_count: int = 0
    """Records evaluated whole because they had no bbox although `crop_mode` was `bbox`."""
    classes: tuple[ClassMetrics, ...]
    overall: GroupMetrics
    groups: tuple[GroupMetrics, ...]
    excluded_classes: tuple[str, ...] = ()
    """Classes left out on request."""
    curves: tuple[CurvePoint, ...] = Field(default=(), exclude=True)
    """Written separately, see `write_curves_csv`."""

    def group(self, name: str) -> GroupMetrics:
        for group in self.groups:
            if group.name == name:
                return group
        raise KeyError(name)


def _defined(
    metric: Callable[[np.ndarray, np.ndarray], float],
    scores: np.ndarray,
    truths: np.ndarray,
) -> float | None:
    try:
        return metric(scores, truths)
    except UndefinedMetricError:
        return None


def _defined_mean(values: Sequence[float | None], what: str) -> float | None:
    try:
        return macro_mean(values, what)
    except UndefinedMetricError:
        return None


def class_metrics(name: str, group: AttributeGroup, scores: np.ndarray, truths: np.ndarray) -> ClassMetrics:
    positives = int(truths.sum())
    return ClassMetrics(
        name=name,
        group=group,
        positives=positives,
        negatives=int(truths.size - positives),
        ap=_defined(average_precision, scores, truths),
        roc_auc=_defined(roc_auc, scores, truths),
    )


def class_curves(name: str, scores: np.ndarray, truths: np.ndarray) -> list[CurvePoint]:
    points: list[CurvePoint] = []
    try:
        recall, precision, _ = precision_recall_curve(scores, truths)
        points += [CurvePoint(class_name=name, kind=CurveKind.pr, x=x, y=y) for x, y in zip(recall, precision)]
        fpr, tpr, _ = roc_curve(scores, truths)
        points += [CurvePoint(class_name=name, kind=CurveKind.roc, x=x, y=y) for x, y in zip(fpr, tpr)]
    except UndefinedMetricError:
        pass
    return points


def group_metrics(
    name: str,
    columns: Sequence[int],
    scores: np.ndarray,
    truths: np.ndarray,
    per_class: Sequence[ClassMetrics],
) -> GroupMetrics:
    members = [per_class[column] for column in columns]
    group_scores = scores[:, list(columns)]
    group_truths = truths[:, list(columns)]
    aps = [metrics.ap for metrics in members]
    aucs = [metrics.roc_auc for metrics in members]
    return GroupMetrics(
        name=name,
        classes=tuple(metrics.name for metrics in members),
        micro_map=_defined(micro_map, group_scores, group_truths),
        macro_map=_defined_mean(aps, "AP"),
        micro_roc_auc=_defined(micro_roc_auc, group_scores, group_truths),
        macro_roc_auc=_defined_mean(aucs, "ROC-AUC"),
        undefined_ap_classes=tuple(metrics.name for metrics in members if metrics.ap is None),
    )


def build_report(
    scores: np.ndarray,
    truths: np.ndarray,
    schema: AttributeSchema,
    *,
    crop_mode: CropMode,
    split: Split | None = None,
    exclude_classes: Iterable[str] = (),
    fallback_count: int = 0,
) -> MetricsReport:
    """Compute per-class, per-group and overall metrics from `[M,N]` scores and binary truths.

    Classes named in `exclude_classes` are dropped before anything is computed. Classes without positives get no
    AP and are skipped by the macro means; they are listed in each aggregate's `undefined_ap_classes`.
    """
    excluded = tuple(exclude_classes)
    for name in excluded:
        schema.index_of(name)
    kept = [index for index, name in enumerate(schema.class_names) if name not in excluded]
    if not kept:
        raise ParameterError("every class was excluded from evaluation")

    per_class = [
        class_metrics(name, schema.group_of(name), scores[:, index], truths[:, index])
        for index, name in enumerate(schema.class_names)
    ]
    curves = [
        point
        for index in kept
        for point in class_curves(schema.class_names[index], scores[:, index], truths[:, index])
    ]
    groups = []
    for group, indices in schema.group_indices().items():
        members = [index for index in indices if index in kept]
        if members:
            groups.append(group_metrics(str(group), members, scores, truths, per_class))
    overall = group_metrics("overall", kept, scores, truths, per_class)
    if overall.undefined_ap_classes:
        missing = ", ".join(overall.undefined_ap_classes)
        logger.warning(f"classes without positives, left out of macro means: {missing}")

    return MetricsReport(
        split=split,
        crop_mode=crop_mode,
        num_samples=int(scores.shape[0]),
        fallback_count=fallback_count,
        classes=tuple(per_class[index] for index in kept),
        overall=overall,
        groups=tuple(groups),
        excluded_classes=excluded,
        curves=tuple(curves),
    )


def checkpoint_schema(checkpoint: Checkpoint) -> AttributeSchema:
    """The checkpoint's schema, or generic `class_<i>` names in group `other` if it has none."""
    if checkpoint.attribute_schema is not None:
        return checkpoint.attribute_schema
    return AttributeSchema.ungrouped(f"class_{index}" for index in range(checkpoint.config.num_classes))


def predict_scores(
    checkpoint: Checkpoint,
    records: Sequence[DatasetRecord],
    crop_mode: CropMode = CropMode.whole,
    *,
    batch_size: int = 32,
    max_workers: int | None = None,
) -> tuple[np.ndarray, int]:
    """Score `records` in eval mode: optional bbox crop, resize, mean subtraction, center crop, forward.

    Returns:
        tuple[np.ndarray, int]: `[M,N]` float64 sigmoid scores, and how many records fell back to the whole
            image for lack of a bbox.
    """
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    views = prepare_views(
        records,
        crop_bbox=crop_mode == CropMode.bbox,
        canonical=checkpoint.canonical_size,
        mean_rgb=checkpoint.mean_rgb,
        max_workers=max_workers,
    )
    params = parameters_from_arrays(checkpoint.config, checkpoint.params)
    crop = checkpoint.crop_size
    top = (checkpoint.canonical_size - crop) // 2
    rng = np.random.default_rng(0)
    batches: list[np.ndarray] = []
    with no_grad():
        for start in range(0, len(views), batch_size):
            images = views.images[start : start + batch_size, :, top : top + crop, top : top + crop]
            scores, _ = forward(checkpoint.config, params, Tensor(np.ascontiguousarray(images)), False, rng)
            batches.append(scores.data.astype(np.float64))
    if not batches:
        return np.zeros((0, checkpoint.config.num_classes)), views.fallback_count
    return np.concatenate(batches), views.fallback_count


def evaluate(
    checkpoint: Checkpoint,
    records: Sequence[DatasetRecord],
    schema: AttributeSchema,
    crop_mode: CropMode = CropMode.whole,
    *,
    split: Split | None = None,
    exclude_classes: Iterable[str] = (),
    batch_size: int = 32,
    max_workers: int | None = None,
) -> MetricsReport:
    """Evaluate `checkpoint` on `records`, whole-image or bbox-cropped with a 10% margin.

    Ambiguous labels count as positive. Undefined per-class metrics become exclusions, never failures.

    Raises:
        ParameterError: If there are no records.
        ConfigMismatchError: If the dataset's classes differ from the checkpoint's.
    """
    if not records:
        raise ParameterError("cannot evaluate on an empty split")
    trained_schema = checkpoint_schema(checkpoint)
    if checkpoint.attribute_schema is not None and trained_schema.class_names != schema.class_names:
        raise ConfigMismatchError("the dataset's classes differ from the classes the checkpoint was trained on")
    if schema.num_classes != checkpoint.config.num_classes:
        raise ConfigMismatchError(
            f"the dataset has {schema.num_classes} classes, the checkpoint {checkpoint.config.num_classes}",
        )
    scores, fallback_count = predict_scores(
        checkpoint,
        records,
        crop_mode,
        batch_size=batch_size,
        max_workers=max_workers,
    )
    truths = binarize_eval_labels(np.array([record.labels for record in records]), schema.label_scheme)
    report = build_report(
        scores,
        truths,
        schema,
        crop_mode=crop_mode,
        split=split,
        exclude_classes=exclude_classes,
        fallback_count=fallback_count,
    )
    logger.info(
        f"evaluated {len(records)} records ({crop_mode}): micro mAP {report.overall.micro_map}, "
        f"macro mAP {report.overall.macro_map}, ROC-AUC {report.overall.micro_roc_auc}",
    )
    return report


def write_report_json(report: MetricsReport, path: Path | str) -> None:
    atomic_write_text(Path(path), report.to_json_safe(indent=2) + "\n")
    logger.info(f"wrote metrics report {path}")


def write_curves_csv(report: MetricsReport, path: Path | str) -> None:
    """Write every curve point as a `class,kind,x,y` row."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for point in report.curves:
        writer.writerow([point.class_name, point.kind, repr(point.x), repr(point.y)])
    atomic_write_text(Path(path), buffer.getvalue())
    logger.info(f"wrote {len(report.curves)} curve points to {path}")


__all__ = [
    "CurvePoint",
    "ClassMetrics",
    "GroupMetrics",
    "MetricsReport",
    "build_report",
    "predict_scores",
    "evaluate",
    "checkpoint_schema",
    "write_report_json",
    "write_curves_csv",
]
