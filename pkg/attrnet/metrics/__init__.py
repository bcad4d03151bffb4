"""Multi-label evaluation: AP, mAP, ROC-AUC and their reports."""
from attrnet.metrics.ranking import (
    average_precision,
    binarize_eval_labels,
    macro_map,
    micro_map,
    micro_roc_auc,
    precision_recall_curve,
    roc_auc,
    roc_curve,
)
from attrnet.metrics.report import (
    ClassMetrics,
    CurvePoint,
    GroupMetrics,
    MetricsReport,
    build_report,
    evaluate,
    predict_scores,
    write_curves_csv,
    write_report_json,
)

__all__ = [
    "binarize_eval_labels",
    "average_precision",
    "roc_auc",
    "precision_recall_curve",
    "roc_curve",
    "micro_map",
    "micro_roc_auc",
    "macro_map",
    "ClassMetrics",
    "CurvePoint",
    "GroupMetrics",
    "MetricsReport",
    "build_report",
    "evaluate",
    "predict_scores",
    "write_report_json",
    "write_curves_csv",
]
