"""The `attrnet` command: dataset generation, training, evaluation, prediction and attention maps.

Exit codes: 0 success, 2 configuration error (including invalid flags), 3 I/O error, 4 numeric abort.
"""
from __future__ import annotations

import argparse
import os
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import ValidationError

from attrnet.attention import excitation_map, export_heatmap, input_view, network_input
from attrnet.consts import (
    DEFAULT_CANONICAL_SIZE,
    DEFAULT_CROP_SIZE,
    HISTORY_FILENAME,
    CropMode,
    ExitCode,
    PhaseMode,
    Split,
)
from attrnet.data.imageio import read_image
from attrnet.data.manifest import load_manifest, write_manifest
from attrnet.data.preprocess import prepare_views, training_mean_rgb
from attrnet.data.records import AttributeSchema, BBox, DatasetRecord, records_of_split
from attrnet.data.synthetic import SyntheticConfig, generate_synthetic
from attrnet.errors import AttrNetError, ParameterError
from attrnet.metrics.report import (
    GroupMetrics,
    checkpoint_schema,
    evaluate,
    predict_scores,
    write_curves_csv,
    write_report_json,
)
from attrnet.model.checkpoint import load_checkpoint, save_checkpoint
from attrnet.model.config import build_tinydan
from attrnet.model.params import initialize, warm_start
from attrnet.trainer.config import TrainerConfig
from attrnet.trainer.loop import train_two_phase, write_history_csv
from attrnet.utils import make_rng

LOG_LEVEL_ENV = "ATTRNET_LOG_LEVEL"
HEAD_LAYERS = ("fcA", "fcB")
"""The layers `--reinit-head` re-initializes after a warm start."""


def configure_logging(level: str) -> None:
    """Send loguru output to stderr at `level` and above."""
    logger.remove()
    logger.add(sys.stderr, level=level.upper())


def _parse_bbox(text: str) -> BBox:
    try:
        x0, y0, x1, y1 = (int(part) for part in text.split(","))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected x0,y0,x1,y1 integers, got {text!r}") from e
    return BBox(x0=x0, y0=y0, x1=x1, y1=y1)


def _format_metric(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _group_line(group: GroupMetrics) -> str:
    return (
        f"{group.name:<8} micro_mAP={_format_metric(group.micro_map)} macro_mAP={_format_metric(group.macro_map)} "
        f"micro_ROC_AUC={_format_metric(group.micro_roc_auc)} macro_ROC_AUC={_format_metric(group.macro_roc_auc)}"
    )


# region commands


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = SyntheticConfig(
        train_count=args.train,
        val_count=args.val,
        test_count=args.test,
        image_size=args.size,
        clutter=args.clutter,
        ambiguity_rate=args.ambiguity,
        seed=args.seed,
    )
    records, schema = generate_synthetic(config, max_workers=args.threads)
    write_manifest(records, schema, args.out)

    for split in Split:
        print(f"{split}\t{len(records_of_split(records, split))}")
    positives = np.array([record.labels for record in records]).reshape(len(records), schema.num_classes) == 1
    for name, count in zip(schema.class_names, positives.sum(axis=0)):
        print(f"{name}\t{int(count)}")
    return ExitCode.OK.value


def cmd_train(args: argparse.Namespace) -> int:
    config = TrainerConfig(
        batch_size=args.batch,
        base_lr=args.lr,
        plateau_patience=args.patience,
        max_epochs=args.epochs,
        phase_mode=PhaseMode.two_phase if args.two_phase else PhaseMode.full,
        canonical_size=args.canonical,
        crop_size=args.crop,
        crop_bbox=args.crop_train,
        seed=args.seed,
        max_workers=args.threads,
    )
    records, schema = load_manifest(args.data)
    train_records = records_of_split(records, Split.train)
    val_records = records_of_split(records, args.val_split)
    if not train_records or not val_records:
        raise ParameterError(f"training needs non-empty train and {args.val_split} splits in {args.data}")

    model_config = build_tinydan(
        schema.num_classes,
        (3, config.crop_size, config.crop_size),
        dropout_rate=config.dropout_rate,
    )
    rng = make_rng(config.seed)
    params = initialize(model_config, rng)
    if args.warm_start is not None:
        source = load_checkpoint(args.warm_start, expected_config=None if args.reinit_head else model_config)
        params = warm_start(params, source, HEAD_LAYERS if args.reinit_head else ())

    mean_rgb = training_mean_rgb(train_records, config.crop_bbox)
    train_split, val_split = (
        prepare_views(
            split_records,
            crop_bbox=config.crop_bbox,
            canonical=config.canonical_size,
            mean_rgb=mean_rgb,
            max_workers=config.max_workers,
        )
        for split_records in (train_records, val_records)
    )
    result = train_two_phase(
        model_config,
        params,
        train_split,
        val_split,
        config,
        rng=rng,
        mean_rgb=mean_rgb,
        schema=schema,
    )

    save_checkpoint(args.out, result.best_checkpoint)
    history_path = args.history if args.history is not None else Path(args.out).parent / HISTORY_FILENAME
    write_history_csv(result.history, history_path)
    print(
        f"best epoch {result.best_checkpoint.epoch}, val loss {result.best_checkpoint.best_val_loss:.6f}, "
        f"stopped: {result.stop_reason}",
    )
    return ExitCode.OK.value


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    records, schema = load_manifest(args.data)
    report = evaluate(
        checkpoint,
        records_of_split(records, args.split),
        schema,
        args.crop,
        split=args.split,
        exclude_classes=args.exclude,
        batch_size=args.batch,
        max_workers=args.threads,
    )
    if args.report is not None:
        write_report_json(report, args.report)
    if args.curves is not None:
        write_curves_csv(report, args.curves)

    print(f"{args.split} ({args.crop}), {report.num_samples} images, {report.fallback_count} bbox fallbacks")
    print(_group_line(report.overall))
    for group in report.groups:
        print(_group_line(group))
    return ExitCode.OK.value


def _top_k(scores: np.ndarray, schema: AttributeSchema, k: int) -> list[tuple[str, float]]:
    """The `k` highest scores, descending, ties broken by class order."""
    order = np.argsort(-scores, kind="stable")[:k]
    return [(schema.class_names[index], float(scores[index])) for index in order]


def cmd_predict(args: argparse.Namespace) -> int:
    if args.top < 1:
        raise ParameterError(f"--top must be at least 1, got {args.top}")
    checkpoint = load_checkpoint(args.ckpt)
    schema = checkpoint_schema(checkpoint)
    record = DatasetRecord(
        image_id=Path(args.image).stem or "image",
        pixels=read_image(args.image),
        bbox=args.bbox,
        labels=(0,) * schema.num_classes,
        split=Split.test,
    )
    scores, _ = predict_scores(checkpoint, [record], args.crop, max_workers=args.threads)
    for name, score in _top_k(scores[0], schema, args.top):
        print(f"{name}\t{score:.6f}")
    return ExitCode.OK.value


def cmd_attend(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    class_index = checkpoint_schema(checkpoint).index_of(args.class_name)
    pixels = read_image(args.image)
    attention_map = excitation_map(checkpoint, network_input(checkpoint, pixels), class_index, args.layer)
    overlay, gray, metadata = export_heatmap(attention_map, input_view(checkpoint, pixels), args.out)
    print(f"overlay\t{overlay}")
    print(f"map\t{gray}")
    print(f"metadata\t{metadata}")
    print(f"lost_mass_fraction\t{attention_map.lost_mass_fraction:.6f}")
    return ExitCode.OK.value


# endregion


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attrnet",
        description="Train and evaluate multi-label attribute networks.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--log-level",
        default=os.environ.get(LOG_LEVEL_ENV, "INFO"),
        help=f"loguru level for stderr diagnostics (env {LOG_LEVEL_ENV})",
    )
    parser.add_argument("--threads", type=int, default=None, help="worker threads for data preparation")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_command(
        name: str,
        handler: Callable[[argparse.Namespace], int],
        help_text: str,
    ) -> argparse.ArgumentParser:
        command = commands.add_parser(name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        command.set_defaults(handler=handler)
        return command

    gen_data = add_command("gen-data", cmd_gen_data, "generate the synthetic attribute dataset")
    gen_data.add_argument("--out", type=Path, required=True, help="output directory")
    gen_data.add_argument("--seed", default="0", help="integer or string seed")
    gen_data.add_argument("--train", type=int, default=2000, help="training images")
    gen_data.add_argument("--val", type=int, default=300, help="validation images")
    gen_data.add_argument("--test", type=int, default=500, help="test images")
    gen_data.add_argument("--size", type=int, default=64, help="image side in pixels")
    gen_data.add_argument("--clutter", type=float, default=0.3, help="background noise and distractor level, 0..1")
    gen_data.add_argument("--ambiguity", type=float, default=0.0, help="probability of an ambiguous (0) label")

    train = add_command("train", cmd_train, "train a network on a dataset")
    train.add_argument("--data", type=Path, required=True, help="dataset directory or manifest file")
    train.add_argument("--out", type=Path, required=True, help="where to write the best checkpoint")
    train.add_argument("--epochs", type=int, default=38, help="maximum epochs")
    train.add_argument("--batch", type=int, default=32, help="minibatch size")
    train.add_argument("--lr", type=float, default=0.001, help="base learning rate")
    train.add_argument("--patience", type=int, default=3, help="plateau patience in epochs")
    train.add_argument(
        "--two-phase",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="train the fully-connected layers first, then unfreeze the last conv block",
    )
    train.add_argument("--full", dest="two_phase", action="store_false", help="alias of --no-two-phase")
    train.add_argument("--crop-train", action="store_true", help="train and validate on bbox crops")
    train.add_argument("--canonical", type=int, default=DEFAULT_CANONICAL_SIZE, help="rescale side in pixels")
    train.add_argument("--crop", type=int, default=DEFAULT_CROP_SIZE, help="training patch side in pixels")
    train.add_argument("--seed", default="0", help="integer or string seed")
    train.add_argument("--val-split", type=Split, choices=list(Split), default=Split.val, help="validation split")
    train.add_argument("--warm-start", type=Path, default=None, help="checkpoint to copy parameters from")
    train.add_argument("--reinit-head", action="store_true", help="re-initialize fcA and fcB after --warm-start")
    train.add_argument(
        "--history",
        type=Path,
        default=None,
        help=f"history CSV (default: {HISTORY_FILENAME} next to --out)",
    )

    evaluate_ = add_command("eval", cmd_eval, "evaluate a checkpoint on a split")
    evaluate_.add_argument("--ckpt", type=Path, required=True, help="checkpoint file")
    evaluate_.add_argument("--data", type=Path, required=True, help="dataset directory or manifest file")
    evaluate_.add_argument("--split", type=Split, choices=list(Split), default=Split.test, help="split to evaluate")
    evaluate_.add_argument("--crop", type=CropMode, choices=list(CropMode), default=CropMode.whole, help="crop mode")
    evaluate_.add_argument("--report", type=Path, default=None, help="metrics report JSON")
    evaluate_.add_argument("--curves", type=Path, default=None, help="PR and ROC curve CSV")
    evaluate_.add_argument("--exclude", action="append", default=[], help="class to leave out (repeatable)")
    evaluate_.add_argument("--batch", type=int, default=32, help="inference batch size")

    predict = add_command("predict", cmd_predict, "print the top attributes of one image")
    predict.add_argument("--ckpt", type=Path, required=True, help="checkpoint file")
    predict.add_argument("--image", type=Path, required=True, help="PNG or PPM image")
    predict.add_argument("--top", type=int, default=3, help="how many attributes to print")
    predict.add_argument("--crop", type=CropMode, choices=list(CropMode), default=CropMode.whole, help="crop mode")
    predict.add_argument("--bbox", type=_parse_bbox, default=None, help="x0,y0,x1,y1 for --crop bbox")

    attend = add_command("attend", cmd_attend, "write the attention map of one attribute on one image")
    attend.add_argument("--ckpt", type=Path, required=True, help="checkpoint file")
    attend.add_argument("--image", type=Path, required=True, help="PNG or PPM image")
    attend.add_argument("--class", dest="class_name", required=True, help="attribute name")
    attend.add_argument("--layer", default=None, help="conv layer or 'input' (default: the first conv layer)")
    attend.add_argument("--out", type=Path, required=True, help="overlay image path (.png or .ppm)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return int(args.handler(args))
    except ValidationError as e:
        logger.error(f"invalid configuration: {e}")
        return ExitCode.CONFIG.value
    except AttrNetError as e:
        logger.error(str(e))
        return e.exit_code.value
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return ExitCode.IO.value


__all__ = [
    "main",
    "build_parser",
    "configure_logging",
]
