import csv
import json
import sys
from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest
from loguru import logger

from attrnet.cli import main
from attrnet.consts import HISTORY_COLUMNS, HISTORY_FILENAME, MANIFEST_FILENAME, ExitCode, Split
from attrnet.data.imageio import write_image
from attrnet.data.manifest import load_manifest
from attrnet.data.records import records_of_split
from attrnet.model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from attrnet.model.config import build_tinydan
from attrnet.model.params import initialize, parameter_arrays

GEN_FLAGS = ["--train", "16", "--val", "8", "--test", "8", "--size", "32", "--seed", "11"]
TRAIN_FLAGS = ["--epochs", "1", "--batch", "8", "--canonical", "36", "--crop", "32", "--seed", "5"]


@pytest.fixture(autouse=True)
def restore_logging() -> Iterator[None]:
    yield
    logger.remove()
    logger.add(sys.stderr)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory: pytest.TempPathFactory) -> Path:
    directory = tmp_path_factory.mktemp("cli") / "data"
    assert main(["gen-data", "--out", str(directory), *GEN_FLAGS]) == ExitCode.OK.value
    return directory


def three_class_checkpoint(path: Path) -> Path:
    config = build_tinydan(3, (3, 32, 32))
    params = parameter_arrays(initialize(config, np.random.default_rng(0)))
    save_checkpoint(path, Checkpoint(config=config, params=params))
    return path


@pytest.fixture(scope="module")
def checkpoint_path(dataset: Path) -> Path:
    path = dataset.parent / "run" / "model.ckpt"
    assert main(["train", "--data", str(dataset), "--out", str(path), *TRAIN_FLAGS]) == ExitCode.OK.value
    return path


def tree_bytes(directory: Path) -> dict[str, bytes]:
    files = sorted(path for path in directory.rglob("*") if path.is_file())
    return {str(path.relative_to(directory)): path.read_bytes() for path in files}


class TestGenData:
    def test_same_flags_same_tree(self, tmp_path: Path, dataset: Path) -> None:
        assert main(["gen-data", "--out", str(tmp_path / "again"), *GEN_FLAGS]) == ExitCode.OK.value
        assert tree_bytes(tmp_path / "again") == tree_bytes(dataset)

    def test_printed_counts_match_the_manifest(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        out = tmp_path / "counted"
        assert main(["gen-data", "--out", str(out), "--train", "0", "--val", "3", "--test", "2", "--size", "24"]) == 0
        lines = dict(line.split("\t") for line in capsys.readouterr().out.splitlines())
        records, schema = load_manifest(out)
        for split in Split:
            assert int(lines[str(split)]) == len(records_of_split(records, split))
        assert records_of_split(records, Split.train) == []
        for index, name in enumerate(schema.class_names):
            assert int(lines[name]) == sum(record.labels[index] == 1 for record in records)

    def test_invalid_config(self, tmp_path: Path) -> None:
        assert main(["gen-data", "--out", str(tmp_path), "--clutter", "2"]) == ExitCode.CONFIG.value


class TestTrain:
    def test_writes_a_loadable_checkpoint_and_history(self, checkpoint_path: Path) -> None:
        checkpoint = load_checkpoint(checkpoint_path)
        assert checkpoint.epoch == 1
        assert checkpoint.attribute_schema is not None
        assert checkpoint.config.input_size == (3, 32, 32)
        with (checkpoint_path.parent / HISTORY_FILENAME).open(newline="") as handle:
            rows = list(csv.reader(handle))
        assert tuple(rows[0]) == HISTORY_COLUMNS
        assert len(rows) == 2

    def test_same_seed_same_history(self, tmp_path: Path, dataset: Path, checkpoint_path: Path) -> None:
        history = tmp_path / "history.csv"
        flags = ["--history", str(history), *TRAIN_FLAGS]
        assert main(["train", "--data", str(dataset), "--out", str(tmp_path / "m.ckpt"), *flags]) == 0
        assert history.read_bytes() == (checkpoint_path.parent / HISTORY_FILENAME).read_bytes()
        assert load_checkpoint(tmp_path / "m.ckpt").same_as(load_checkpoint(checkpoint_path))

    def test_warm_start_with_another_class_count(
        self,
        tmp_path: Path,
        dataset: Path,
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        source = three_class_checkpoint(tmp_path / "three.ckpt")
        flags = ["--warm-start", str(source), *TRAIN_FLAGS]
        code = main(["train", "--data", str(dataset), "--out", str(tmp_path / "m.ckpt"), *flags])
        assert code == ExitCode.CONFIG.value
        assert "3 classes" in capsys.readouterr().err
        assert not (tmp_path / "m.ckpt").exists()

    def test_warm_start_reinitializing_the_head(self, tmp_path: Path, dataset: Path) -> None:
        source = three_class_checkpoint(tmp_path / "three.ckpt")
        flags = ["--warm-start", str(source), "--reinit-head", *TRAIN_FLAGS]
        assert main(["train", "--data", str(dataset), "--out", str(tmp_path / "m.ckpt"), *flags]) == 0

    def test_empty_training_split(self, tmp_path: Path) -> None:
        data = tmp_path / "data"
        assert main(["gen-data", "--out", str(data), "--train", "0", "--val", "2", "--test", "0", "--size", "32"]) == 0
        assert main(["train", "--data", str(data), "--out", str(tmp_path / "m.ckpt"), *TRAIN_FLAGS]) == 2

    def test_crop_larger_than_canonical(self, tmp_path: Path, dataset: Path) -> None:
        flags = ["--canonical", "32", "--crop", "48"]
        assert main(["train", "--data", str(dataset), "--out", str(tmp_path / "m.ckpt"), *flags]) == 2


class TestEval:
    def test_report_and_curves(
        self,
        tmp_path: Path,
        dataset: Path,
        checkpoint_path: Path,
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        report = tmp_path / "report.json"
        curves = tmp_path / "curves.csv"
        code = main(
            [
                "eval",
                "--ckpt",
                str(checkpoint_path),
                "--data",
                str(dataset),
                "--crop",
                "bbox",
                "--report",
                str(report),
                "--curves",
                str(curves),
            ],
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "test (bbox), 8 images, 0 bbox fallbacks" in out
        assert "overall" in out
        document = json.loads(report.read_text(encoding="utf-8"))
        assert document["num_samples"] == 8
        assert document["crop_mode"] == "bbox"
        assert curves.read_text(encoding="utf-8").startswith("class,kind,x,y\n")

    def test_unknown_excluded_class(self, dataset: Path, checkpoint_path: Path) -> None:
        code = main(["eval", "--ckpt", str(checkpoint_path), "--data", str(dataset), "--exclude", "plaid"])
        assert code == ExitCode.CONFIG.value

    def test_missing_checkpoint(self, tmp_path: Path, dataset: Path) -> None:
        code = main(["eval", "--ckpt", str(tmp_path / "nothing.ckpt"), "--data", str(dataset)])
        assert code == ExitCode.IO.value

    def test_corrupt_checkpoint(self, tmp_path: Path, dataset: Path, checkpoint_path: Path) -> None:
        truncated = tmp_path / "truncated.ckpt"
        truncated.write_bytes(checkpoint_path.read_bytes()[:100])
        assert main(["eval", "--ckpt", str(truncated), "--data", str(dataset)]) == ExitCode.IO.value


class TestPredict:
    def test_top_k(
        self,
        dataset: Path,
        checkpoint_path: Path,
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        image = next((dataset / "images").iterdir())
        assert main(["predict", "--ckpt", str(checkpoint_path), "--image", str(image), "--top", "4"]) == 0
        rows = [line.split("\t") for line in capsys.readouterr().out.splitlines()]
        assert len(rows) == 4
        scores = [float(score) for _, score in rows]
        assert scores == sorted(scores, reverse=True)
        names = load_checkpoint(checkpoint_path).attribute_schema.class_names
        assert all(name in names for name, _ in rows)

    def test_bbox_crop(self, tmp_path: Path, checkpoint_path: Path) -> None:
        image = tmp_path / "plain.png"
        write_image(image, np.full((40, 50, 3), 200, dtype=np.uint8))
        flags = ["--crop", "bbox", "--bbox", "5,5,30,25"]
        assert main(["predict", "--ckpt", str(checkpoint_path), "--image", str(image), *flags]) == 0

    def test_bad_arguments(self, tmp_path: Path, checkpoint_path: Path) -> None:
        image = tmp_path / "plain.png"
        write_image(image, np.full((40, 50, 3), 200, dtype=np.uint8))
        assert main(["predict", "--ckpt", str(checkpoint_path), "--image", str(image), "--top", "0"]) == 2
        assert main(["predict", "--ckpt", str(checkpoint_path), "--image", str(tmp_path / "missing.png")]) == 3


class TestAttend:
    def test_writes_the_map(self, tmp_path: Path, dataset: Path, checkpoint_path: Path) -> None:
        image = next((dataset / "images").iterdir())
        name = load_checkpoint(checkpoint_path).attribute_schema.class_names[0]
        out = tmp_path / "map.png"
        flags = ["--class", name, "--out", str(out)]
        assert main(["attend", "--ckpt", str(checkpoint_path), "--image", str(image), *flags]) == 0
        assert out.exists()
        assert (tmp_path / "map_map.png").exists()
        assert json.loads((tmp_path / "map.json").read_text(encoding="utf-8"))["class_name"] == name

    def test_unknown_class(self, tmp_path: Path, dataset: Path, checkpoint_path: Path) -> None:
        image = next((dataset / "images").iterdir())
        flags = ["--class", "plaid", "--out", str(tmp_path / "map.png")]
        assert main(["attend", "--ckpt", str(checkpoint_path), "--image", str(image), *flags]) == ExitCode.CONFIG.value


def test_help_and_unknown_flags(capsys: pytest.CaptureFixture[str]) -> None:
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    assert "gen-data" in capsys.readouterr().out
    with pytest.raises(SystemExit) as info:
        main(["train", "--data", "x", "--out", "y", "--no-such-flag"])
    assert info.value.code == 2


def test_manifest_is_written(dataset: Path) -> None:
    assert (dataset / MANIFEST_FILENAME).is_file()
