import os
import random
import tempfile
import zlib
from pathlib import Path

import numpy as np


def seed_to_int(s: int | str | None = None) -> int:
    if isinstance(s, int):
        return s
    if s is None or s == "":
        # return a random int
        return random.randint(0, (2**32) - 1)
    n = abs(int(s) if s.isdigit() else int.from_bytes(s.encode(), "little"))
    while n >= 2**32:
        n = n >> 32
    return n


def make_rng(seed: int | str | None) -> np.random.Generator:
    """Return the numpy generator for `seed`."""
    return np.random.default_rng(seed_to_int(seed))


def substream(seed: int, key: str) -> np.random.Generator:
    """Return a generator derived from `seed` and a string key (such as an image id).

    The stream depends only on the pair, so records can be generated in any order or in parallel.
    """
    return np.random.default_rng([seed_to_int(seed), zlib.crc32(key.encode("utf-8"))])


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write `data` to `path` via a temporary file in the same directory and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as tmp_file:
            tmp_file.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    """Write UTF-8 `text` to `path` atomically."""
    atomic_write_bytes(path, text.encode("utf-8"))
