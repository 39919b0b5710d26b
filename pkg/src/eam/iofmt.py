"""Small file helpers: atomic writes and binary PGM images."""
from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError


def write_atomic(path, data) -> None:
    """Write ``data`` (bytes or str) to ``path`` via a temp file and rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_pgm(path, pixels) -> None:
    """Write a ``(height, width)`` uint8 array as a P5 PGM with maxval 255."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError("PGM pixels must be two-dimensional")
    h, w = pixels.shape
    write_atomic(path, f"P5\n{w} {h}\n255\n".encode("ascii")
                 + pixels.astype(np.uint8).tobytes())


_PGM_HEADER = re.compile(rb"P5\s+(?:#.*?\n\s*)*(\d+)\s+(?:#.*?\n\s*)*(\d+)\s+"
                         rb"(?:#.*?\n\s*)*(\d+)\s")


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if not m:
        raise FormatError(f"{path}: not a binary (P5) PGM file")
    w, h, maxval = (int(x) for x in m.groups())
    if maxval != 255:
        raise FormatError(f"{path}: maxval {maxval} unsupported, expected 255")
    body = data[m.end():]
    if len(body) < w * h:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(body[:w * h], dtype=np.uint8).reshape(h, w).copy()
