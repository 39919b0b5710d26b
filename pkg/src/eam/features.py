"""Deterministic image <-> feature mapping and the feature interchange file.

The block-average extractor zero-pads a gray image, centred, to a
``pad x pad`` frame, cuts it into ``grid x grid`` blocks and reports the
mean intensity of each block scaled to ``[0, 1]``.  Synthesis paints every
block with its feature value and crops the original frame back out, so it
inverts extraction exactly on block-constant images.

Feature files are plain text::

    #eam-features n=64
    7,0.0,0.125,...
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DimensionError, FormatError, SizeError
from .iofmt import write_atomic

KINDS = ("block_average", "external")


@dataclass(frozen=True)
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.size != self.width * self.height:
            raise SizeError(
                f"{px.size} pixels for a {self.width}x{self.height} image")
        object.__setattr__(self, "pixels", px.reshape(self.height, self.width))

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        arr = np.asarray(arr)
        return cls(arr.shape[1], arr.shape[0], arr)


@dataclass(frozen=True)
class ExtractorSpec:
    kind: str = "block_average"
    grid: int = 8
    pad: int = 32

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown extractor kind {self.kind!r}")
        if self.grid < 1 or self.pad < 1 or self.pad % self.grid:
            raise ValueError(f"pad {self.pad} must be a positive multiple of grid {self.grid}")

    @property
    def n_features(self) -> int:
        return self.grid * self.grid

    @property
    def block(self) -> int:
        return self.pad // self.grid


def _require_block(spec: ExtractorSpec) -> None:
    if spec.kind != "block_average":
        raise ValueError(f"extractor kind {spec.kind!r} has no built-in mapping")


def _offsets(spec: ExtractorSpec, height: int, width: int) -> Tuple[int, int]:
    if height > spec.pad or width > spec.pad:
        raise SizeError(f"{width}x{height} image does not fit a {spec.pad} frame")
    return (spec.pad - height) // 2, (spec.pad - width) // 2


def extract_array(spec: ExtractorSpec, images) -> np.ndarray:
    """Features for an ``(N, H, W)`` uint8 stack; returns ``(N, grid**2)``."""
    _require_block(spec)
    images = np.asarray(images)
    n, h, w = images.shape
    top, left = _offsets(spec, h, w)
    frame = np.zeros((n, spec.pad, spec.pad), dtype=np.float64)
    frame[:, top:top + h, left:left + w] = images
    b = spec.block
    blocks = frame.reshape(n, spec.grid, b, spec.grid, b).mean(axis=(2, 4))
    return blocks.reshape(n, -1) / 255.0


def extract(spec: ExtractorSpec, img: GrayImage) -> np.ndarray:
    return extract_array(spec, img.pixels[None])[0]


def synthesize_array(spec: ExtractorSpec, features, height: int = 28,
                     width: int = 28) -> np.ndarray:
    """Pixel stack ``(N, height, width)`` painted from ``(N, grid**2)`` features."""
    _require_block(spec)
    v = np.asarray(features, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != spec.n_features:
        raise DimensionError(
            f"expected (N, {spec.n_features}) features, got {v.shape}")
    top, left = _offsets(spec, height, width)
    # round half up
    vals = np.clip(np.floor(255.0 * v + 0.5), 0, 255).astype(np.uint8)
    grid = vals.reshape(-1, spec.grid, spec.grid)
    frame = np.repeat(np.repeat(grid, spec.block, axis=1), spec.block, axis=2)
    return frame[:, top:top + height, left:left + width]


def synthesize(spec: ExtractorSpec, v, height: int = 28, width: int = 28) -> GrayImage:
    px = synthesize_array(spec, np.asarray(v, dtype=np.float64)[None], height, width)[0]
    return GrayImage(width, height, px)


# -- feature files ---------------------------------------------------------

_HEADER_PREFIX = "#eam-features n="


def export_features(path, rows: Sequence[Tuple[int, Sequence[float]]]) -> None:
    """Write ``(label, vector)`` rows; values use shortest round-trip repr."""
    rows = list(rows)
    if not rows:
        raise ValueError("nothing to export")
    n = len(rows[0][1])
    lines = [f"{_HEADER_PREFIX}{n}"]
    for label, vec in rows:
        vec = [float(x) for x in vec]
        if len(vec) != n:
            raise DimensionError(f"row of length {len(vec)} in an n={n} file")
        if not all(math.isfinite(x) for x in vec):
            raise ValueError("feature values must be finite")
        lines.append(",".join([str(int(label))] + [repr(x) for x in vec]))
    write_atomic(path, "\n".join(lines) + "\n")


def import_features(path) -> Tuple[np.ndarray, np.ndarray]:
    """Read a feature file into ``(labels, features)`` arrays."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith(_HEADER_PREFIX):
        raise FormatError("missing '#eam-features n=<n>' header", line=1)
    try:
        n = int(lines[0][len(_HEADER_PREFIX):])
    except ValueError:
        raise FormatError(f"bad header {lines[0]!r}", line=1) from None
    if n < 1:
        raise FormatError(f"header declares n={n}", line=1)
    labels: List[int] = []
    vectors: List[List[float]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n + 1:
            raise FormatError(f"expected {n} values, found {len(parts) - 1}", line=lineno)
        try:
            label = int(parts[0])
            vec = [float(x) for x in parts[1:]]
        except ValueError as exc:
            raise FormatError(str(exc), line=lineno) from None
        if not all(math.isfinite(x) for x in vec):
            raise FormatError("non-finite value", line=lineno)
        labels.append(label)
        vectors.append(vec)
    return (np.array(labels, dtype=np.int64),
            np.array(vectors, dtype=np.float64).reshape(len(vectors), n))
