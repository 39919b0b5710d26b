"""Uniform min-max quantization of real feature vectors into ``2**m`` levels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, DimensionError, PartialityError
from .relation import DiscreteFunction

MAX_M = 16


@dataclass(frozen=True, eq=False)
class QuantizerModel:
    """Per-feature calibration bounds and the granularity exponent ``m``."""

    m: int
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=np.float64).reshape(-1)
        hi = np.array(self.hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise DimensionError("lo and hi must be nonempty and equally long")
        if not (0 <= self.m <= MAX_M):
            raise CalibrationError(f"m={self.m} outside [0, {MAX_M}]")
        if np.any(lo > hi) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise CalibrationError("bounds must be finite with lo <= hi")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n_args(self) -> int:
        return int(self.lo.size)

    @property
    def levels(self) -> int:
        return 1 << self.m

    def with_m(self, m: int) -> "QuantizerModel":
        return QuantizerModel(m, self.lo, self.hi)

    def __eq__(self, other):
        if not isinstance(other, QuantizerModel):
            return NotImplemented
        return (self.m == other.m and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))

    def to_dict(self) -> dict:
        return {"n_args": self.n_args, "m": self.m,
                "lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "QuantizerModel":
        model = cls(int(d["m"]), d["lo"], d["hi"])
        if "n_args" in d and int(d["n_args"]) != model.n_args:
            raise DimensionError(
                f"n_args={d['n_args']} but {model.n_args} bounds given")
        return model


def fit(corpus, m: int) -> QuantizerModel:
    """Calibrate bounds to the per-feature min and max of ``corpus``."""
    data = np.asarray(corpus, dtype=np.float64)
    if data.ndim == 1:
        data = data.reshape(-1, 1) if data.size else data.reshape(0, 0)
    if data.size == 0:
        raise CalibrationError("cannot calibrate on an empty corpus")
    if not np.all(np.isfinite(data)):
        raise CalibrationError("corpus contains non-finite values")
    return QuantizerModel(m, data.min(axis=0), data.max(axis=0))


def quantize_array(q: QuantizerModel, data) -> np.ndarray:
    """Quantize an ``(N, n_args)`` array (or one vector) to integer levels."""
    data = np.asarray(data, dtype=np.float64)
    if data.shape[-1] != q.n_args:
        raise DimensionError(f"expected {q.n_args} features, got {data.shape[-1]}")
    if not np.all(np.isfinite(data)):
        raise ValueError("feature values must be finite")
    span = q.hi - q.lo
    flat = span == 0
    scaled = (data - q.lo) / np.where(flat, 1.0, span) * q.levels
    lv = np.clip(np.floor(scaled), 0, q.levels - 1).astype(np.int64)
    lv[..., flat] = 0
    return lv


def quantize(q: QuantizerModel, v) -> DiscreteFunction:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    return DiscreteFunction.from_array(quantize_array(q, v))


def dequantize_array(q: QuantizerModel, levels) -> np.ndarray:
    """Bin midpoints for an array of levels."""
    levels = np.asarray(levels, dtype=np.float64)
    return q.lo + (levels + 0.5) * (q.hi - q.lo) / q.levels


def dequantize(q: QuantizerModel, f: DiscreteFunction) -> np.ndarray:
    if f.n_args != q.n_args:
        raise DimensionError(f"expected {q.n_args} arguments, got {f.n_args}")
    if not f.is_total():
        raise PartialityError("cannot dequantize a partial function")
    return dequantize_array(q, f.values)
