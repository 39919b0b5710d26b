"""Boolean relations over argument/value tables and their three operations.

A :class:`Relation` is an ``n_args x n_vals`` table of marks stored as one
packed bitset per argument column (bit ``j`` of column ``i`` set means
argument ``i`` is related to value ``j``).  Packing is little-endian within
each byte, so column ``i`` occupies ``ceil(n_vals / 8)`` bytes.

The operations are

* :func:`abstraction` -- cell-wise union, the write operation,
* :func:`containment` -- cell-wise implication test, the recognition test,
* :func:`reduction` -- constructive retrieval of a constituent function,
  sampled around a cue,

plus :func:`entropy`, the mean over columns of ``log2`` of the number of
marks.
"""
from __future__ import annotations

from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DimensionError, PartialityError, RangeError

UNDEFINED_LEVEL = -1

_POPCOUNT = np.array([bin(b).count("1") for b in range(256)], dtype=np.int64)


class DiscreteFunction:
    """A partial map from argument indices to value levels.

    Undefined arguments are stored as ``-1``.  Instances are immutable.

    Parameters
    ----------
    values : sequence of int or None
        One entry per argument; ``None`` or a negative number leaves the
        argument undefined.
    """

    __slots__ = ("_values",)

    def __init__(self, values: Iterable[Optional[int]]):
        vals = [UNDEFINED_LEVEL if v is None or v < 0 else int(v) for v in values]
        arr = np.asarray(vals, dtype=np.int64).reshape(-1)
        if arr.size == 0:
            raise DimensionError("a function needs at least one argument")
        arr.setflags(write=False)
        self._values = arr

    @classmethod
    def from_array(cls, arr) -> "DiscreteFunction":
        """Wrap an integer array without per-element conversion."""
        obj = cls.__new__(cls)
        a = np.array(arr, dtype=np.int64).reshape(-1)
        if a.size == 0:
            raise DimensionError("a function needs at least one argument")
        a[a < 0] = UNDEFINED_LEVEL
        a.setflags(write=False)
        obj._values = a
        return obj

    @classmethod
    def undefined(cls, n_args: int) -> "DiscreteFunction":
        return cls.from_array(np.full(n_args, UNDEFINED_LEVEL))

    @property
    def n_args(self) -> int:
        return int(self._values.size)

    @property
    def values(self) -> np.ndarray:
        """Read-only level array, ``-1`` where undefined."""
        return self._values

    @property
    def defined(self) -> np.ndarray:
        return self._values >= 0

    def is_total(self) -> bool:
        return bool(np.all(self._values >= 0))

    def __getitem__(self, i: int) -> Optional[int]:
        v = int(self._values[i])
        return None if v < 0 else v

    def __len__(self) -> int:
        return self.n_args

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteFunction):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __hash__(self) -> int:
        return hash(self._values.tobytes())

    def __repr__(self) -> str:
        shown = [None if v < 0 else int(v) for v in self._values[:8]]
        tail = ", ..." if self.n_args > 8 else ""
        return f"DiscreteFunction({shown}{tail})"


class Relation:
    """An ``n_args x n_vals`` boolean table with cached column mark counts.

    Relations behave as values: the module-level operations return new
    objects and never mutate their inputs.
    """

    __slots__ = ("n_args", "n_vals", "_bits", "_counts")

    def __init__(self, n_args: int, n_vals: int, bits: Optional[np.ndarray] = None):
        if n_args < 1 or n_vals < 1:
            raise DimensionError(f"invalid relation shape {n_args}x{n_vals}")
        self.n_args = int(n_args)
        self.n_vals = int(n_vals)
        nbytes = (self.n_vals + 7) // 8
        if bits is None:
            bits = np.zeros((self.n_args, nbytes), dtype=np.uint8)
        else:
            bits = np.ascontiguousarray(bits, dtype=np.uint8)
            if bits.shape != (self.n_args, nbytes):
                raise DimensionError(
                    f"packed bits shape {bits.shape} != {(self.n_args, nbytes)}")
            tail = self.n_vals % 8
            if tail and np.any(bits[:, -1] >> tail):
                raise RangeError("padding bits beyond n_vals are set")
        bits.setflags(write=False)
        self._bits = bits
        counts = _POPCOUNT[bits].sum(axis=1)
        counts.setflags(write=False)
        self._counts = counts

    # -- construction -----------------------------------------------------

    @classmethod
    def empty(cls, n_args: int, n_vals: int) -> "Relation":
        return cls(n_args, n_vals)

    @classmethod
    def full(cls, n_args: int, n_vals: int) -> "Relation":
        return cls.from_bool(np.ones((n_args, n_vals), dtype=bool))

    @classmethod
    def from_bool(cls, cells) -> "Relation":
        """Build from an ``(n_args, n_vals)`` boolean array."""
        cells = np.asarray(cells, dtype=bool)
        if cells.ndim != 2:
            raise DimensionError("cells must be two-dimensional")
        n_args, n_vals = cells.shape
        return cls(n_args, n_vals, np.packbits(cells, axis=1, bitorder="little"))

    @classmethod
    def from_functions(cls, levels, n_vals: int) -> "Relation":
        """Union of many total functions given as an ``(N, n_args)`` array.

        Equivalent to folding :func:`abstraction` over
        :func:`function_to_relation` of every row, in one pass.
        """
        levels = np.asarray(levels, dtype=np.int64)
        if levels.ndim != 2:
            raise DimensionError("levels must be an (N, n_args) array")
        n_args = levels.shape[1]
        if levels.size and (levels.min() < 0 or levels.max() >= n_vals):
            raise RangeError(f"levels outside [0, {n_vals})")
        cells = np.zeros((n_args, n_vals), dtype=bool)
        if levels.size:
            cells[np.broadcast_to(np.arange(n_args), levels.shape), levels] = True
        return cls.from_bool(cells)

    # -- inspection --------------------------------------------------------

    @property
    def shape(self):
        return (self.n_args, self.n_vals)

    @property
    def packed(self) -> np.ndarray:
        """Read-only ``(n_args, ceil(n_vals/8))`` packed column bits."""
        return self._bits

    @property
    def col_counts(self) -> np.ndarray:
        """Read-only number of marks in every column."""
        return self._counts

    def to_bool(self) -> np.ndarray:
        return np.unpackbits(self._bits, axis=1, count=self.n_vals,
                             bitorder="little").astype(bool)

    def marked(self, i: int) -> np.ndarray:
        """Sorted value levels marked in column ``i``."""
        row = np.unpackbits(self._bits[i], count=self.n_vals, bitorder="little")
        return np.flatnonzero(row)

    def __getitem__(self, key) -> bool:
        i, j = key
        if not (0 <= j < self.n_vals):
            raise RangeError(f"value {j} outside [0, {self.n_vals})")
        return bool((self._bits[i, j >> 3] >> (j & 7)) & 1)

    def contains_levels(self, levels) -> np.ndarray:
        """Vectorised containment of many total functions.

        ``levels`` is an ``(N, n_args)`` integer array; returns a boolean
        array of length ``N``.  Levels outside the table are never contained.
        """
        levels = np.asarray(levels, dtype=np.int64)
        if levels.ndim != 2 or levels.shape[1] != self.n_args:
            raise DimensionError(
                f"expected (N, {self.n_args}) levels, got {levels.shape}")
        in_range = (levels >= 0) & (levels < self.n_vals)
        safe = np.where(in_range, levels, 0)
        cols = np.broadcast_to(np.arange(self.n_args), safe.shape)
        hits = (self._bits[cols, safe >> 3] >> (safe & 7).astype(np.uint8)) & 1
        return np.all((hits == 1) & in_range, axis=1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._bits, other._bits)

    def __hash__(self) -> int:
        return hash((self.shape, self._bits.tobytes()))

    def __repr__(self) -> str:
        return (f"Relation({self.n_args}x{self.n_vals}, "
                f"marks={int(self._counts.sum())}, entropy={entropy(self):.3f})")


RelationLike = Union[Relation, DiscreteFunction]


def function_to_relation(f: DiscreteFunction, n_vals: int) -> Relation:
    """Table with one mark per defined argument of ``f``."""
    vals = f.values
    if np.any(vals >= n_vals):
        bad = int(vals[vals >= n_vals][0])
        raise RangeError(f"value {bad} outside [0, {n_vals})")
    cells = np.zeros((f.n_args, n_vals), dtype=bool)
    defined = np.flatnonzero(vals >= 0)
    cells[defined, vals[defined]] = True
    return Relation.from_bool(cells)


def _check_same_shape(a: Relation, b: Relation) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def _as_relation(r: RelationLike, n_vals: int) -> Relation:
    if isinstance(r, DiscreteFunction):
        return function_to_relation(r, n_vals)
    return r


def abstraction(r_f: RelationLike, r_a: RelationLike) -> Relation:
    """Cell-wise union of two relations of equal shape."""
    if isinstance(r_f, DiscreteFunction) and isinstance(r_a, DiscreteFunction):
        raise TypeError("at least one operand must be a Relation")
    n_vals = r_f.n_vals if isinstance(r_f, Relation) else r_a.n_vals
    r_f, r_a = _as_relation(r_f, n_vals), _as_relation(r_a, n_vals)
    _check_same_shape(r_f, r_a)
    return Relation(r_f.n_args, r_f.n_vals, r_f.packed | r_a.packed)


def containment(r_a: RelationLike, r_f: Relation) -> bool:
    """True iff every mark of ``r_a`` is also a mark of ``r_f``."""
    if isinstance(r_a, DiscreteFunction):
        if r_a.n_args != r_f.n_args:
            raise DimensionError(f"{r_a.n_args} arguments vs {r_f.n_args}")
        vals = r_a.values
        if np.any(vals >= r_f.n_vals):
            return False
        r_a = function_to_relation(r_a, r_f.n_vals)
    _check_same_shape(r_a, r_f)
    return not np.any(r_a.packed & ~r_f.packed)


def entropy(r: Relation) -> float:
    """Mean over columns of ``log2`` of the mark count; empty columns add 0."""
    counts = r.col_counts
    used = counts[counts > 0]
    return float(np.log2(used).sum() / r.n_args)


# -- reduction -------------------------------------------------------------


class TriangularSampler:
    """Draw a marked value with weight decreasing linearly from the cue.

    For cue level ``c`` and marked set ``S`` the weight of ``v`` in ``S`` is
    ``1 - |v - c| / (W + 1)`` with ``W = max |v - c|`` over ``S``.  Every
    marked value keeps a positive weight and the cue, when marked, gets the
    largest one.
    """

    name = "triangular"

    @staticmethod
    def weights(marked: Sequence[int], cue: int) -> np.ndarray:
        marked = np.asarray(marked, dtype=np.int64)
        if marked.size == 0:
            raise ValueError("no marked values to sample from")
        dist = np.abs(marked - cue)
        w = 1.0 - dist / (dist.max() + 1.0)
        return w / w.sum()

    def draw(self, marked, cue: int, rng: np.random.Generator, size=None):
        marked = np.asarray(marked, dtype=np.int64)
        if marked.size == 1:
            return marked[0] if size is None else np.full(size, marked[0])
        return rng.choice(marked, size=size, p=self.weights(marked, cue))


class IdentitySampler:
    """Return the cue level unchanged."""

    name = "identity"

    @staticmethod
    def weights(marked: Sequence[int], cue: int) -> np.ndarray:
        marked = np.asarray(marked, dtype=np.int64)
        return (marked == cue).astype(float)

    def draw(self, marked, cue: int, rng: np.random.Generator, size=None):
        return cue if size is None else np.full(size, cue)


SAMPLERS = {"triangular": TriangularSampler, "identity": IdentitySampler}


def get_sampler(name: str):
    try:
        return SAMPLERS[name]()
    except KeyError:
        raise ValueError(
            f"unknown sampler {name!r}; choose from {sorted(SAMPLERS)}") from None


def reduction(f_a: DiscreteFunction, r_f: Relation, sampler=None,
              rng_seed: int = 0) -> Optional[DiscreteFunction]:
    """Retrieve a constituent function of ``r_f`` around the cue ``f_a``.

    Returns ``None`` when the cue is not contained in ``r_f``.  Each column
    is sampled independently from its marked values; a fixed seed makes the
    result reproducible.
    """
    if f_a.n_args != r_f.n_args:
        raise DimensionError(f"{f_a.n_args} arguments vs {r_f.n_args}")
    if not f_a.is_total():
        raise PartialityError("reduction needs a total cue")
    if sampler is None:
        sampler = TriangularSampler()
    if not containment(f_a, r_f):
        return None
    rng = np.random.default_rng(rng_seed)
    cue = f_a.values
    out = cue.copy()
    for i in np.flatnonzero(r_f.col_counts > 1):
        out[i] = sampler.draw(r_f.marked(i), int(cue[i]), rng)
    return DiscreteFunction.from_array(out)

