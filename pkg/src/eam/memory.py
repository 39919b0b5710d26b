"""Associative memory registers and the multi-register memory system.

An :class:`Amr` holds the union of every function registered for its labels.
A :class:`MemorySystem` routes registrations to one register by label and
broadcasts recognition and retrieval to all of them; retrieval goes to the
accepting register of minimal entropy (lowest id on ties).

Registers serialize to a small binary snapshot::

    b"EAMR" | version u16 | n_args u32 | n_vals u32 | n_labels u16 |
    labels i32 * n_labels | packed column bits

Header integers are little-endian.  The body stores each column in
``ceil(n_vals / 8)`` bytes, bit ``j`` of a byte being value ``8k + j``.
"""
from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, FormatError, PartialityError, RoutingError
from .iofmt import write_atomic
from .quantizer import QuantizerModel
from .relation import (DiscreteFunction, Relation, TriangularSampler, abstraction,
                       containment, entropy, function_to_relation, reduction)

SNAPSHOT_MAGIC = b"EAMR"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sHIIH")


@dataclass(frozen=True)
class Amr:
    """One associative memory register."""

    id: int
    labels: FrozenSet[int]
    content: Relation

    @classmethod
    def empty(cls, id: int, labels: Iterable[int], n_args: int, n_vals: int) -> "Amr":
        return cls(id, frozenset(labels), Relation.empty(n_args, n_vals))

    @property
    def entropy(self) -> float:
        return entropy(self.content)

    def _check(self, f: DiscreteFunction) -> None:
        if f.n_args != self.content.n_args:
            raise DimensionError(
                f"register has {self.content.n_args} arguments, function {f.n_args}")

    def to_bytes(self) -> bytes:
        labels = sorted(self.labels)
        head = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, self.content.n_args,
                            self.content.n_vals, len(labels))
        return head + struct.pack(f"<{len(labels)}i", *labels) + self.content.packed.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, id: int = 0) -> "Amr":
        if len(data) < _HEADER.size:
            raise FormatError("snapshot shorter than its header")
        magic, version, n_args, n_vals, n_labels = _HEADER.unpack_from(data)
        if magic != SNAPSHOT_MAGIC:
            raise FormatError(f"bad snapshot magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise FormatError(f"unsupported snapshot version {version}")
        off = _HEADER.size
        labels = struct.unpack_from(f"<{n_labels}i", data, off)
        off += 4 * n_labels
        nbytes = (n_vals + 7) // 8
        body = np.frombuffer(data, dtype=np.uint8, offset=off)
        if body.size != n_args * nbytes:
            raise FormatError(
                f"snapshot body has {body.size} bytes, expected {n_args * nbytes}")
        return cls(id, frozenset(labels), Relation(n_args, n_vals, body.reshape(n_args, nbytes).copy()))

    def save(self, path) -> None:
        write_atomic(path, self.to_bytes())

    @classmethod
    def load(cls, path, id: int = 0) -> "Amr":
        return cls.from_bytes(Path(path).read_bytes(), id)


def memory_register(amr: Amr, f: DiscreteFunction) -> Amr:
    amr._check(f)
    if not f.is_total():
        raise PartialityError("only total functions can be registered")
    aux = function_to_relation(f, amr.content.n_vals)
    return Amr(amr.id, amr.labels, abstraction(amr.content, aux))


def memory_recognize(amr: Amr, f: DiscreteFunction) -> bool:
    amr._check(f)
    return containment(f, amr.content)


def memory_retrieve(amr: Amr, f: DiscreteFunction, seed: int = 0,
                    sampler=None) -> Optional[DiscreteFunction]:
    """Reduce the cue against the register; ``None`` when it is rejected."""
    amr._check(f)
    return reduction(f, amr.content, sampler or TriangularSampler(), seed)


@dataclass
class RetrieveOutcome:
    accepted: bool
    chosen_amr: Optional[int]
    retrieved: Optional[DiscreteFunction]
    accepting_ids: FrozenSet[int]
    entropies: Dict[int, float]


def select_min_entropy(accepting, entropies) -> np.ndarray:
    """Index of the accepting register with least entropy, per row.

    ``accepting`` is an ``(N, K)`` boolean matrix and ``entropies`` a length
    ``K`` vector.  Ties go to the lowest index; rows with no acceptance get
    ``-1``.
    """
    accepting = np.asarray(accepting, dtype=bool)
    ent = np.broadcast_to(np.asarray(entropies, dtype=np.float64), accepting.shape)
    masked = np.where(accepting, ent, np.inf)
    choice = np.argmin(masked, axis=-1)
    return np.where(accepting.any(axis=-1), choice, -1)


class MemorySystem:
    """An ordered bank of registers sharing one quantizer and sampler.

    Registration swaps in a new relation under a lock, so concurrent readers
    see either the old or the new content of a register, never a mix.
    """

    def __init__(self, amrs: Sequence[Amr], quantizer: Optional[QuantizerModel] = None,
                 sampler=None):
        amrs = list(amrs)
        if not amrs:
            raise ValueError("a memory system needs at least one register")
        shapes = {a.content.shape for a in amrs}
        if len(shapes) != 1:
            raise DimensionError(f"registers disagree on shape: {sorted(shapes)}")
        ids = [a.id for a in amrs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate register ids in {ids}")
        if quantizer is not None and (quantizer.n_args, quantizer.levels) != amrs[0].content.shape:
            raise DimensionError("quantizer does not match register shape")
        self._amrs = amrs
        self.quantizer = quantizer
        self.sampler = sampler or TriangularSampler()
        self._lock = threading.Lock()

    @classmethod
    def create(cls, label_sets: Sequence[Iterable[int]], n_args: int, n_vals: int,
               quantizer=None, sampler=None) -> "MemorySystem":
        amrs = [Amr.empty(k, labels, n_args, n_vals) for k, labels in enumerate(label_sets)]
        return cls(amrs, quantizer, sampler)

    @property
    def amrs(self) -> List[Amr]:
        with self._lock:
            return list(self._amrs)

    @property
    def shape(self) -> Tuple[int, int]:
        return self._amrs[0].content.shape

    def entropies(self) -> Dict[int, float]:
        return {a.id: a.entropy for a in self.amrs}

    def _route(self, label) -> int:
        hits = [k for k, a in enumerate(self._amrs) if label in a.labels]
        if len(hits) != 1:
            raise RoutingError(f"label {label!r} matches {len(hits)} registers")
        return hits[0]

    def register(self, label, f: DiscreteFunction) -> None:
        with self._lock:
            k = self._route(label)
            self._amrs[k] = memory_register(self._amrs[k], f)

    def register_many(self, label, levels) -> None:
        """Register every row of an ``(N, n_args)`` level array under ``label``."""
        n_args, n_vals = self.shape
        levels = np.asarray(levels, dtype=np.int64).reshape(-1, n_args)
        batch = Relation.from_functions(levels, n_vals)
        with self._lock:
            k = self._route(label)
            old = self._amrs[k]
            self._amrs[k] = Amr(old.id, old.labels, abstraction(old.content, batch))

    def recognize(self, f: DiscreteFunction):
        """Return ``(accepted, accepting_ids, entropies)``."""
        if not f.is_total():
            raise PartialityError("recognition needs a total function")
        amrs = self.amrs
        ids = frozenset(a.id for a in amrs if memory_recognize(a, f))
        return bool(ids), ids, {a.id: a.entropy for a in amrs}

    def recognize_many(self, levels) -> np.ndarray:
        """``(N, K)`` acceptance matrix for an ``(N, n_args)`` level array."""
        amrs = self.amrs
        levels = np.asarray(levels, dtype=np.int64)
        return np.stack([a.content.contains_levels(levels) for a in amrs], axis=1)

    def retrieve(self, f: DiscreteFunction, seed: int = 0) -> RetrieveOutcome:
        if not f.is_total():
            raise PartialityError("retrieval needs a total cue")
        amrs = self.amrs
        accepting = np.array([memory_recognize(a, f) for a in amrs])
        entropies = {a.id: a.entropy for a in amrs}
        ids = frozenset(a.id for a, ok in zip(amrs, accepting) if ok)
        # lowest id wins ties, independent of bank order
        order = np.argsort([a.id for a in amrs], kind="stable")
        pick = int(select_min_entropy(accepting[order], [amrs[k].entropy for k in order]))
        if pick < 0:
            return RetrieveOutcome(False, None, None, ids, entropies)
        chosen = amrs[order[pick]]
        got = memory_retrieve(chosen, f, seed, self.sampler)
        return RetrieveOutcome(True, chosen.id, got, ids, entropies)

    def save(self, directory) -> List[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for a in self.amrs:
            p = directory / f"amr_{a.id}.eamr"
            a.save(p)
            paths.append(p)
        return paths
