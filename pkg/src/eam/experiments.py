"""Recognition and retrieval experiments over cross-validation folds.

Experiments 1 and 2 sweep the granularity exponent ``m`` with one register
per digit or per digit pair.  Experiment 3 fixes ``m`` and fills the
registers with nested fractions of the remembered partition.  Experiment 4
retrieves cues at every fill level and measures how far the retrieved
function drifts from the cue.

Every work unit is a ``(fold, axis value)`` pair.  Units share nothing but
the read-only feature matrix, so they can run in worker processes; results
are reassembled in unit order, which keeps reports byte-identical whatever
the number of workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats

from . import quantizer as qz
from .dataset import make_partition, nested_fill
from .features import ExtractorSpec, synthesize_array
from .memory import MemorySystem, memory_retrieve, select_min_entropy
from .relation import DiscreteFunction, IdentitySampler, get_sampler

DIGIT_LABELS = tuple((d,) for d in range(10))
PAIR_LABELS = ((0, 1), (2, 3), (4, 5), (6, 7), (8, 9))
DEFAULT_FILLS = (1, 2, 4, 8, 16, 32, 64, 100)
EXP3_M = 5


@dataclass
class RecognitionMetrics:
    """Macro-averaged recognition scores for one system state."""

    precision: float
    recall: float
    entropy: float
    system_precision: float
    system_recall: float
    avg_accepting: float
    per_amr_precision: List[float] = field(default_factory=list)
    per_amr_recall: List[float] = field(default_factory=list)
    per_amr_entropy: List[float] = field(default_factory=list)
    n_registered: int = 0
    n_test: int = 0


def _precision_recall(pred: np.ndarray, truth: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    tp = np.sum(pred & truth, axis=0)
    fp = np.sum(pred & ~truth, axis=0)
    fn = np.sum(~pred & truth, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 1.0)
        recall = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
    return precision, recall


def compute_metrics(predictions, truths, entropies=None, chosen=None) -> RecognitionMetrics:
    """Per-register and macro-averaged precision and recall.

    ``predictions`` and ``truths`` are ``(N, K)`` boolean matrices: register
    ``k`` accepted item ``n`` / item ``n`` belongs to register ``k``.
    Precision is 1.0 for a register that accepted nothing.

    ``chosen`` is the single register selected per item (``-1`` when all
    reject).  System scores are pooled over items: precision is the share of
    selections that are correct, recall the share of all items correctly
    selected.  Without ``chosen`` the system scores are NaN.
    """
    pred = np.asarray(predictions, dtype=bool)
    truth = np.asarray(truths, dtype=bool)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise ValueError(f"predictions {pred.shape} and truths {truth.shape} must match")
    p, r = _precision_recall(pred, truth)
    sp = sr = math.nan
    if chosen is not None:
        chosen = np.asarray(chosen)
        selected = chosen >= 0
        correct = selected & truth[np.arange(len(chosen)), np.where(selected, chosen, 0)]
        sp = correct.sum() / selected.sum() if selected.any() else 1.0
        sr = correct.sum() / len(chosen) if len(chosen) else 0.0
    ent = np.zeros(pred.shape[1]) if entropies is None else np.asarray(entropies, float)
    return RecognitionMetrics(
        precision=float(p.mean()), recall=float(r.mean()), entropy=float(ent.mean()),
        system_precision=float(sp), system_recall=float(sr),
        avg_accepting=float(pred.sum(axis=1).mean()) if len(pred) else 0.0,
        per_amr_precision=p.tolist(), per_amr_recall=r.tolist(),
        per_amr_entropy=ent.tolist(), n_test=len(pred))


def build_system(levels, labels, label_sets, m: int, quantizer=None,
                 sampler=None) -> MemorySystem:
    """Registers for ``label_sets`` filled with every row of ``levels``."""
    levels = np.asarray(levels, dtype=np.int64)
    system = MemorySystem.create(label_sets, levels.shape[1], 1 << m, quantizer, sampler)
    for label in np.unique(labels):
        system.register_many(int(label), levels[labels == label])
    return system


def evaluate(system: MemorySystem, levels, labels, label_sets) -> RecognitionMetrics:
    accept = system.recognize_many(levels)
    truth = np.stack([np.isin(labels, list(s)) for s in label_sets], axis=1)
    ent = [a.entropy for a in system.amrs]
    metrics = compute_metrics(accept, truth, ent, select_min_entropy(accept, ent))
    return metrics


# -- sweeps ----------------------------------------------------------------

_SHARED: Dict[str, np.ndarray] = {}


def _init_worker(features, labels):
    _SHARED["features"] = features
    _SHARED["labels"] = labels


@dataclass(frozen=True)
class _Unit:
    experiment: int
    fold: int
    value: float
    m: int
    fill: float
    label_sets: Tuple[Tuple[int, ...], ...]
    seed: int


def _fold_levels(features, labels, fold, seed, m):
    part = make_partition(labels, fold, seed)
    q = qz.fit(features[part.train_idx], m)
    return part, q


def _run_unit(unit: _Unit) -> RecognitionMetrics:
    features, labels = _SHARED["features"], _SHARED["labels"]
    part, q = _fold_levels(features, labels, unit.fold, unit.seed, unit.m)
    rem = nested_fill(labels, part.rem_idx, unit.fill)
    system = build_system(qz.quantize_array(q, features[rem]), labels[rem],
                          unit.label_sets, unit.m, q)
    metrics = evaluate(system, qz.quantize_array(q, features[part.test_idx]),
                       labels[part.test_idx], unit.label_sets)
    metrics.n_registered = int(rem.size)
    return metrics


@dataclass
class SweepResult:
    """Metrics for every ``(fold, axis value)`` point of one experiment."""

    experiment: int
    axis: str
    values: List[float]
    folds: List[int]
    label_sets: List[Tuple[int, ...]]
    points: Dict[Tuple[int, float], RecognitionMetrics]

    def at(self, fold: int, value) -> RecognitionMetrics:
        return self.points[(fold, value)]

    def mean(self, value, key: str) -> float:
        return float(np.mean([getattr(self.points[(f, value)], key) for f in self.folds]))

    def curve(self, key: str) -> np.ndarray:
        """Fold-averaged ``key`` along the axis."""
        return np.array([self.mean(v, key) for v in self.values])

    def csv_columns(self) -> List[str]:
        cols = ["experiment", "fold", "axis", "value", "n_amrs", "n_registered",
                "n_test", "precision", "recall", "entropy", "system_precision",
                "system_recall", "avg_accepting"]
        for k in range(len(self.label_sets)):
            cols += [f"precision_{k}", f"recall_{k}", f"entropy_{k}"]
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_columns())
        for fold in self.folds:
            for v in self.values:
                mt = self.points[(fold, v)]
                row = [self.experiment, fold, self.axis, _fmt(v), len(self.label_sets),
                       mt.n_registered, mt.n_test, _fmt(mt.precision), _fmt(mt.recall),
                       _fmt(mt.entropy), _fmt(mt.system_precision),
                       _fmt(mt.system_recall), _fmt(mt.avg_accepting)]
                for p, r, e in zip(mt.per_amr_precision, mt.per_amr_recall,
                                   mt.per_amr_entropy):
                    row += [_fmt(p), _fmt(r), _fmt(e)]
                w.writerow(row)
        return buf.getvalue()

    def summary(self) -> dict:
        keys = ("precision", "recall", "entropy", "system_precision",
                "system_recall", "avg_accepting")
        points = []
        for v in self.values:
            entry = {self.axis: v}
            for k in keys:
                xs = [getattr(self.points[(f, v)], k) for f in self.folds]
                entry[k] = {"mean": float(np.mean(xs)), "std": float(np.std(xs))}
            points.append(entry)
        return {"experiment": self.experiment, "axis": self.axis, "folds": self.folds,
                "label_sets": [list(s) for s in self.label_sets], "points": points}


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def _run_units(units: Sequence[_Unit], features, labels, jobs: int) -> List[RecognitionMetrics]:
    if jobs <= 1 or len(units) <= 1:
        _init_worker(features, labels)
        try:
            return [_run_unit(u) for u in units]
        finally:
            _SHARED.clear()
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(features, labels)) as ex:
        return list(ex.map(_run_unit, units))


def _sweep(experiment, axis, values, folds, label_sets, features, labels, seed,
           jobs, m=None, fill=1.0) -> SweepResult:
    values = list(values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{axis} values must be strictly increasing: {values}")
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    folds = list(folds)
    units = []
    for fold in folds:
        for v in values:
            um = int(v) if axis == "m" else m
            uf = fill if axis == "m" else v / 100.0
            units.append(_Unit(experiment, fold, v, um, uf, tuple(label_sets), seed))
    results = _run_units(units, features, labels, jobs)
    points = {(u.fold, u.value): r for u, r in zip(units, results)}
    return SweepResult(experiment, axis, values, folds, [tuple(s) for s in label_sets], points)


def run_experiment1(features, labels, m_values=range(10), folds=(0,), seed=0,
                    jobs=1) -> SweepResult:
    """One register per digit, full remembered partition, sweep over ``m``."""
    return _sweep(1, "m", m_values, folds, DIGIT_LABELS, features, labels, seed, jobs)


def run_experiment2(features, labels, m_values=range(10), folds=(0,), seed=0,
                    jobs=1) -> SweepResult:
    """One register per digit pair, otherwise as experiment 1."""
    return _sweep(2, "m", m_values, folds, PAIR_LABELS, features, labels, seed, jobs)


def run_experiment3(features, labels, fills=DEFAULT_FILLS, m=EXP3_M, folds=(0,),
                    seed=0, jobs=1) -> SweepResult:
    """Digit registers at fixed ``m`` filled with nested percentages of the
    remembered partition."""
    for f in fills:
        if not 0 <= f <= 100:
            raise ValueError(f"fill {f}% outside [0, 100]")
    return _sweep(3, "fill", fills, folds, DIGIT_LABELS, features, labels, seed,
                  jobs, m=m)


# -- experiment 4 ----------------------------------------------------------


@dataclass
class RetrievalRecord:
    fold: int
    fill: float
    digit: int
    sample: int
    index: int
    accepted: bool
    chosen_amr: int
    amr_entropy: float
    chosen_entropy: float
    distance: float
    baseline_distance: float


@dataclass
class Exp4Result:
    fills: List[float]
    folds: List[int]
    m: int
    records: List[RetrievalRecord]
    cue_levels: Dict[Tuple[int, int, int], np.ndarray]
    retrieved_levels: Dict[Tuple[int, float, int, int], np.ndarray]
    quantizers: Dict[int, qz.QuantizerModel]

    CSV_COLUMNS = ("fold", "fill", "digit", "sample", "index", "accepted",
                   "chosen_amr", "amr_entropy", "chosen_entropy", "distance",
                   "baseline_distance")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for rec in self.records:
            d = asdict(rec)
            w.writerow([_fmt(d[c]) if isinstance(d[c], float) else int(d[c])
                        for c in self.CSV_COLUMNS])
        return buf.getvalue()

    def mean_distance(self, digit: int, fill) -> float:
        """Mean cue-to-retrieved distance over accepted cues (nan if none)."""
        ds = [r.distance for r in self.records
              if r.digit == digit and r.fill == fill and r.accepted]
        return float(np.mean(ds)) if ds else math.nan

    def digit_entropy(self, digit: int, fill) -> float:
        es = [r.amr_entropy for r in self.records if r.digit == digit and r.fill == fill]
        return float(np.mean(es))

    def correlations(self) -> Dict[int, float]:
        """Spearman correlation of register entropy vs mean distance per digit,
        over the fill levels where at least one cue was accepted."""
        out = {}
        for d in sorted({r.digit for r in self.records}):
            ent = np.array([self.digit_entropy(d, f) for f in self.fills])
            dist = np.array([self.mean_distance(d, f) for f in self.fills])
            ok = ~np.isnan(dist)
            if ok.sum() < 3 or np.ptp(ent[ok]) == 0 or np.ptp(dist[ok]) == 0:
                out[d] = math.nan
            else:
                out[d] = float(stats.spearmanr(ent[ok], dist[ok])[0])
        return out

    def summary(self) -> dict:
        corr = self.correlations()
        vals = [c for c in corr.values() if not math.isnan(c)]
        acc = [{"fill": f, "acceptance": float(np.mean(
            [r.accepted for r in self.records if r.fill == f]))} for f in self.fills]
        return {"experiment": 4, "m": self.m, "folds": self.folds, "fills": self.fills,
                "spearman_per_digit": {str(k): v for k, v in corr.items()},
                "spearman_mean": float(np.mean(vals)) if vals else math.nan,
                "acceptance": acc,
                "max_baseline_distance": max((r.baseline_distance for r in self.records
                                              if r.accepted), default=0.0)}

    def images(self, spec: ExtractorSpec, raw_images=None, fold=None) -> Dict[str, np.ndarray]:
        """PGM-ready pixel arrays for sample 0 of every digit in one fold."""
        fold = self.folds[0] if fold is None else fold
        q = self.quantizers[fold]
        out = {}
        for (f, d, s), cue in sorted(self.cue_levels.items()):
            if f != fold or s != 0:
                continue
            rec = next(r for r in self.records if r.fold == f and r.digit == d and r.sample == 0)
            if raw_images is not None:
                out[f"exp4_d{d}_cue.pgm"] = np.asarray(raw_images[rec.index])
            decoded = qz.dequantize_array(q, cue)[None]
            out[f"exp4_d{d}_decoded.pgm"] = synthesize_array(spec, decoded)[0]
            for fill in self.fills:
                got = self.retrieved_levels.get((f, fill, d, s))
                if got is not None:
                    px = synthesize_array(spec, qz.dequantize_array(q, got)[None])[0]
                    out[f"exp4_d{d}_fill{_fmt(fill)}.pgm"] = px
        return out


def _retrieval_seed(seed, fold, fill, digit, sample) -> int:
    ss = np.random.SeedSequence([seed, fold, int(round(fill * 1000)), digit, sample])
    return int(ss.generate_state(1, np.uint64)[0])


def run_experiment4(features, labels, fills=DEFAULT_FILLS, m=EXP3_M, folds=(0,),
                    seed=0, samples_per_digit=1, cue_source="test",
                    sampler="triangular") -> Exp4Result:
    """Retrieve per-digit cues from digit registers at every fill level.

    ``cue_source="test"`` draws cues from the test partition; ``"rem"`` uses
    the first remembered items of each digit, which are registered at every
    positive fill level.  Distance is the mean absolute level difference
    between cue and retrieved function; the baseline retrieves the same cue
    with the identity sampler.
    """
    if cue_source not in ("test", "rem"):
        raise ValueError(f"cue_source must be 'test' or 'rem', not {cue_source!r}")
    fills = list(fills)
    if any(b <= a for a, b in zip(fills, fills[1:])):
        raise ValueError(f"fill values must be strictly increasing: {fills}")
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    smp = get_sampler(sampler) if isinstance(sampler, str) else sampler
    ident = IdentitySampler()
    records, cues, retrieved, quantizers = [], {}, {}, {}
    for fold in folds:
        part, q = _fold_levels(features, labels, fold, seed, m)
        quantizers[fold] = q
        pool = part.test_idx if cue_source == "test" else part.rem_idx
        cue_idx = {d: pool[labels[pool] == d][:samples_per_digit] for d in range(10)}
        for d, idx in cue_idx.items():
            for s, i in enumerate(idx):
                cues[(fold, d, s)] = qz.quantize_array(q, features[i])
        for fill in fills:
            rem = nested_fill(labels, part.rem_idx, fill / 100.0)
            system = build_system(qz.quantize_array(q, features[rem]), labels[rem],
                                  DIGIT_LABELS, m, q, smp)
            ent = system.entropies()
            for d, idx in cue_idx.items():
                for s, i in enumerate(idx):
                    cue = DiscreteFunction.from_array(cues[(fold, d, s)])
                    out = system.retrieve(cue, _retrieval_seed(seed, fold, fill, d, s))
                    dist = base = math.nan
                    if out.accepted:
                        got = out.retrieved.values
                        retrieved[(fold, fill, d, s)] = np.array(got)
                        dist = float(np.mean(np.abs(got - cue.values)))
                        chosen = next(a for a in system.amrs if a.id == out.chosen_amr)
                        plain = memory_retrieve(chosen, cue, 0, ident)
                        base = float(np.mean(np.abs(plain.values - cue.values)))
                    records.append(RetrievalRecord(
                        fold, fill, d, s, int(i), out.accepted,
                        -1 if out.chosen_amr is None else out.chosen_amr,
                        ent[d], ent[out.chosen_amr] if out.accepted else math.nan,
                        dist, base))
    return Exp4Result(fills, list(folds), m, records, cues, retrieved, quantizers)


def default_jobs() -> int:
    return os.cpu_count() or 1


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
