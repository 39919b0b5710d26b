"""Acceptance criteria.

Each test records one PASS/FAIL/SKIP line, printed in the pytest terminal
summary.  Criteria 1, 3 and 5 name the full 70k MNIST corpus; those parts run
only when ``EAM_MNIST_DIR`` points at the four official IDX files.  The
bundled 5000-image MNIST sample exercises every criterion whose outcome does
not depend on corpus size.
"""
import contextlib
import math
import os
import time

import numpy as np
import pytest
from scipy import stats

from eam import experiments as ex
from eam.cli import main
from eam.dataset import load_mnist_dir, make_partition
from eam.features import ExtractorSpec, extract_array
from eam.memory import Amr, memory_register
from eam.relation import (DiscreteFunction, Relation, TriangularSampler, abstraction,
                          containment, entropy, reduction)

from conftest import MNIST5K_IMAGES, MNIST5K_LABELS, naive_contains, naive_entropy, \
    naive_union, pairs_of, random_cells

RESULTS = []


@contextlib.contextmanager
def criterion(name):
    detail = {}
    try:
        yield detail
    except pytest.skip.Exception as exc:
        RESULTS.append((name, "SKIP", str(exc)))
        raise
    except BaseException as exc:
        RESULTS.append((name, "FAIL", detail.get("info", "") + f" [{type(exc).__name__}: {exc}]"))
        raise
    else:
        RESULTS.append((name, "PASS", detail.get("info", "")))


def full_mnist_features():
    root = os.environ.get("EAM_MNIST_DIR")
    if not root:
        pytest.skip("full MNIST unavailable (set EAM_MNIST_DIR)")
    t0 = time.perf_counter()
    corpus = load_mnist_dir(root)
    feats = extract_array(ExtractorSpec(), corpus.images)
    return feats, corpus.labels, time.perf_counter() - t0


def prevalence(labels, fold, seed=0):
    test = make_partition(labels, fold, seed).test_idx
    return np.bincount(labels[test], minlength=10) / test.size


# -- 1 ---------------------------------------------------------------------

def _check_forced_point(feats, labels, folds):
    res = ex.run_experiment1(feats, labels, [0], folds=folds, seed=0)
    for fold in folds:
        pt = res.at(fold, 0)
        assert pt.per_amr_recall == [1.0] * 10
        assert pt.avg_accepting == 10.0
        np.testing.assert_allclose(pt.per_amr_precision, prevalence(labels, fold), atol=0.005)


def test_c1_forced_point_sample(mnist5k_features):
    with criterion("C1 forced m=0 point (5k MNIST sample, 10 folds)"):
        feats, labels = mnist5k_features
        _check_forced_point(feats, labels, range(10))


def test_c1_forced_point_full():
    with criterion("C1 forced m=0 point (full MNIST, < 60 s)") as d:
        feats, labels, load_s = full_mnist_features()
        t0 = time.perf_counter()
        _check_forced_point(feats, labels, [0])
        elapsed = load_s + time.perf_counter() - t0
        d["info"] = f"{elapsed:.1f}s"
        assert elapsed < 60


# -- 2 ---------------------------------------------------------------------

def test_c2_entropy_laws(mnist5k_features):
    with criterion("C2 entropy = log2 k, entropy <= m, strictly rising with fill") as d:
        rng = np.random.default_rng(20)
        for m in range(0, 10):
            n_vals = 1 << m
            for k in sorted({1, 2, 3, n_vals // 2 or 1, n_vals}):
                if k > n_vals:
                    continue
                a = Amr.empty(0, [0], 64, n_vals)
                shift = rng.integers(0, n_vals, size=64)
                for j in range(k):
                    a = memory_register(a, DiscreteFunction((shift + j) % n_vals))
                mu = a.content.to_bool().sum(axis=1)
                oracle = sum(math.log2(x) for x in mu if x) / 64
                assert abs(a.entropy - math.log2(k)) <= 1e-12
                assert abs(a.entropy - oracle) <= 1e-12
        feats, labels = mnist5k_features
        for run in (ex.run_experiment1, ex.run_experiment2):
            res = run(feats, labels, range(10), folds=range(3))
            for (_, m), pt in res.points.items():
                assert max(pt.per_amr_entropy) <= m + 1e-12
        e3 = ex.run_experiment3(feats, labels, folds=range(3))
        for fold in range(3):
            ent = [e3.at(fold, f).entropy for f in e3.values]
            assert np.all(np.diff(ent) > 0), ent
        d["info"] = "fill entropies " + " ".join(f"{x:.2f}" for x in e3.curve("entropy"))


# -- 3 ---------------------------------------------------------------------

def test_c3_trend_full():
    with criterion("C3 experiment-1 trends (full MNIST, 1 fold, < 15 min)") as d:
        feats, labels, load_s = full_mnist_features()
        t0 = time.perf_counter()
        res = ex.run_experiment1(feats, labels, range(10), folds=[0], seed=0,
                                 jobs=ex.default_jobs())
        elapsed = load_s + time.perf_counter() - t0
        prec, rec = res.curve("precision"), res.curve("recall")
        d["info"] = (f"precision {np.round(prec, 3).tolist()} recall "
                     f"{np.round(rec, 3).tolist()} {elapsed:.0f}s")
        assert prec[5] > 3 * prec[0]
        assert np.all(rec[:6] >= 0.85)
        assert np.all(np.diff(rec[5:]) <= 0)
        assert elapsed < 15 * 60


def test_c3_trend_sample_report(mnist5k_features):
    """Corpus-size dependent, so only reported for the 5k sample."""
    feats, labels = mnist5k_features
    res = ex.run_experiment1(feats, labels, range(10), folds=[0], seed=0)
    prec, rec = res.curve("precision"), res.curve("recall")
    RESULTS.append(("C3 proxy on 5k sample (informational, not a criterion)", "INFO",
                    f"precision m5/m0 {prec[5] / prec[0]:.2f}x, recall m<=5 "
                    f"{np.round(rec[:6], 3).tolist()}, recall m>=5 non-increasing "
                    f"{bool(np.all(np.diff(rec[5:]) <= 0))}"))


# -- 4 ---------------------------------------------------------------------

def test_c4_pair_entropy(mnist5k_features):
    with criterion("C4 pair-register entropy >= single-digit entropies"):
        feats, labels = mnist5k_features
        folds = range(10)
        single = ex.run_experiment1(feats, labels, range(10), folds=folds)
        pairs = ex.run_experiment2(feats, labels, range(10), folds=folds)
        for fold in folds:
            for m in range(10):
                se = single.at(fold, m).per_amr_entropy
                pe = pairs.at(fold, m).per_amr_entropy
                for k, (a, b) in enumerate(ex.PAIR_LABELS):
                    assert pe[k] >= se[a] and pe[k] >= se[b], (fold, m, k)


# -- 5 ---------------------------------------------------------------------

def _check_exp4(feats, labels, d):
    res = ex.run_experiment4(feats, labels, folds=[0], samples_per_digit=2,
                             cue_source="rem", seed=0)
    corr = res.correlations()
    assert all(r.accepted for r in res.records)
    rho = float(np.mean(list(corr.values())))
    d["info"] = f"mean spearman {rho:.3f}"
    assert rho >= 0.8
    assert all(r.baseline_distance == 0.0 for r in res.records)
    ident = ex.run_experiment4(feats, labels, folds=[0], samples_per_digit=2,
                               cue_source="rem", sampler="identity", seed=0)
    assert all(r.distance == 0.0 for r in ident.records)


def test_c5_retrieval_similarity_sample(mnist5k_features):
    with criterion("C5 entropy/distance rank correlation >= 0.8 (5k MNIST sample)") as d:
        _check_exp4(*mnist5k_features, d)


def test_c5_retrieval_similarity_full():
    with criterion("C5 entropy/distance rank correlation >= 0.8 (full MNIST)") as d:
        feats, labels, _ = full_mnist_features()
        _check_exp4(feats, labels, d)


# -- 6 ---------------------------------------------------------------------

def test_c6_oracle_equivalence():
    with criterion("C6 packed ops == set-of-pairs oracle on 10^4 relations"):
        rng = np.random.default_rng(6)
        for _ in range(10_000):
            n, v = (int(x) for x in rng.integers(1, 4, size=2))
            a, b = random_cells(rng, n, v), random_cells(rng, n, v)
            ra, rb = Relation.from_bool(a), Relation.from_bool(b)
            pa, pb = pairs_of(a), pairs_of(b)
            assert pairs_of(abstraction(ra, rb).to_bool()) == naive_union(pa, pb)
            assert containment(ra, rb) == naive_contains(pa, pb)
            assert containment(rb, ra) == naive_contains(pb, pa)
            assert entropy(ra) == naive_entropy(pa, n)


# -- 7 ---------------------------------------------------------------------

def kernel_weights(marked, cue):
    far = max(abs(v - cue) for v in marked)
    raw = [1 - abs(v - cue) / (far + 1) for v in marked]
    return [w / sum(raw) for w in raw]


def test_c7_sampler_chi_square():
    with criterion("C7 triangular sampler chi-square p > 0.01 on 20 cases") as d:
        rng = np.random.default_rng(7)
        sampler = TriangularSampler()
        pvals = []
        for case in range(20):
            n_vals = int(rng.integers(2, 33))
            size = int(rng.integers(2, min(n_vals, 12) + 1))
            marked = np.sort(rng.choice(n_vals, size=size, replace=False))
            cue = int(rng.choice(marked))
            draws = sampler.draw(marked, cue, np.random.default_rng([7, case]), size=100_000)
            counts = np.array([np.sum(draws == v) for v in marked])
            assert counts.sum() == 100_000
            expected = np.array(kernel_weights(marked.tolist(), cue)) * 100_000
            pvals.append(stats.chisquare(counts, expected).pvalue)
        d["info"] = f"min p {min(pvals):.3f}"
        assert min(pvals) > 0.01


# -- 8 ---------------------------------------------------------------------

def test_c8_determinism(tmp_path):
    with criterion("C8 identical config+seed -> byte-identical CSV (experiments 1-4)"):
        base = ["--images", str(MNIST5K_IMAGES), "--labels", str(MNIST5K_LABELS),
                "--folds", "0,1", "--seed", "17"]
        for which in "1234":
            outs = []
            for run in range(2):
                out = tmp_path / f"e{which}_{run}"
                jobs = "1" if run == 0 else "2"
                assert main(["exp", which, *base, "--out", str(out), "--jobs", jobs]) == 0
                outs.append((out / f"exp{which}.csv").read_bytes())
            assert outs[0] == outs[1]


# -- 9 ---------------------------------------------------------------------

def test_c9_property_suite():
    with criterion("C9 union/containment/retrieval/entropy laws on 10^4 cases"):
        rng = np.random.default_rng(9)
        for case in range(10_000):
            n = int(rng.integers(1, 6))
            v = int(rng.integers(1, 10))
            a, b, c = (Relation.from_bool(random_cells(rng, n, v)) for _ in range(3))
            empty = Relation.empty(n, v)
            ab = abstraction(a, b)
            assert ab == abstraction(b, a)
            assert abstraction(ab, c) == abstraction(a, abstraction(b, c))
            assert abstraction(a, a) == a and abstraction(a, empty) == a
            assert containment(a, a) and containment(a, ab)
            if containment(a, b) and containment(b, a):
                assert a == b
            if containment(a, b) and containment(b, c):
                assert containment(a, c)
            ea, eab = entropy(a), entropy(ab)
            assert 0.0 <= ea <= math.log2(v) + 1e-12
            assert eab >= max(ea, entropy(b)) - 1e-12
            full = abstraction(ab, Relation.from_functions(rng.integers(0, v, (1, n)), v))
            cue = DiscreteFunction([int(rng.choice(full.marked(i))) for i in range(n)])
            got = reduction(cue, full, TriangularSampler(), case)
            assert got is not None and containment(got, full)
