import math
from pathlib import Path

import numpy as np
import pytest

from eam.dataset import load_corpus
from eam.features import ExtractorSpec, extract_array

DATA = Path(__file__).parent / "data"
MNIST5K_IMAGES = DATA / "mnist5k-images-idx3-ubyte.gz"
MNIST5K_LABELS = DATA / "mnist5k-labels-idx1-ubyte.gz"


# -- set-of-pairs oracle, independent of the packed implementation ----------

def pairs_of(cells):
    """Relation as a set of (argument, value) pairs."""
    cells = np.asarray(cells, dtype=bool)
    return {(i, j) for i in range(cells.shape[0]) for j in range(cells.shape[1])
            if cells[i, j]}


def naive_union(a, b):
    return a | b


def naive_contains(a, b):
    return all(p in b for p in a)


def naive_entropy(pairs, n_args):
    total = 0.0
    for i in range(n_args):
        mu = sum(1 for (a, _) in pairs if a == i)
        if mu:
            total += math.log2(mu)
    return total / n_args


def random_cells(rng, n_args, n_vals, density=None):
    p = rng.uniform() if density is None else density
    return rng.uniform(size=(n_args, n_vals)) < p


@pytest.fixture(scope="session")
def mnist5k():
    return load_corpus(MNIST5K_IMAGES, MNIST5K_LABELS)


@pytest.fixture(scope="session")
def mnist5k_features(mnist5k):
    return extract_array(ExtractorSpec(), mnist5k.images), mnist5k.labels


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, info in mod.RESULTS:
        terminalreporter.write_line(f"{status:5} {name}" + (f"  -- {info}" if info else ""))
