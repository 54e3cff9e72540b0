"""
Shared builders and hypothesis strategies for the test suite.
"""

import numpy as np
from hypothesis import strategies as st

from dataset import Dataset


def make_toy(seed, m, num_classes, dim=2, high=12):
    """Random dataset with distinct feature vectors."""
    rng = np.random.default_rng(seed)
    seen = set()
    rows = []
    while len(rows) < m:
        row = tuple(rng.integers(0, high, size=dim).tolist())
        if row not in seen:
            seen.add(row)
            rows.append(row)
    labels = rng.integers(0, num_classes, size=m)
    # jede Klasse mindestens einmal
    labels[:num_classes] = np.arange(num_classes)
    return Dataset.from_arrays(np.array(rows), labels, num_classes)


@st.composite
def datasets(draw, min_m=1, max_m=14, dim=2, max_classes=3, unique_features=True):
    num_classes = draw(st.integers(2, max_classes))
    row = st.tuples(*[st.integers(0, 255)] * dim)
    rows = draw(st.lists(row, min_size=min_m, max_size=max_m, unique=unique_features))
    labels = draw(st.lists(st.integers(0, num_classes - 1), min_size=len(rows), max_size=len(rows)))
    return Dataset.from_arrays(
        np.array(rows, dtype=np.int64).reshape(-1, dim), np.array(labels, dtype=np.int64), num_classes
    )


def counts_vectors(max_k=10, max_classes=4):
    return st.integers(1, max_classes).flatmap(
        lambda c: st.lists(st.integers(0, max_k), min_size=c, max_size=c).filter(lambda v: sum(v) > 0)
    )
