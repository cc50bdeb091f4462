import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from topicmask.corpus import build_corpus


@pytest.fixture
def tiny_corpus():
    """Three documents over three words: docs {a,b}, {a}, {b,c}."""
    return build_corpus(
        [
            ("d0", ["a", "b"], None),
            ("d1", ["a"], None),
            ("d2", ["b", "c"], None),
        ]
    )


def make_labeled_corpus(n_per_class=6, n_classes=3, doc_len=4):
    records = []
    i = 0
    for c in range(n_classes):
        for _ in range(n_per_class):
            toks = [f"w{c}_{j % 3}" for j in range(doc_len)]
            records.append((f"doc-{i}", toks, f"class-{c}"))
            i += 1
    return build_corpus(records)


@pytest.fixture
def labeled_corpus():
    return make_labeled_corpus()
