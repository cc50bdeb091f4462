"""Synthetic benchmark corpora with planted topic structure."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import Corpus, build_corpus
from .seeding import rng_for


def planted_topic_corpus(
    n_topics: int = 3,
    words_per_topic: int = 10,
    n_docs: int = 300,
    doc_len: int = 25,
    seed: int = 0,
) -> tuple[Corpus, list[list[int]]]:
    """Each document draws all tokens from one topic's disjoint word block.

    Returns the corpus and the planted word-id partition, for checking
    recovered topics against the ground truth.
    """
    rng = rng_for(seed, "planted-topics")
    words = [f"t{k}w{j}" for k in range(n_topics) for j in range(words_per_topic)]
    records = []
    for i in range(n_docs):
        k = int(rng.integers(n_topics))
        toks = [
            words[k * words_per_topic + int(j)]
            for j in rng.integers(0, words_per_topic, size=doc_len)
        ]
        records.append((f"doc-{i}", toks, str(k)))
    corpus = build_corpus(records)
    blocks = [
        [corpus.vocab.word_to_id[words[k * words_per_topic + j]] for j in range(words_per_topic)]
        for k in range(n_topics)
    ]
    return corpus, blocks


def class_benchmark_records(
    n_classes: int = 4,
    vocab_size: int = 200,
    n_docs: int = 1140,
    doc_len: int = 30,
    class_word_frac: float = 0.25,
    class_confusion: float = 0.0,
    seed: int = 0,
) -> list[tuple[str, list[str], str]]:
    """Labeled documents with topic-correlated vocabulary.

    The vocabulary splits into per-class blocks plus a shared block; each
    token comes from the document's class block with probability
    class_word_frac and from the shared block (Zipf-weighted) otherwise.
    With probability class_confusion a class token is drawn from the next
    class's block instead, overlapping adjacent classes.
    """
    per_class = vocab_size // (n_classes + 1)
    shared = vocab_size - n_classes * per_class
    class_words = [
        [f"c{k}w{j}" for j in range(per_class)] for k in range(n_classes)
    ]
    shared_words = [f"sw{j}" for j in range(shared)]
    weights = 1.0 / np.arange(1, shared + 1)
    weights /= weights.sum()
    rng = rng_for(seed, "class-benchmark")
    records = []
    for i in range(n_docs):
        k = int(rng.integers(n_classes))
        toks = []
        for _ in range(doc_len):
            if rng.random() < class_word_frac:
                block = k
                if class_confusion and rng.random() < class_confusion:
                    block = (k + 1) % n_classes
                toks.append(class_words[block][int(rng.integers(per_class))])
            else:
                toks.append(shared_words[int(rng.choice(shared, p=weights))])
        records.append((f"doc-{i}", toks, f"class-{k}"))
    return records


def class_benchmark_corpus(**kwargs) -> Corpus:
    return build_corpus(class_benchmark_records(**kwargs))


def write_benchmark_jsonl(path: str | Path, **kwargs) -> None:
    """Write the class benchmark as a JSONL corpus file."""
    records = class_benchmark_records(**kwargs)
    with open(path, "w", encoding="utf-8") as f:
        for doc_id, toks, label in records:
            f.write(
                json.dumps(
                    {"id": doc_id, "text": " ".join(toks), "label": label},
                    sort_keys=True,
                )
                + "\n"
            )
