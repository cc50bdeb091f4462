"""Corpus ingestion, preprocessing filters, splits, and sliding windows.

Documents hold integer word ids against a dense vocabulary. All structures
are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .seeding import rng_for


@dataclass(frozen=True)
class Document:
    """A tokenized document; label is a dense class id when known."""

    id: str
    tokens: tuple[int, ...]
    label: int | None = None


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Dense word<->id maps with per-id document and corpus frequencies."""

    id_to_word: tuple[str, ...]
    word_to_id: dict[str, int]
    doc_freq: np.ndarray
    corpus_freq: np.ndarray

    def __len__(self) -> int:
        return len(self.id_to_word)

    def hash(self) -> str:
        """Stable hash of the id->word mapping, used to pair artifacts."""
        h = hashlib.sha256()
        for w in self.id_to_word:
            h.update(w.encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class Corpus:
    documents: tuple[Document, ...]
    vocab: Vocabulary
    label_names: tuple[str, ...] = ()

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def with_documents(self, documents: Iterable[Document]) -> "Corpus":
        """Same vocabulary and label set over a different document list."""
        return Corpus(tuple(documents), self.vocab, self.label_names)


@dataclass(frozen=True, eq=False)
class SplitSet:
    """Gold / unlabeled / dev / test partition.

    `unlabeled` documents carry label=None. Their true labels are kept in
    `unlabeled_truth` for diagnostics only; training code must not read it.
    """

    gold: tuple[Document, ...]
    unlabeled: tuple[Document, ...]
    dev: tuple[Document, ...]
    test: tuple[Document, ...]
    unlabeled_truth: dict[str, int] = field(default_factory=dict)


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip surrounding punctuation."""
    out = []
    for raw in text.lower().split():
        tok = _strip_punct(raw)
        if tok:
            out.append(tok)
    return out


def build_corpus(records: Sequence[tuple[str, Sequence[str], str | None]]) -> Corpus:
    """Assemble a corpus from (id, word tokens, label string) records.

    Word ids and class ids are assigned in first-appearance order.
    """
    word_to_id: dict[str, int] = {}
    label_to_id: dict[str, int] = {}
    docs: list[Document] = []
    corpus_freq: list[int] = []
    doc_freq: list[int] = []
    for doc_id, words, label in records:
        ids = []
        for w in words:
            wid = word_to_id.get(w)
            if wid is None:
                wid = len(word_to_id)
                word_to_id[w] = wid
                corpus_freq.append(0)
                doc_freq.append(0)
            corpus_freq[wid] += 1
            ids.append(wid)
        for wid in set(ids):
            doc_freq[wid] += 1
        if label is not None and label not in label_to_id:
            label_to_id[label] = len(label_to_id)
        docs.append(Document(doc_id, tuple(ids), label_to_id[label] if label is not None else None))
    vocab = Vocabulary(
        id_to_word=tuple(word_to_id),
        word_to_id=word_to_id,
        doc_freq=np.asarray(doc_freq, dtype=np.int64),
        corpus_freq=np.asarray(corpus_freq, dtype=np.int64),
    )
    return Corpus(tuple(docs), vocab, tuple(label_to_id))


def ingest_jsonl(path: str | Path) -> Corpus:
    """Read a JSONL corpus: one object per line with "text" and optional
    "id" and "label" fields. Missing ids become "doc-<line-number>".
    """
    records: list[tuple[str, list[str], str | None]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"malformed JSON on line {lineno}: {e.msg}") from e
            if not isinstance(obj, dict) or "text" not in obj:
                raise ValueError(f'line {lineno}: missing required field "text"')
            if not isinstance(obj["text"], str):
                raise ValueError(f'line {lineno}: field "text" must be a string')
            doc_id = str(obj.get("id", f"doc-{lineno}"))
            label = obj.get("label")
            records.append((doc_id, tokenize(obj["text"]), str(label) if label is not None else None))
    if not records:
        raise ValueError(f"empty corpus file: {path}")
    return build_corpus(records)


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Plain-text stopword list, one word per line, lowercased."""
    words = set()
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            w = line.strip().lower()
            if w:
                words.add(w)
    return frozenset(words)


def preprocess(
    corpus: Corpus,
    stopwords: frozenset[str] = frozenset(),
    max_df_frac: float = 1.0,
    min_count: int = 1,
) -> Corpus:
    """Drop stopwords, too-frequent words (df/|D| > max_df_frac), and rare
    words (corpus count < min_count); rebuild the vocabulary densely.

    Filters are iterated to a fixed point: dropping emptied documents can
    raise df fractions of surviving words, so a single pass would not be
    idempotent.
    """
    if not (0.0 < max_df_frac <= 1.0):
        raise ValueError("max_df_frac must be in (0, 1]")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")

    records = [
        (doc.id, [corpus.vocab.id_to_word[t] for t in doc.tokens], doc.label)
        for doc in corpus.documents
    ]
    stop = {w.lower() for w in stopwords}
    while True:
        n_docs = len(records)
        counts: dict[str, int] = {}
        dfs: dict[str, int] = {}
        for _, words, _ in records:
            for w in words:
                counts[w] = counts.get(w, 0) + 1
            for w in set(words):
                dfs[w] = dfs.get(w, 0) + 1
        keep = {
            w
            for w in counts
            if w not in stop and dfs[w] / n_docs <= max_df_frac and counts[w] >= min_count
        }
        new_records = []
        changed = False
        for doc_id, words, label in records:
            kept = [w for w in words if w in keep]
            if not kept:
                changed = True
                continue
            if len(kept) != len(words):
                changed = True
            new_records.append((doc_id, kept, label))
        if not new_records:
            raise ValueError("corpus emptied by preprocessing")
        records = new_records
        if not changed:
            break

    out = build_corpus([(i, w, None) for i, w, _ in records])
    # build_corpus assigns fresh label ids; reattach the original ones so
    # class ids stay aligned with the unfiltered corpus
    docs = tuple(
        Document(doc.id, doc.tokens, label)
        for doc, (_, _, label) in zip(out.documents, records)
    )
    return Corpus(docs, out.vocab, corpus.label_names)


def split(
    corpus: Corpus,
    n_gold_per_class: int,
    n_unlabeled: int,
    n_dev: int,
    seed: int,
) -> SplitSet:
    """Stratified gold selection plus random unlabeled/dev/test partition.

    Deterministic given the seed. Unlabeled documents get their labels
    stripped; the true labels are retained in `unlabeled_truth` only.
    """
    if any(d.label is None for d in corpus.documents):
        raise ValueError("split requires a fully labeled corpus")
    by_class: dict[int, list[int]] = {c: [] for c in range(corpus.n_classes)}
    for i, doc in enumerate(corpus.documents):
        by_class[doc.label].append(i)

    rng = rng_for(seed, "split")
    gold_idx: list[int] = []
    for c in range(corpus.n_classes):
        pool = by_class[c]
        if len(pool) < n_gold_per_class:
            name = corpus.label_names[c] if corpus.label_names else str(c)
            raise ValueError(
                f"class {name!r} has {len(pool)} documents, "
                f"fewer than n_gold_per_class={n_gold_per_class}"
            )
        chosen = rng.choice(len(pool), size=n_gold_per_class, replace=False)
        gold_idx.extend(pool[j] for j in sorted(chosen))

    gold_set = set(gold_idx)
    rest = [i for i in range(corpus.n_docs) if i not in gold_set]
    if len(rest) < n_unlabeled + n_dev:
        raise ValueError(
            f"{len(rest)} documents left after gold selection, "
            f"need n_unlabeled+n_dev={n_unlabeled + n_dev}"
        )
    order = rng.permutation(len(rest))
    rest = [rest[j] for j in order]
    unlab_idx = rest[:n_unlabeled]
    dev_idx = rest[n_unlabeled : n_unlabeled + n_dev]
    test_idx = rest[n_unlabeled + n_dev :]

    docs = corpus.documents
    unlabeled = tuple(Document(docs[i].id, docs[i].tokens, None) for i in unlab_idx)
    truth = {docs[i].id: docs[i].label for i in unlab_idx}
    return SplitSet(
        gold=tuple(docs[i] for i in gold_idx),
        unlabeled=unlabeled,
        dev=tuple(docs[i] for i in dev_idx),
        test=tuple(docs[i] for i in test_idx),
        unlabeled_truth=truth,
    )


def virtual_windows(corpus: Corpus, window: int) -> list[frozenset[int]]:
    """Boolean sliding windows: every length-`window` substring of a document
    is one virtual document (as a word-id set). Documents shorter than the
    window emit exactly one window with all their tokens.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    out: list[frozenset[int]] = []
    for doc in corpus.documents:
        n = len(doc.tokens)
        if n <= window:
            out.append(frozenset(doc.tokens))
        else:
            for i in range(n - window + 1):
                out.append(frozenset(doc.tokens[i : i + window]))
    return out


def save_corpus(path: str | Path, corpus: Corpus) -> None:
    """Corpus artifact: vocabulary, label names, and documents as JSON."""
    obj = {
        "version": 1,
        "vocab": list(corpus.vocab.id_to_word),
        "label_names": list(corpus.label_names),
        "documents": [
            {"id": d.id, "tokens": list(d.tokens), "label": d.label}
            for d in corpus.documents
        ],
    }
    Path(path).write_text(json.dumps(obj, sort_keys=True, separators=(",", ":")), encoding="utf-8")


def load_corpus(path: str | Path) -> Corpus:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("version") != 1:
        raise ValueError(f"unsupported corpus file version: {obj.get('version')}")
    words = obj["vocab"]
    word_to_id = {w: i for i, w in enumerate(words)}
    docs = []
    corpus_freq = np.zeros(len(words), dtype=np.int64)
    doc_freq = np.zeros(len(words), dtype=np.int64)
    for rec in obj["documents"]:
        toks = tuple(rec["tokens"])
        docs.append(Document(rec["id"], toks, rec["label"]))
        np.add.at(corpus_freq, list(toks), 1)
        for t in set(toks):
            doc_freq[t] += 1
    vocab = Vocabulary(tuple(words), word_to_id, doc_freq, corpus_freq)
    return Corpus(tuple(docs), vocab, tuple(obj["label_names"]))
