"""Topic coherence over boolean document or sliding-window counts.

Two measures: a conditional-log-probability score over whole documents, and
an NPMI-context-vector cosine score over sliding windows. Natural logarithm
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Corpus, virtual_windows


@dataclass(frozen=True)
class CoherenceConfig:
    epsilon: float = 1e-12
    window: int = 110
    gamma: float = 1.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1")


def _membership(word_ids: Sequence[int], units: list[frozenset[int]]) -> np.ndarray:
    """Boolean word x unit occurrence matrix."""
    m = np.zeros((len(word_ids), len(units)), dtype=bool)
    for i, w in enumerate(word_ids):
        for j, unit in enumerate(units):
            m[i, j] = w in unit
    return m


def c_umass(top_words: Sequence[int], corpus: Corpus, cfg: CoherenceConfig = CoherenceConfig()) -> float:
    """Mean of log((P(w_i, w_j) + eps) / P(w_j)) over pairs j < i.

    Probabilities are fractions of documents containing the word(s); a
    document counts once no matter how often the word repeats.
    """
    n = len(top_words)
    if n < 2:
        raise ValueError("need at least 2 words")
    docs = [frozenset(d.tokens) for d in corpus.documents]
    m = _membership(top_words, docs)
    counts = m.sum(axis=1)
    for w, c in zip(top_words, counts):
        if c == 0:
            name = corpus.vocab.id_to_word[w] if w < len(corpus.vocab) else str(w)
            raise ValueError(f"word {name!r} (id {w}) occurs in no document")
    n_docs = len(docs)
    p = counts / n_docs
    joint = (m.astype(np.float64) @ m.T.astype(np.float64)) / n_docs
    total = 0.0
    pairs = 0
    for i in range(n):
        for j in range(i):
            total += np.log((joint[i, j] + cfg.epsilon) / p[j])
            pairs += 1
    return float(total / pairs)


def _npmi_matrix(p: np.ndarray, joint: np.ndarray, eps: float, gamma: float) -> np.ndarray:
    npmi = np.log((joint + eps) / np.outer(p, p)) / (-np.log(joint + eps))
    return npmi**gamma


def c_v(top_words: Sequence[int], corpus: Corpus, cfg: CoherenceConfig = CoherenceConfig()) -> float:
    """Sliding-window NPMI context vectors compared by cosine.

    Each word w_i gets a context vector v_i with entries NPMI(w_i, w_j)^gamma
    over all list words j (self included); the score is the mean cosine
    between v_i and the summed vector over the list.
    """
    n = len(top_words)
    if n < 2:
        raise ValueError("need at least 2 words")
    windows = virtual_windows(corpus, cfg.window)
    m = _membership(top_words, windows)
    counts = m.sum(axis=1)
    for w, c in zip(top_words, counts):
        if c == 0:
            name = corpus.vocab.id_to_word[w] if w < len(corpus.vocab) else str(w)
            raise ValueError(f"word {name!r} (id {w}) occurs in no sliding window")
    n_windows = len(windows)
    p = counts / n_windows
    joint = (m.astype(np.float64) @ m.T.astype(np.float64)) / n_windows
    vectors = _npmi_matrix(p, joint, cfg.epsilon, cfg.gamma)
    v_all = vectors.sum(axis=0)
    sims = np.empty(n)
    for i in range(n):
        v = vectors[i]
        sims[i] = float(v @ v_all / (np.linalg.norm(v) * np.linalg.norm(v_all)))
    return float(sims.mean())


def list_coherence(
    word_lists: Sequence[Sequence[int]],
    corpus: Corpus,
    measure: str,
    cfg: CoherenceConfig = CoherenceConfig(),
) -> float:
    """Arithmetic mean of the chosen measure over per-topic word lists."""
    if measure == "c_v":
        fn = c_v
    elif measure == "c_umass":
        fn = c_umass
    else:
        raise ValueError(f"unknown coherence measure: {measure!r}")
    if not word_lists:
        raise ValueError("no word lists given")
    return float(np.mean([fn(lst, corpus, cfg) for lst in word_lists]))
