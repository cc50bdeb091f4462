"""Topic-count selection, relevance-ranked topic word lists, and the
average-TF-IDF baseline list.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .coherence import CoherenceConfig, list_coherence
from .corpus import Corpus
from .lda import LdaModel, fit_lda, topic_top_words
from .seeding import derive_seed

SWEEP_TOP_WORDS = 10  # list length scored during the topic-count sweep


@dataclass(frozen=True)
class LdaConfig:
    alpha: float | None = None
    beta_lda: float = 0.01
    sweeps: int = 200
    burn_in: int = 100
    seed: int = 0


@dataclass(frozen=True, eq=False)
class TopicWordList:
    """A masking vocabulary with its per-topic provenance.

    method is "relevance", "tfidf", or "none"; `words` is the union of the
    per-topic lists.
    """

    words: frozenset[int]
    per_topic: tuple[tuple[int, ...], ...]
    method: str
    lambda_rel: float | None = None
    n_per_topic: int | None = None
    source_model: LdaModel | None = None


def coherence_sweep(
    corpus: Corpus,
    m: int,
    k_steps: int,
    lda_cfg: LdaConfig = LdaConfig(),
    cfg: CoherenceConfig = CoherenceConfig(),
) -> list[tuple[int, float]]:
    """Score one fitted model per candidate K = i*m, i = 1..k_steps.

    Each candidate is scored by the window-based coherence of its topics'
    top SWEEP_TOP_WORDS words. Returned in ascending K.
    """
    if m < 2:
        raise ValueError("m (class count) must be >= 2")
    if k_steps < 1:
        raise ValueError("k_steps must be >= 1")
    out: list[tuple[int, float]] = []
    for i in range(1, k_steps + 1):
        k = i * m
        model = fit_lda(
            corpus,
            n_topics=k,
            alpha=lda_cfg.alpha,
            beta_lda=lda_cfg.beta_lda,
            sweeps=lda_cfg.sweeps,
            burn_in=lda_cfg.burn_in,
            seed=derive_seed(lda_cfg.seed, "sweep", k),
        )
        n_top = min(SWEEP_TOP_WORDS, len(corpus.vocab))
        lists = [topic_top_words(model, t, n_top) for t in range(k)]
        out.append((k, list_coherence(lists, corpus, "c_v", cfg)))
    return out


def select_k_elbow(scores: Sequence[tuple[int, float]]) -> int:
    """Pick the K where the marginal coherence gain drops most sharply.

    If the first score is already the maximum, return the first K. Otherwise
    maximize the second difference g_i - g_{i+1} of the score sequence, with
    the gain past the last point taken as 0; ties go to the smallest K.
    """
    if not scores:
        raise ValueError("empty sweep")
    ks = [k for k, _ in scores]
    vals = [s for _, s in scores]
    if vals[0] >= max(vals):
        return ks[0]
    gains = [vals[i] - vals[i - 1] for i in range(1, len(vals))]
    gains.append(0.0)
    best_k, best_drop = None, -np.inf
    for i in range(len(gains) - 1):
        drop = gains[i] - gains[i + 1]
        if drop > best_drop:
            best_drop = drop
            best_k = ks[i + 1]
    return best_k


def relevance(w: int, k: int, lambda_rel: float, model: LdaModel) -> float:
    """lambda * log(phi_kw) + (1 - lambda) * log(phi_kw / p_w)."""
    if not (0.0 <= lambda_rel <= 1.0):
        raise ValueError("lambda_rel must be in [0, 1]")
    phi = model.phi[k, w]
    p = model.marginal_word_prob[w]
    if phi <= 0 or p <= 0:
        raise ValueError(f"zero probability for word id {w} in topic {k}")
    return float(lambda_rel * np.log(phi) + (1.0 - lambda_rel) * np.log(phi / p))


def _relevance_matrix(model: LdaModel, lambda_rel: float) -> np.ndarray:
    if not (0.0 <= lambda_rel <= 1.0):
        raise ValueError("lambda_rel must be in [0, 1]")
    if np.any(model.phi <= 0) or np.any(model.marginal_word_prob <= 0):
        raise ValueError("relevance requires strictly positive phi and marginals")
    log_phi = np.log(model.phi)
    lift = log_phi - np.log(model.marginal_word_prob)[None, :]
    return lambda_rel * log_phi + (1.0 - lambda_rel) * lift


def build_relevance_list(model: LdaModel, lambda_rel: float, n_per_topic: int) -> TopicWordList:
    """Per topic, the n_per_topic words of highest relevance (descending,
    ties by ascending word id); the masking set is their union.
    """
    n_words = model.phi.shape[1]
    if n_per_topic > n_words:
        raise ValueError("n_per_topic exceeds the vocabulary size")
    r = _relevance_matrix(model, lambda_rel)
    per_topic = []
    for k in range(model.n_topics):
        order = np.lexsort((np.arange(n_words), -r[k]))
        per_topic.append(tuple(int(w) for w in order[:n_per_topic]))
    return TopicWordList(
        words=frozenset(w for lst in per_topic for w in lst),
        per_topic=tuple(per_topic),
        method="relevance",
        lambda_rel=float(lambda_rel),
        n_per_topic=int(n_per_topic),
        source_model=model,
    )


def build_tfidf_list(corpus: Corpus, n_total: int) -> TopicWordList:
    """Rank words by mean TF-IDF over all documents; take the n_total best.

    tf is the within-document relative frequency, idf = log(|D| / df), and
    the mean includes zeros for documents a word is absent from.
    """
    n_words = len(corpus.vocab)
    if n_total > n_words:
        raise ValueError("n_total exceeds the vocabulary size")
    n_docs = corpus.n_docs
    idf = np.log(n_docs / corpus.vocab.doc_freq.astype(float))
    tf_sum = np.zeros(n_words)
    for doc in corpus.documents:
        counts = np.bincount(np.asarray(doc.tokens), minlength=n_words)
        tf_sum += counts / len(doc.tokens)
    scores = tf_sum * idf / n_docs
    order = np.lexsort((np.arange(n_words), -scores))
    top = tuple(int(w) for w in order[:n_total])
    return TopicWordList(
        words=frozenset(top),
        per_topic=(top,),
        method="tfidf",
        lambda_rel=None,
        n_per_topic=int(n_total),
    )


def save_topic_word_list(path: str | Path, twl: TopicWordList, corpus: Corpus) -> None:
    """UTF-8 word-list file: a header line with the construction settings,
    then one word per line; relevance lists use one section per topic.
    """
    lam = "none" if twl.lambda_rel is None else repr(twl.lambda_rel)
    lines = [f"# method={twl.method} lambda={lam} n={twl.n_per_topic}"]
    words = corpus.vocab.id_to_word
    if twl.method == "relevance":
        for k, lst in enumerate(twl.per_topic):
            lines.append(f"## topic {k}")
            lines.extend(words[w] for w in lst)
    else:
        lines.extend(words[w] for w in twl.per_topic[0])
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_topic_word_list(path: str | Path, corpus: Corpus) -> TopicWordList:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("# method="):
        raise ValueError(f"not a topic-word-list file: {path}")
    fields = dict(part.split("=", 1) for part in text[0][2:].split())
    method = fields["method"]
    lam = None if fields["lambda"] == "none" else float(fields["lambda"])
    n = None if fields["n"] == "None" else int(fields["n"])
    per_topic: list[list[int]] = [] if method == "relevance" else [[]]
    for line in text[1:]:
        if not line.strip():
            continue
        if line.startswith("## topic"):
            per_topic.append([])
            continue
        wid = corpus.vocab.word_to_id.get(line.strip())
        if wid is None:
            raise ValueError(f"word {line.strip()!r} not in the corpus vocabulary")
        per_topic[-1].append(wid)
    topics = tuple(tuple(lst) for lst in per_topic if lst)
    return TopicWordList(
        words=frozenset(w for lst in topics for w in lst),
        per_topic=topics,
        method=method,
        lambda_rel=lam,
        n_per_topic=n,
    )
