"""Collapsed Gibbs sampling for a Dirichlet topic model.

Exposes posterior estimates of the topic-word matrix (phi), the doc-topic
matrix (theta), and the corpus marginal word distribution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .corpus import Corpus
from .seeding import rng_for
from .store import load_arrays, save_arrays

PHI_SAMPLE_EVERY = 5  # post-burn-in thinning for the phi/theta averages


@dataclass(eq=False)
class LdaModel:
    """Fitted topic model.

    phi is K x V row-stochastic (topic-word), theta is D x K row-stochastic
    (doc-topic), marginal_word_prob is the empirical corpus word frequency.
    """

    n_topics: int
    alpha: float
    beta_lda: float
    phi: np.ndarray
    theta: np.ndarray
    marginal_word_prob: np.ndarray
    vocab_hash: str = ""


@dataclass(eq=False)
class GibbsState:
    """Sampler bookkeeping: token-topic assignments and count tables."""

    z: np.ndarray
    n_dk: np.ndarray
    n_kw: np.ndarray
    n_k: np.ndarray


@njit(cache=True)
def _gibbs_sweep(doc_ids, word_ids, z, n_dk, n_kw, n_k, alpha, beta, uniforms):
    n_topics = n_k.shape[0]
    v_beta = beta * n_kw.shape[1]
    for i in range(word_ids.shape[0]):
        d = doc_ids[i]
        w = word_ids[i]
        k_old = z[i]
        n_dk[d, k_old] -= 1
        n_kw[k_old, w] -= 1
        n_k[k_old] -= 1

        total = 0.0
        for k in range(n_topics):
            total += (n_dk[d, k] + alpha) * (n_kw[k, w] + beta) / (n_k[k] + v_beta)
        target = uniforms[i] * total
        acc = 0.0
        k_new = n_topics - 1
        for k in range(n_topics):
            acc += (n_dk[d, k] + alpha) * (n_kw[k, w] + beta) / (n_k[k] + v_beta)
            if acc > target:
                k_new = k
                break

        z[i] = k_new
        n_dk[d, k_new] += 1
        n_kw[k_new, w] += 1
        n_k[k_new] += 1


def fit_lda(
    corpus: Corpus,
    n_topics: int,
    alpha: float | None = None,
    beta_lda: float = 0.01,
    sweeps: int = 200,
    burn_in: int = 100,
    seed: int = 0,
) -> LdaModel:
    """Fit by collapsed Gibbs sampling; deterministic given the seed.

    The full conditional for a token is proportional to
    (n_dk + alpha) * (n_kw + beta_lda) / (n_k + V * beta_lda) with the
    token's own assignment excluded. phi and theta are averages of the
    smoothed count ratios over post-burn-in sweeps, thinned by
    PHI_SAMPLE_EVERY.
    """
    if corpus.n_docs == 0:
        raise ValueError("cannot fit a topic model on an empty corpus")
    if n_topics < 2:
        raise ValueError("n_topics must be >= 2")
    if not (sweeps > burn_in >= 0):
        raise ValueError("need sweeps > burn_in >= 0")
    if n_topics > corpus.n_docs:
        warnings.warn(
            f"n_topics={n_topics} exceeds the number of documents ({corpus.n_docs})",
            stacklevel=2,
        )
    if alpha is None:
        alpha = 50.0 / n_topics

    n_docs = corpus.n_docs
    n_words = len(corpus.vocab)
    doc_ids = np.concatenate(
        [np.full(len(d.tokens), i, dtype=np.int32) for i, d in enumerate(corpus.documents)]
    )
    word_ids = np.concatenate(
        [np.asarray(d.tokens, dtype=np.int32) for d in corpus.documents]
    )
    n_tokens = word_ids.shape[0]
    if n_tokens == 0:
        raise ValueError("corpus contains no tokens")

    rng = rng_for(seed, "lda")
    state = GibbsState(
        z=rng.integers(0, n_topics, size=n_tokens).astype(np.int32),
        n_dk=np.zeros((n_docs, n_topics), dtype=np.int64),
        n_kw=np.zeros((n_topics, n_words), dtype=np.int64),
        n_k=np.zeros(n_topics, dtype=np.int64),
    )
    np.add.at(state.n_dk, (doc_ids, state.z), 1)
    np.add.at(state.n_kw, (state.z, word_ids), 1)
    np.add.at(state.n_k, state.z, 1)

    doc_len = state.n_dk.sum(axis=1)
    phi_sum = np.zeros((n_topics, n_words))
    theta_sum = np.zeros((n_docs, n_topics))
    n_samples = 0
    for sweep in range(1, sweeps + 1):
        uniforms = rng.random(n_tokens)
        _gibbs_sweep(
            doc_ids, word_ids, state.z, state.n_dk, state.n_kw, state.n_k,
            float(alpha), float(beta_lda), uniforms,
        )
        if sweep > burn_in and (sweep - burn_in - 1) % PHI_SAMPLE_EVERY == 0:
            phi_sum += (state.n_kw + beta_lda) / (state.n_k + n_words * beta_lda)[:, None]
            theta_sum += (state.n_dk + alpha) / (doc_len + n_topics * alpha)[:, None]
            n_samples += 1

    # marginal over the whole corpus the vocabulary was built from, so words
    # outside the fitted document subset still get positive mass
    counts = corpus.vocab.corpus_freq.astype(float)
    return LdaModel(
        n_topics=n_topics,
        alpha=float(alpha),
        beta_lda=float(beta_lda),
        phi=phi_sum / n_samples,
        theta=theta_sum / n_samples,
        marginal_word_prob=counts / counts.sum(),
        vocab_hash=corpus.vocab.hash(),
    )


def topic_top_words(model: LdaModel, k: int, n: int) -> list[int]:
    """The n highest-probability words of topic k, ties by ascending id."""
    if k >= model.n_topics:
        raise ValueError(f"topic id {k} out of range for K={model.n_topics}")
    if n > model.phi.shape[1]:
        raise ValueError("n exceeds the vocabulary size")
    row = model.phi[k]
    order = np.lexsort((np.arange(row.shape[0]), -row))
    return [int(w) for w in order[:n]]


def log_likelihood(model: LdaModel, corpus: Corpus) -> float:
    """Corpus log-likelihood under the fitted (theta, phi) mixture."""
    total = 0.0
    for d, doc in enumerate(corpus.documents):
        if not doc.tokens:
            continue
        probs = model.theta[d] @ model.phi[:, list(doc.tokens)]
        total += float(np.log(probs).sum())
    return total


def save_model(dirpath: str | Path, model: LdaModel) -> None:
    save_arrays(
        dirpath,
        meta={
            "version": 1,
            "kind": "lda",
            "n_topics": model.n_topics,
            "alpha": model.alpha,
            "beta_lda": model.beta_lda,
            "vocab_hash": model.vocab_hash,
        },
        arrays={"phi": model.phi, "theta": model.theta, "marginal": model.marginal_word_prob},
    )


def load_model(dirpath: str | Path, corpus: Corpus | None = None) -> LdaModel:
    meta, arrays = load_arrays(dirpath)
    if meta.get("kind") != "lda" or meta.get("version") != 1:
        raise ValueError("not a supported topic-model artifact")
    if corpus is not None and meta["vocab_hash"] != corpus.vocab.hash():
        raise ValueError("topic model was fitted against a different vocabulary")
    return LdaModel(
        n_topics=meta["n_topics"],
        alpha=meta["alpha"],
        beta_lda=meta["beta_lda"],
        phi=arrays["phi"],
        theta=arrays["theta"],
        marginal_word_prob=arrays["marginal"],
        vocab_hash=meta["vocab_hash"],
    )
