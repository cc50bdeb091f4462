"""Masked-word-prediction embeddings over bag-of-context features.

A deliberately small encoder: the context of a masked position is the mean
of the input embeddings of unmasked tokens within a fixed radius, projected
through an output table to vocabulary logits. Documents embed as the mean
of their token embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import AdamWState, adamw_step, softmax
from .corpus import Corpus, Document
from .masking import MASK_ID, MaskedExample, MaskingPolicy, mask_corpus
from .seeding import derive_seed, rng_for
from .store import load_arrays, save_arrays

INIT_SCALE = 0.01


@dataclass(eq=False)
class Embeddings:
    """Input table E and output projection U, both V x d."""

    E: np.ndarray
    U: np.ndarray
    vocab_hash: str = ""

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    def copy(self) -> "Embeddings":
        return Embeddings(self.E.copy(), self.U.copy(), self.vocab_hash)


def init_embeddings(n_words: int, d: int, seed: int, vocab_hash: str = "") -> Embeddings:
    if n_words < 2:
        raise ValueError("vocabulary must have at least 2 words")
    if d < 2:
        raise ValueError("embedding dimension must be >= 2")
    rng = rng_for(seed, "emb-init")
    return Embeddings(
        E=rng.normal(0.0, INIT_SCALE, size=(n_words, d)),
        U=rng.normal(0.0, INIT_SCALE, size=(n_words, d)),
        vocab_hash=vocab_hash,
    )


def _context_positions(tokens: tuple[int, ...], pos: int, radius: int) -> list[int]:
    lo = max(0, pos - radius)
    hi = min(len(tokens), pos + radius + 1)
    return [i for i in range(lo, hi) if i != pos and tokens[i] != MASK_ID]


def example_loss_grads(
    E: np.ndarray,
    U: np.ndarray,
    example: MaskedExample,
    context: int,
) -> tuple[float, np.ndarray, np.ndarray, int]:
    """Mean cross-entropy over the usable masked positions of one example,
    with exact gradients for E and U.

    A position is usable when it has at least one unmasked context token
    within the radius. Returns (loss, dE, dU, n_used).
    """
    d_e = np.zeros_like(E)
    d_u = np.zeros_like(U)
    loss = 0.0
    used = 0
    for pos, target in zip(example.positions, example.targets):
        ctx = _context_positions(example.tokens, pos, context)
        if not ctx:
            continue
        ids = [example.tokens[i] for i in ctx]
        cvec = E[ids].mean(axis=0)
        probs = softmax(U @ cvec)
        loss += -np.log(probs[target])
        dlogits = probs.copy()
        dlogits[target] -= 1.0
        d_u += np.outer(dlogits, cvec)
        dc = U.T @ dlogits
        for wid in ids:
            d_e[wid] += dc / len(ids)
        used += 1
    if used:
        loss /= used
        d_e /= used
        d_u /= used
    return float(loss), d_e, d_u, used


def example_loss(E: np.ndarray, U: np.ndarray, example: MaskedExample, context: int) -> float:
    loss, _, _, used = example_loss_grads(E, U, example, context)
    if used == 0:
        raise ValueError("no usable masked position in example")
    return loss


def pretrain_mlm(
    corpus: Corpus,
    policy: MaskingPolicy,
    d: int = 16,
    context: int = 5,
    epochs: int = 1,
    lr: float = 1e-3,
    seed: int = 0,
) -> Embeddings:
    """Train the embedding tables on masked-word prediction.

    One AdamW step per masked example (no weight decay on the tables);
    deterministic given the seed.
    """
    if context < 1:
        raise ValueError("context radius must be >= 1")
    emb = init_embeddings(len(corpus.vocab), d, seed, corpus.vocab.hash())
    params = {"E": emb.E, "U": emb.U}
    state = AdamWState.init(params, weight_decay=0.0)
    for example in mask_corpus(corpus, policy, epochs, derive_seed(seed, "mlm")):
        _, d_e, d_u, used = example_loss_grads(emb.E, emb.U, example, context)
        if used == 0:
            continue
        adamw_step(params, {"E": d_e, "U": d_u}, state, lr)
    return emb


def embed_document(doc: Document, emb: Embeddings) -> np.ndarray:
    """Mean of the document tokens' input-embedding rows."""
    if not doc.tokens:
        raise ValueError(f"cannot embed empty document {doc.id!r}")
    return emb.E[list(doc.tokens)].mean(axis=0)


def embed_batch(docs, emb: Embeddings) -> np.ndarray:
    return np.stack([embed_document(d, emb) for d in docs])


def save_embeddings(dirpath: str | Path, emb: Embeddings) -> None:
    save_arrays(
        dirpath,
        meta={
            "version": 1,
            "kind": "embeddings",
            "n_words": int(emb.E.shape[0]),
            "dim": int(emb.E.shape[1]),
            "vocab_hash": emb.vocab_hash,
        },
        arrays={"E": emb.E, "U": emb.U},
    )


def load_embeddings(dirpath: str | Path, corpus: Corpus | None = None) -> Embeddings:
    meta, arrays = load_arrays(dirpath)
    if meta.get("kind") != "embeddings" or meta.get("version") != 1:
        raise ValueError("not a supported embeddings artifact")
    if corpus is not None and meta["vocab_hash"] != corpus.vocab.hash():
        raise ValueError("embeddings were trained against a different vocabulary")
    return Embeddings(arrays["E"], arrays["U"], meta["vocab_hash"])
