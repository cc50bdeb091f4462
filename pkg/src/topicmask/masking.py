"""Masked-example generation under the topic-word or random policy.

The target count is 15% of the tokens (round half up, floor of one).
Under the topic-word policy, occurrences of list words are masked first;
if the document has too few of them, random other positions fill the gap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .corpus import Corpus, Document
from .seeding import derive_seed

MASK_ID = -1  # reserved token id for masked positions; never a word id


@dataclass(frozen=True)
class MaskingPolicy:
    kind: str  # "objective" or "random"
    rate: float = 0.15
    words: frozenset[int] | None = None

    def __post_init__(self):
        if self.kind not in ("objective", "random"):
            raise ValueError(f"unknown masking policy kind: {self.kind!r}")
        if not (0.0 < self.rate < 1.0):
            raise ValueError("rate must be in (0, 1)")
        if self.kind == "objective" and self.words is None:
            raise ValueError("objective policy requires a word set")

    @staticmethod
    def objective(words: Iterable[int], rate: float = 0.15) -> "MaskingPolicy":
        return MaskingPolicy("objective", rate, frozenset(words))

    @staticmethod
    def random(rate: float = 0.15) -> "MaskingPolicy":
        return MaskingPolicy("random", rate)


@dataclass(frozen=True)
class MaskedExample:
    doc_id: str
    tokens: tuple[int, ...]
    positions: tuple[int, ...]
    targets: tuple[int, ...]


def mask_count(rate: float, n_tokens: int) -> int:
    """max(1, round-half-up(rate * n))."""
    return max(1, int(math.floor(rate * n_tokens + 0.5)))


def _select_positions(
    rng: np.random.Generator, priority: list[int], others: list[int], m: int
) -> list[int]:
    # shared selection path: a policy with no priority positions behaves
    # exactly like the random policy under the same seed
    chosen: list[int] = []
    if priority:
        take = min(m, len(priority))
        order = rng.permutation(len(priority))
        chosen.extend(priority[i] for i in order[:take])
    if len(chosen) < m and others:
        order = rng.permutation(len(others))
        chosen.extend(others[i] for i in order[: m - len(chosen)])
    return chosen


def mask_document(doc: Document, policy: MaskingPolicy, seed: int) -> MaskedExample:
    """Mask positions of one document; deterministic given the seed."""
    n = len(doc.tokens)
    if n == 0:
        raise ValueError(f"cannot mask empty document {doc.id!r}")
    m = mask_count(policy.rate, n)
    if policy.kind == "objective":
        priority = [i for i, t in enumerate(doc.tokens) if t in policy.words]
    else:
        priority = []
    prio_set = set(priority)
    others = [i for i in range(n) if i not in prio_set]
    rng = np.random.default_rng(seed)
    positions = sorted(_select_positions(rng, priority, others, m))
    tokens = list(doc.tokens)
    targets = []
    for pos in positions:
        targets.append(tokens[pos])
        tokens[pos] = MASK_ID
    return MaskedExample(doc.id, tuple(tokens), tuple(positions), tuple(targets))


def mask_corpus(
    corpus: Corpus, policy: MaskingPolicy, epochs: int, seed: int
) -> Iterator[MaskedExample]:
    """Stream of masked examples, re-drawn each epoch, in corpus order.

    Per-example seeds are derived from (seed, epoch, doc id), so the stream
    is reproducible and parallelizable without shared state.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    for epoch in range(epochs):
        for doc in corpus.documents:
            yield mask_document(doc, policy, derive_seed(seed, "mask", epoch, doc.id))


def dump_masked(path: str | Path, examples: Iterable[MaskedExample]) -> None:
    """Debugging dump: one JSON object per masked example."""
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(
                json.dumps(
                    {
                        "id": ex.doc_id,
                        "masked_tokens": list(ex.tokens),
                        "positions": list(ex.positions),
                        "targets": list(ex.targets),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
