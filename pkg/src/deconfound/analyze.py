"""Interpretability lexicons: words ranked by mean attention weight or by
mean input-gradient saliency across a test set."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import MASK_TOKEN, PAD_TOKEN, Document
from .model import saliency_map
from .training import TrainState, iter_attention

_EXCLUDED = {PAD_TOKEN, MASK_TOKEN}


@dataclass
class LexiconReport:
    entries: list[tuple[str, float, int]]  # (word, mean score, occurrence count)
    method: str
    top_k: int
    min_count: int

    def to_tsv(self) -> str:
        lines = [
            f"{rank}\t{word}\t{mean:.8g}\t{count}"
            for rank, (word, mean, count) in enumerate(self.entries, start=1)
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")

    @property
    def words(self) -> list[str]:
        return [word for word, _, _ in self.entries]


def _build_report(
    sums: dict[str, float], counts: dict[str, int], method: str, top_k: int, min_count: int
) -> LexiconReport:
    entries = [
        (word, sums[word] / counts[word], counts[word])
        for word in sums
        if counts[word] >= min_count
    ]
    entries.sort(key=lambda e: (-e[1], e[0]))
    return LexiconReport(entries=entries[:top_k], method=method, top_k=top_k, min_count=min_count)


def _accumulate(sums, counts, tokens: Sequence[str], scores: np.ndarray) -> None:
    for token, score in zip(tokens, scores):
        if token in _EXCLUDED:
            continue
        sums[token] += float(score)
        counts[token] += 1


def attention_lexicon(
    state: TrainState, docs: Sequence[Document], top_k: int = 20, min_count: int = 10
) -> LexiconReport:
    """Mean attention weight per word type over ``docs``, highest first."""
    if not docs:
        raise ValueError("empty test set")
    sums: dict[str, float] = defaultdict(float)
    counts: dict[str, int] = defaultdict(int)
    for doc, weights in iter_attention(state, docs):
        _accumulate(sums, counts, doc.tokens[: len(weights)], weights)
    return _build_report(sums, counts, "attention", top_k, min_count)


def saliency_lexicon(
    state: TrainState, docs: Sequence[Document], top_k: int = 20, min_count: int = 10
) -> LexiconReport:
    """Mean input-gradient saliency per word type over ``docs``, highest first."""
    if not docs:
        raise ValueError("empty test set")
    sums: dict[str, float] = defaultdict(float)
    counts: dict[str, int] = defaultdict(int)
    max_len = state.model_config.max_len
    for doc in docs:
        ids = state.vocab.encode(doc.tokens)[:max_len]
        scores = saliency_map(ids, state.encoder, state.classifier)
        _accumulate(sums, counts, doc.tokens[: len(scores)], scores)
    return _build_report(sums, counts, "saliency", top_k, min_count)
