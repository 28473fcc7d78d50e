"""Latent-confound representations.

Two routes to a per-document topic distribution: z-scored log-odds with an
informative Dirichlet prior (one class against the rest of the corpus), and
collapsed-Gibbs LDA as the baseline representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .corpus import MASK_ID, PAD_ID, Document, Vocabulary

# Log-odds scores are clamped here before the sigmoid so that normalization
# over the vocabulary cannot underflow.
SCORE_CLAMP = 20.0

LOG_Q_FLOOR = 1e-12


@dataclass
class LogOddsTable:
    """Z-scored log-odds lo(w, y) for every (vocabulary word, class)."""

    scores: np.ndarray  # [num_classes, vocab_size]
    classes: list[str]
    alpha0: float
    vocab: Vocabulary

    def __post_init__(self):
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("log-odds scores must be finite")
        if self.scores.shape != (len(self.classes), self.vocab.size):
            raise ValueError("scores shape does not match classes x vocabulary")

    def class_index(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise ValueError(f"unknown class {label!r}") from None

    def top_words(self, label: str, k: int) -> list[str]:
        return top_k_words(self, label, k)

    def top_words_union(self, k: int) -> set[str]:
        words: set[str] = set()
        for label in self.classes:
            words.update(top_k_words(self, label, k))
        return words

    def save(self, path: str | Path) -> None:
        """Write tab-separated ``word<TAB>class<TAB>score``, per class by descending score."""
        with open(path, "w", encoding="utf-8") as fh:
            for ci, label in enumerate(self.classes):
                order = _score_order(self, ci)
                for wi in order:
                    fh.write(f"{self.vocab.token_of(wi)}\t{label}\t{self.scores[ci, wi]:.10g}\n")

    @classmethod
    def load(cls, path: str | Path, vocab: Vocabulary, alpha0: float = 10.0) -> "LogOddsTable":
        per_class: dict[str, dict[str, float]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    word, label, score = line.split("\t")
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: expected word<TAB>class<TAB>score") from None
                per_class.setdefault(label, {})[word] = float(score)
        classes = sorted(per_class)
        scores = np.zeros((len(classes), vocab.size))
        for ci, label in enumerate(classes):
            for word, score in per_class[label].items():
                if word not in vocab:
                    raise ValueError(f"table word {word!r} not in vocabulary")
                scores[ci, vocab.id_of(word)] = score
        return cls(scores=scores, classes=classes, alpha0=alpha0, vocab=vocab)


def _score_order(table: LogOddsTable, class_idx: int) -> list[int]:
    # Descending score, ties lexicographic; reserved ids are not words.
    ids = range(3, table.vocab.size)
    return sorted(ids, key=lambda wi: (-table.scores[class_idx, wi], table.vocab.token_of(wi)))


def _count_matrix(train: Sequence[Document], vocab: Vocabulary, classes: list[str]) -> np.ndarray:
    index = {lab: i for i, lab in enumerate(classes)}
    counts = np.zeros((len(classes), vocab.size), dtype=np.float64)
    for doc in train:
        row = index[doc.label]
        ids = np.asarray(vocab.encode(doc.tokens), dtype=np.int64)
        counts[row] += np.bincount(ids, minlength=vocab.size)
    return counts


def compute_log_odds(
    train: Sequence[Document], vocab: Vocabulary, alpha0: float = 10.0
) -> LogOddsTable:
    """Z-scored log-odds of each word for each class versus the rest.

    The Dirichlet pseudo-count of word w is alpha0 scaled by its relative
    background frequency. Words with zero background count (reserved ids)
    score 0.
    """
    if alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    if not train:
        raise ValueError("empty corpus")
    classes = sorted({doc.label for doc in train})
    counts = _count_matrix(train, vocab, classes)

    background = counts.sum(axis=0)
    total = background.sum()
    alpha_w = alpha0 * background / total
    class_totals = counts.sum(axis=1, keepdims=True)

    f_y = counts
    f_rest = background[None, :] - counts
    n_y = class_totals
    n_rest = total - class_totals

    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.log((f_y + alpha_w) / (n_y + alpha0 - f_y - alpha_w)) - np.log(
            (f_rest + alpha_w) / (n_rest + alpha0 - f_rest - alpha_w)
        )
        var = 1.0 / (f_y + alpha_w) + 1.0 / (f_rest + alpha_w)
        scores = delta / np.sqrt(var)
    scores = np.where(background[None, :] > 0, scores, 0.0)
    return LogOddsTable(scores=scores, classes=classes, alpha0=alpha0, vocab=vocab)


def top_k_words(table: LogOddsTable, label: str, k: int) -> list[str]:
    """The k words most associated with ``label``, descending by score."""
    if k < 0:
        raise ValueError("k must be >= 0")
    ci = table.class_index(label)
    order = _score_order(table, ci)
    return [table.vocab.token_of(wi) for wi in order[:k]]


def word_class_distribution(table: LogOddsTable) -> np.ndarray:
    """p(w|y): sigmoid of the clamped scores, normalized over the vocabulary."""
    clamped = np.clip(table.scores, -SCORE_CLAMP, SCORE_CLAMP)
    sig = 1.0 / (1.0 + np.exp(-clamped))
    return sig / sig.sum(axis=1, keepdims=True)


def document_confound_distribution(
    doc_ids: Sequence[int], pwy: np.ndarray, log_prior: np.ndarray | None = None
) -> np.ndarray:
    """Per-document topic distribution under the bag-of-words expansion.

    Computed in log space (a product of per-word probabilities underflows
    for realistic document lengths) with a final softmax over classes.
    PAD and MASK ids carry no evidence and are skipped.
    """
    ids = np.asarray(doc_ids, dtype=np.int64)
    ids = ids[(ids != PAD_ID) & (ids != MASK_ID)]
    if ids.size == 0:
        raise ValueError("no scoreable tokens")
    logits = np.log(pwy[:, ids]).sum(axis=1)
    if log_prior is not None:
        logits = logits + log_prior
    logits -= logits.max()
    probs = np.exp(logits)
    return probs / probs.sum()


def balanced_log_prior(labels: Sequence[str], classes: list[str]) -> np.ndarray | None:
    """Log class prior, or None when the label histogram is balanced within 1%."""
    counts = np.array([sum(1 for lab in labels if lab == c) for c in classes], dtype=np.float64)
    if counts.min() <= 0:
        raise ValueError("every class must appear in the training labels")
    if counts.max() / counts.min() <= 1.01:
        return None
    return np.log(counts / counts.sum())


def log_odds_confounds(
    train: Sequence[Document], vocab: Vocabulary, alpha0: float = 10.0
) -> tuple[LogOddsTable, np.ndarray]:
    """Fit the table on ``train`` and return it with the [N, m] confound matrix."""
    table = compute_log_odds(train, vocab, alpha0)
    pwy = word_class_distribution(table)
    prior = balanced_log_prior([d.label for d in train], table.classes)
    dists = np.stack(
        [document_confound_distribution(vocab.encode(d.tokens), pwy, prior) for d in train]
    )
    return table, dists


def save_confounds(dists: np.ndarray, path: str | Path) -> None:
    """One line per document, K space-separated reals."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in dists:
            fh.write(" ".join(f"{v:.10g}" for v in row) + "\n")


def load_confounds(path: str | Path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split()])
    return np.asarray(rows, dtype=np.float64)


# ---------------------------------------------------------------------------
# LDA baseline (collapsed Gibbs sampling)
# ---------------------------------------------------------------------------


@dataclass
class TopicModelState:
    """Counts and hyperparameters of a fitted LDA topic model."""

    topic_word_counts: np.ndarray  # [K, V]
    doc_topic_counts: np.ndarray  # [N, K]
    alpha: float
    beta: float
    num_topics: int
    seed: int
    vocab_size: int

    @property
    def topic_totals(self) -> np.ndarray:
        return self.topic_word_counts.sum(axis=1)

    def doc_distributions(self) -> np.ndarray:
        """Smoothed topic distributions of the documents seen at fit time."""
        dtc = self.doc_topic_counts.astype(np.float64)
        dtc += self.alpha
        return dtc / dtc.sum(axis=1, keepdims=True)

    def top_topic_words(self, vocab: Vocabulary, topic: int, k: int) -> list[str]:
        order = np.argsort(-self.topic_word_counts[topic])
        return [vocab.token_of(int(wi)) for wi in order[:k]]


@njit(cache=True)
def _gibbs_fit(tokens, doc_offsets, num_topics, vocab_size, alpha, beta, iterations, seed):
    np.random.seed(seed)
    n_tokens = tokens.shape[0]
    n_docs = doc_offsets.shape[0] - 1
    assignments = np.empty(n_tokens, dtype=np.int64)
    doc_topic = np.zeros((n_docs, num_topics), dtype=np.int64)
    topic_word = np.zeros((num_topics, vocab_size), dtype=np.int64)
    topic_totals = np.zeros(num_topics, dtype=np.int64)

    for d in range(n_docs):
        for i in range(doc_offsets[d], doc_offsets[d + 1]):
            k = int(np.random.random() * num_topics)
            if k == num_topics:
                k -= 1
            assignments[i] = k
            doc_topic[d, k] += 1
            topic_word[k, tokens[i]] += 1
            topic_totals[k] += 1

    probs = np.empty(num_topics, dtype=np.float64)
    v_beta = vocab_size * beta
    for _ in range(iterations):
        for d in range(n_docs):
            for i in range(doc_offsets[d], doc_offsets[d + 1]):
                w = tokens[i]
                k = assignments[i]
                doc_topic[d, k] -= 1
                topic_word[k, w] -= 1
                topic_totals[k] -= 1
                total = 0.0
                for t in range(num_topics):
                    p = (doc_topic[d, t] + alpha) * (topic_word[t, w] + beta) / (
                        topic_totals[t] + v_beta
                    )
                    total += p
                    probs[t] = total
                u = np.random.random() * total
                k = 0
                while k < num_topics - 1 and probs[k] < u:
                    k += 1
                assignments[i] = k
                doc_topic[d, k] += 1
                topic_word[k, w] += 1
                topic_totals[k] += 1
    return assignments, doc_topic, topic_word


@njit(cache=True)
def _gibbs_fold_in(tokens, topic_word, topic_totals, num_topics, vocab_size, alpha, beta, iterations, seed):
    # Topic-word counts stay frozen; only the new document's counts move.
    np.random.seed(seed)
    n_tokens = tokens.shape[0]
    assignments = np.empty(n_tokens, dtype=np.int64)
    doc_topic = np.zeros(num_topics, dtype=np.int64)
    for i in range(n_tokens):
        k = int(np.random.random() * num_topics)
        if k == num_topics:
            k -= 1
        assignments[i] = k
        doc_topic[k] += 1

    probs = np.empty(num_topics, dtype=np.float64)
    v_beta = vocab_size * beta
    for _ in range(iterations):
        for i in range(n_tokens):
            w = tokens[i]
            k = assignments[i]
            doc_topic[k] -= 1
            total = 0.0
            for t in range(num_topics):
                p = (doc_topic[t] + alpha) * (topic_word[t, w] + beta) / (topic_totals[t] + v_beta)
                total += p
                probs[t] = total
            u = np.random.random() * total
            k = 0
            while k < num_topics - 1 and probs[k] < u:
                k += 1
            assignments[i] = k
            doc_topic[k] += 1
    return doc_topic


def fit_lda(
    train: Sequence[Document],
    vocab: Vocabulary,
    num_topics: int = 50,
    iterations: int = 1000,
    seed: int = 0,
    alpha: float | None = None,
    beta: float = 0.01,
) -> TopicModelState:
    """Collapsed Gibbs sampling over token-topic assignments; deterministic given seed."""
    if num_topics < 2:
        raise ValueError("num_topics must be >= 2")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not train:
        raise ValueError("empty corpus")
    if alpha is None:
        alpha = 50.0 / num_topics

    encoded = [vocab.encode(doc.tokens) for doc in train]
    tokens = np.asarray([w for ids in encoded for w in ids], dtype=np.int64)
    offsets = np.zeros(len(encoded) + 1, dtype=np.int64)
    np.cumsum([len(ids) for ids in encoded], out=offsets[1:])

    _, doc_topic, topic_word = _gibbs_fit(
        tokens, offsets, num_topics, vocab.size, float(alpha), float(beta), int(iterations), seed
    )
    return TopicModelState(
        topic_word_counts=topic_word,
        doc_topic_counts=doc_topic,
        alpha=float(alpha),
        beta=float(beta),
        num_topics=num_topics,
        seed=seed,
        vocab_size=vocab.size,
    )


def lda_document_distribution(
    state: TopicModelState, doc_ids: Sequence[int], iterations: int = 50
) -> np.ndarray:
    """Fold-in inference for a new document, smoothed by alpha."""
    ids = np.asarray(doc_ids, dtype=np.int64)
    ids = ids[ids != PAD_ID]
    if ids.size == 0:
        raise ValueError("no scoreable tokens")
    doc_topic = _gibbs_fold_in(
        ids,
        state.topic_word_counts,
        state.topic_totals,
        state.num_topics,
        state.vocab_size,
        state.alpha,
        state.beta,
        int(iterations),
        state.seed + 1,
    )
    dist = doc_topic.astype(np.float64) + state.alpha
    return dist / dist.sum()


def lda_confounds(
    train: Sequence[Document],
    vocab: Vocabulary,
    num_topics: int = 50,
    iterations: int = 1000,
    seed: int = 0,
) -> tuple[TopicModelState, np.ndarray]:
    """Fit LDA on ``train`` and return the state with the [N, K] confound matrix."""
    state = fit_lda(train, vocab, num_topics=num_topics, iterations=iterations, seed=seed)
    return state, state.doc_distributions()
