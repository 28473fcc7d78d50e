"""Corpus handling: tokenization, vocabulary, splits, masking, synthetic data.

Documents are line-delimited JSON records with fields ``text`` (required),
``label`` (required), ``domain`` ("in"|"out", default "in"), ``prompt``
(optional) and ``pos`` (optional list aligned with the tokenized text).
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD_ID = 0
UNK_ID = 1
MASK_ID = 2
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"
RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN)

DOMAINS = ("in", "out")

# Chunks that look like URLs stay whole; everything else is split into
# number runs, word runs (apostrophes kept for clitic handling) or single
# punctuation characters.
_URL_RE = re.compile(r"^(?:https?://|www\.)\S+$")
_TOKEN_RE = re.compile(r"\d+(?:[.,:]\d+)*|[a-z0-9]+(?:'[a-z0-9]+)*|'[a-z0-9]+|\S")

# Checked in order; "n't" must win over "'t".
_CLITICS = ("n't", "'t", "'s", "'re", "'ve", "'ll", "'d", "'m")


def _split_clitics(token: str) -> list[str]:
    parts: list[str] = []
    while True:
        for clitic in _CLITICS:
            if token.endswith(clitic) and len(token) > len(clitic):
                parts.append(clitic)
                token = token[: -len(clitic)]
                break
        else:
            break
    parts.append(token)
    parts.reverse()
    return parts


def tokenize(raw_text: str) -> list[str]:
    """Lowercase and split text into tokens.

    Punctuation is detached from words, common English clitics (n't, 's,
    're, ...) become standalone tokens, and URLs and numerals stay whole.
    Reserved sentinel tokens (``<mask>`` etc.) pass through unchanged so
    masked corpora survive a save/load round trip.
    """
    tokens: list[str] = []
    for chunk in raw_text.lower().split():
        if chunk in RESERVED_TOKENS or _URL_RE.match(chunk):
            tokens.append(chunk)
            continue
        for piece in _TOKEN_RE.findall(chunk):
            if "'" in piece:
                tokens.extend(_split_clitics(piece))
            else:
                tokens.append(piece)
    return tokens


@dataclass
class Document:
    """A tokenized document with its class label and domain tag."""

    tokens: list[str]
    label: str
    domain: str = "in"
    prompt: str | None = None
    pos: list[str] | None = None

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("document has no tokens")
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if self.pos is not None and len(self.pos) != len(self.tokens):
            raise ValueError(
                f"pos tags ({len(self.pos)}) do not align with tokens ({len(self.tokens)})"
            )

    def __len__(self) -> int:
        return len(self.tokens)


class Vocabulary:
    """Bidirectional token<->id map with reserved PAD/UNK/MASK ids 0..2."""

    def __init__(self, tokens: Sequence[str]):
        self._tokens = list(RESERVED_TOKENS) + list(tokens)
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def size(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        """Map a token to its id, UNK for out-of-vocabulary tokens."""
        return self._ids.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        return self._tokens[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self._ids.get(tok, UNK_ID) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._tokens[i] for i in ids]

    def save(self, path: str | Path) -> None:
        # One token per line; reserved ids are implicit (line number = id - 3).
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self._tokens[3:]:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(tokens)


def build_vocabulary(corpus: Sequence[Document], max_size: int = 30000) -> Vocabulary:
    """Keep the ``max_size`` most frequent tokens; ties break lexicographically."""
    if not corpus:
        raise ValueError("empty corpus")
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    counts = Counter()
    for doc in corpus:
        counts.update(doc.tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([tok for tok, _ in ranked[:max_size]])


@dataclass
class SplitSpec:
    """Parameters for the filtered, stratified corpus split."""

    seed: int = 0
    dev_fraction: float = 0.1
    test_fraction: float = 0.1
    min_tokens: int = 50

    def __post_init__(self):
        if not 0 < self.dev_fraction < 1 or not 0 < self.test_fraction < 1:
            raise ValueError("fractions must lie in (0, 1)")
        if self.dev_fraction + self.test_fraction >= 1:
            raise ValueError("dev_fraction + test_fraction must be < 1")
        if self.min_tokens < 0:
            raise ValueError("min_tokens must be >= 0")


def split_corpus(
    corpus: Sequence[Document], spec: SplitSpec
) -> tuple[list[Document], list[Document], list[Document], list[Document]]:
    """Split into (train, dev, test_in, test_out).

    Documents shorter than ``spec.min_tokens`` are dropped, domain="out"
    documents all go to test_out, and the in-domain splits are balanced by
    downsampling every class to the smallest per-class count. Deterministic
    for a fixed seed.
    """
    labels = sorted({doc.label for doc in corpus})
    kept = [doc for doc in corpus if len(doc.tokens) >= spec.min_tokens]
    by_label: dict[str, list[Document]] = {lab: [] for lab in labels}
    test_out: list[Document] = []
    for doc in kept:
        if doc.domain == "out":
            test_out.append(doc)
        else:
            by_label[doc.label].append(doc)

    for lab in labels:
        if not by_label[lab] and not any(d.label == lab for d in test_out):
            raise ValueError(f"class {lab!r} empty after filtering")
        if not by_label[lab]:
            raise ValueError(f"class {lab!r} has no in-domain documents after filtering")

    n_per_class = min(len(docs) for docs in by_label.values())
    n_dev = int(n_per_class * spec.dev_fraction)
    n_test = int(n_per_class * spec.test_fraction)
    n_train = n_per_class - n_dev - n_test
    if n_train < 1:
        raise ValueError("not enough documents per class for the requested fractions")

    rng = random.Random(spec.seed)
    train: list[Document] = []
    dev: list[Document] = []
    test_in: list[Document] = []
    for lab in labels:
        docs = list(by_label[lab])
        rng.shuffle(docs)
        docs = docs[:n_per_class]
        dev.extend(docs[:n_dev])
        test_in.extend(docs[n_dev : n_dev + n_test])
        train.extend(docs[n_dev + n_test :])
    return train, dev, test_in, test_out


@dataclass
class SynthSpec:
    """Generator settings for the synthetic confounded corpus.

    Each class gets a disjoint set of style words (valid signal in both
    domains) and a disjoint set of topic words (spurious signal, present
    in-domain only when ``topic_strength_out`` is 0). Style words are spread
    over a large set so each one is rare, while topic words are few and
    frequent: a classifier chasing the easiest signal will pick up topics.
    """

    num_classes: int = 4
    style_words_per_class: int = 250
    topic_words_per_class: int = 10
    filler_vocab_size: int = 1000
    doc_length: tuple[int, int] = (60, 120)
    style_strength: float = 0.15
    topic_strength_in: float = 0.15
    topic_strength_out: float = 0.0
    docs_per_class_per_domain: int = 500
    seed: int = 13

    def __post_init__(self):
        for name in ("style_strength", "topic_strength_in", "topic_strength_out"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.topic_strength_out >= self.topic_strength_in:
            raise ValueError("topic_strength_out must be < topic_strength_in")
        if self.style_strength + self.topic_strength_in > 1.0:
            raise ValueError("style_strength + topic_strength_in must be <= 1")
        lo, hi = self.doc_length
        if not 1 <= lo <= hi:
            raise ValueError("doc_length must satisfy 1 <= min <= max")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.filler_vocab_size == 0 and self.style_strength + self.topic_strength_in < 1.0:
            raise ValueError("filler_vocab_size=0 requires strengths summing to 1")

    @property
    def labels(self) -> list[str]:
        return [f"class{i}" for i in range(self.num_classes)]

    def style_words(self, class_idx: int) -> list[str]:
        return [f"style{class_idx}w{j}" for j in range(self.style_words_per_class)]

    def topic_words(self, class_idx: int) -> list[str]:
        return [f"topic{class_idx}w{j}" for j in range(self.topic_words_per_class)]

    @property
    def all_topic_words(self) -> set[str]:
        return {w for c in range(self.num_classes) for w in self.topic_words(c)}

    @property
    def all_style_words(self) -> set[str]:
        return {w for c in range(self.num_classes) for w in self.style_words(c)}


def generate_synthetic(spec: SynthSpec) -> list[Document]:
    """Generate the synthetic confounded corpus; deterministic given seed."""
    rng = random.Random(spec.seed)
    filler = [f"filler{j}" for j in range(spec.filler_vocab_size)]
    docs: list[Document] = []
    for domain in DOMAINS:
        topic_strength = spec.topic_strength_in if domain == "in" else spec.topic_strength_out
        for c, label in enumerate(spec.labels):
            style = spec.style_words(c)
            topic = spec.topic_words(c)
            for _ in range(spec.docs_per_class_per_domain):
                length = rng.randint(*spec.doc_length)
                tokens = []
                for _ in range(length):
                    u = rng.random()
                    if u < spec.style_strength:
                        tokens.append(rng.choice(style))
                    elif u < spec.style_strength + topic_strength:
                        tokens.append(rng.choice(topic))
                    else:
                        tokens.append(rng.choice(filler))
                docs.append(Document(tokens=tokens, label=label, domain=domain))
    return docs


def mask_tokens(doc: Document, words: set[str]) -> Document:
    """Return a copy of ``doc`` with every token in ``words`` replaced by MASK."""
    tokens = [MASK_TOKEN if tok in words else tok for tok in doc.tokens]
    return Document(
        tokens=tokens,
        label=doc.label,
        domain=doc.domain,
        prompt=doc.prompt,
        pos=list(doc.pos) if doc.pos is not None else None,
    )


def mask_top_k(doc: Document, table, k: int) -> Document:
    """Mask the union over classes of the top-k log-odds words of ``table``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return mask_tokens(doc, set())
    return mask_tokens(doc, table.top_words_union(k))


def load_corpus(path: str | Path, known_labels: Sequence[str] | None = None) -> list[Document]:
    """Load a line-delimited JSON corpus; documents keep their input order."""
    labels = set(known_labels) if known_labels is not None else None
    docs: list[Document] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON record: {exc}") from exc
            if "text" not in record or "label" not in record:
                raise ValueError(f"{path}:{lineno}: record must contain 'text' and 'label'")
            label = str(record["label"])
            if labels is not None and label not in labels:
                raise ValueError(f"{path}:{lineno}: unknown label {label!r}")
            tokens = tokenize(record["text"])
            if not tokens:
                raise ValueError(f"{path}:{lineno}: document is empty after tokenization")
            try:
                docs.append(
                    Document(
                        tokens=tokens,
                        label=label,
                        domain=record.get("domain", "in"),
                        prompt=record.get("prompt"),
                        pos=record.get("pos"),
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return docs


def save_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            record: dict = {"text": " ".join(doc.tokens), "label": doc.label, "domain": doc.domain}
            if doc.prompt is not None:
                record["prompt"] = doc.prompt
            if doc.pos is not None:
                record["pos"] = list(doc.pos)
            fh.write(json.dumps(record) + "\n")
