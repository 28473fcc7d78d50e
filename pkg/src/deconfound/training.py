"""Training schedules: pretraining, alternating adversary growth/forgetting,
gradient-reversal training, and the stylistic logistic-regression baseline."""

from __future__ import annotations

import copy
import math
import random
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import torch
from sklearn.linear_model import LogisticRegression

from .corpus import PAD_ID, Document, Vocabulary, build_vocabulary
from .confounds import lda_confounds, log_odds_confounds
from .model import (
    AdversaryPool,
    Encoder,
    Head,
    ModelConfig,
    build_model,
    cross_entropy_dist,
    gradient_reversal,
    new_adversary,
    uniform_target,
)

MODES = ("noadv", "alt_lo", "alt_lda", "gr_lo", "lr")
CHECKPOINT_FORMAT = "deconfound-checkpoint-v1"


class TrainingDivergedError(RuntimeError):
    """Raised when a loss becomes non-finite during optimization."""


@dataclass
class TrainConfig:
    mode: str = "alt_lo"
    batch_size: int = 32
    learning_rate: float = 1e-3
    adversary_steps: int = 500
    forgetting_steps: int = 500
    outer_iterations: int = 5
    grl_lambda: float = 0.2
    patience: int = 3
    seed: int = 0
    alpha0: float = 10.0
    mask_k: int | None = None
    max_epochs: int = 100
    optimizer: str = "adam"
    lda_topics: int = 50
    lda_iterations: int = 1000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.mode in ("alt_lo", "alt_lda"):
            for name in ("adversary_steps", "forgetting_steps", "outer_iterations"):
                if getattr(self, name) < 1:
                    raise ValueError(f"{name} must be >= 1 for alternating modes")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class Batch:
    ids: torch.Tensor  # [B, L] long, PAD-padded
    lengths: torch.Tensor  # [B] long
    labels: torch.Tensor  # [B] long
    confounds: torch.Tensor | None  # [B, K] float or None
    indices: np.ndarray  # positions into the dataset


class EncodedCorpus:
    """Integer-encoded documents with optional per-document confound targets."""

    def __init__(
        self,
        docs: Sequence[Document],
        vocab: Vocabulary,
        classes: Sequence[str],
        confounds: np.ndarray | None = None,
        max_len: int = 512,
    ):
        index = {lab: i for i, lab in enumerate(classes)}
        unknown = {d.label for d in docs} - set(index)
        if unknown:
            raise ValueError(f"unknown labels {sorted(unknown)}")
        self.docs = list(docs)
        self.ids = [np.asarray(vocab.encode(d.tokens)[:max_len], dtype=np.int64) for d in docs]
        self.labels = np.asarray([index[d.label] for d in docs], dtype=np.int64)
        self.lengths = np.asarray([len(a) for a in self.ids], dtype=np.int64)
        if confounds is not None:
            confounds = np.asarray(confounds, dtype=np.float64)
            if confounds.shape[0] != len(self.docs):
                raise ValueError(
                    f"confound distributions missing: {confounds.shape[0]} rows for "
                    f"{len(self.docs)} documents"
                )
        self.confounds = confounds

    def __len__(self) -> int:
        return len(self.ids)

    def collate(self, idxs: np.ndarray) -> Batch:
        rows = [self.ids[i] for i in idxs]
        max_len = max(len(r) for r in rows)
        padded = np.full((len(rows), max_len), PAD_ID, dtype=np.int64)
        for ri, row in enumerate(rows):
            padded[ri, : len(row)] = row
        conf = None
        if self.confounds is not None:
            conf = torch.tensor(self.confounds[idxs], dtype=torch.float32)
        return Batch(
            ids=torch.from_numpy(padded),
            lengths=torch.tensor([len(r) for r in rows], dtype=torch.long),
            labels=torch.from_numpy(self.labels[idxs]),
            confounds=conf,
            indices=idxs,
        )

    def batches(self, batch_size: int, rng: random.Random | None = None) -> Iterator[Batch]:
        """One epoch of batches. With an rng, documents are bucketed by length
        and the batch order is reshuffled; without one, input order is kept."""
        if rng is None:
            order = np.arange(len(self))
            groups = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
        else:
            order = np.argsort(self.lengths, kind="stable")
            groups = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
            rng.shuffle(groups)
        for group in groups:
            yield self.collate(group)


def _step_stream(dataset: EncodedCorpus, batch_size: int, rng: random.Random) -> Iterator[Batch]:
    while True:
        yield from dataset.batches(batch_size, rng)


@dataclass
class TrainState:
    """Everything the schedule mutates, plus the log of what happened."""

    encoder: Encoder
    classifier: Head
    pool: AdversaryPool
    optimizer: torch.optim.Optimizer
    model_config: ModelConfig
    config: TrainConfig
    classes: list[str]
    vocab: Vocabulary
    phase: str = "pretrain"
    outer_iteration: int = 0
    best_dev_accuracy: float = float("-inf")
    epochs_without_improvement: int = 0
    step: int = 0
    history: list[dict] = field(default_factory=list)
    batch_rng: random.Random = field(default_factory=random.Random)

    def log(self, **record) -> None:
        base = {
            "step": self.step,
            "phase": self.phase,
            "iteration": self.outer_iteration,
            "classification_loss": None,
            "adversary_loss": None,
            "combined_loss": None,
            "dev_accuracy": None,
            "adversary_entropy": None,
        }
        base.update(record)
        self.history.append(base)


def _make_optimizer(params: Iterable, config: TrainConfig) -> torch.optim.Optimizer:
    params = list(params)
    if config.optimizer == "sgd":
        return torch.optim.SGD(params, lr=config.learning_rate)
    return torch.optim.Adam(params, lr=config.learning_rate)


def make_state(
    train: Sequence[Document],
    dev: Sequence[Document],
    config: TrainConfig,
    vocab: Vocabulary,
    num_topics: int,
    model_config: ModelConfig | None = None,
) -> TrainState:
    classes = sorted({d.label for d in train} | {d.label for d in dev})
    if model_config is None:
        model_config = ModelConfig(
            vocab_size=vocab.size,
            num_classes=len(classes),
            num_topics=num_topics,
            seed=config.seed,
        )
    encoder, classifier = build_model(model_config)
    optimizer = _make_optimizer(
        list(encoder.parameters()) + list(classifier.parameters()), config
    )
    return TrainState(
        encoder=encoder,
        classifier=classifier,
        pool=AdversaryPool(selection_seed=config.seed + 101),
        optimizer=optimizer,
        model_config=model_config,
        config=config,
        classes=classes,
        vocab=vocab,
        batch_rng=random.Random(config.seed),
    )


def _check_finite(value: float, state: TrainState, what: str) -> None:
    if not math.isfinite(value):
        raise TrainingDivergedError(
            f"{what} became non-finite at step {state.step} "
            f"(phase={state.phase}, iteration={state.outer_iteration})"
        )


def predict_proba_docs(state: TrainState, docs: Sequence[Document], batch_size: int = 64) -> np.ndarray:
    dataset = EncodedCorpus(docs, state.vocab, state.classes, max_len=state.model_config.max_len)
    out = np.empty((len(dataset), state.model_config.num_classes), dtype=np.float64)
    with torch.no_grad():
        for batch in dataset.batches(batch_size):
            h, _ = state.encoder(batch.ids, batch.lengths)
            out[batch.indices] = state.classifier(h).numpy()
    return out


def predict_docs(state: TrainState, docs: Sequence[Document]) -> np.ndarray:
    # np.argmax returns the first maximum: ties go to the lowest class index.
    return predict_proba_docs(state, docs).argmax(axis=1)


def accuracy(state: TrainState, docs: Sequence[Document]) -> float:
    if not docs:
        raise ValueError("empty evaluation set")
    index = {lab: i for i, lab in enumerate(state.classes)}
    gold = np.asarray([index[d.label] for d in docs])
    return float((predict_docs(state, docs) == gold).mean())


def iter_attention(
    state: TrainState, docs: Sequence[Document], batch_size: int = 64
) -> Iterator[tuple[Document, np.ndarray]]:
    """Yield (document, attention weights) pairs; weights align with the
    (possibly truncated) token sequence the model saw."""
    dataset = EncodedCorpus(docs, state.vocab, state.classes, max_len=state.model_config.max_len)
    with torch.no_grad():
        for batch in dataset.batches(batch_size):
            _, attn = state.encoder(batch.ids, batch.lengths)
            attn = attn.numpy()
            for row, idx in enumerate(batch.indices):
                n = int(batch.lengths[row])
                yield dataset.docs[idx], attn[row, :n].astype(np.float64)


def _classification_loss(state: TrainState, batch: Batch) -> torch.Tensor:
    h, _ = state.encoder(batch.ids, batch.lengths)
    log_q = state.classifier.log_probs(h)
    return -log_q.gather(1, batch.labels.view(-1, 1)).mean()


def _snapshot(modules: Sequence[torch.nn.Module]) -> list[dict]:
    return [copy.deepcopy(m.state_dict()) for m in modules]


def _restore(modules: Sequence[torch.nn.Module], snapshot: list[dict]) -> None:
    for module, params in zip(modules, snapshot):
        module.load_state_dict(params)


def pretrain(
    train: Sequence[Document],
    dev: Sequence[Document],
    config: TrainConfig,
    *,
    vocab: Vocabulary,
    model_config: ModelConfig | None = None,
    num_topics: int | None = None,
) -> TrainState:
    """Minimize classification loss until dev accuracy stops improving for
    ``patience`` consecutive epochs; the best-dev parameters are restored."""
    state = make_state(
        train, dev, config, vocab,
        num_topics=num_topics or len({d.label for d in train}),
        model_config=model_config,
    )
    train_ds = EncodedCorpus(train, vocab, state.classes, max_len=state.model_config.max_len)
    _fit_classifier(state, train_ds, dev, config)
    return state


def _fit_classifier(
    state: TrainState,
    train_ds: EncodedCorpus,
    dev: Sequence[Document],
    config: TrainConfig,
    adversary: Head | None = None,
    adv_lambda: float = 0.0,
) -> None:
    """Shared epoch loop for pretraining (no adversary) and gradient-reversal
    training (adversary term with reversed encoder gradients)."""
    best: list[dict] | None = None
    modules: list[torch.nn.Module] = [state.encoder, state.classifier]
    if adversary is not None:
        modules.append(adversary)
    state.best_dev_accuracy = float("-inf")
    state.epochs_without_improvement = 0
    for _ in range(config.max_epochs):
        for batch in train_ds.batches(config.batch_size, state.batch_rng):
            state.optimizer.zero_grad()
            h, _ = state.encoder(batch.ids, batch.lengths)
            log_q = state.classifier.log_probs(h)
            cls_loss = -log_q.gather(1, batch.labels.view(-1, 1)).mean()
            if adversary is not None:
                adv_q = adversary(gradient_reversal(h, adv_lambda))
                adv_loss = cross_entropy_dist(adv_q, batch.confounds).mean()
                loss = cls_loss + adv_loss
            else:
                adv_loss = None
                loss = cls_loss
            _check_finite(float(loss), state, "training loss")
            loss.backward()
            state.optimizer.step()
            state.step += 1
            state.log(
                classification_loss=float(cls_loss),
                adversary_loss=None if adv_loss is None else float(adv_loss),
                combined_loss=float(loss),
            )
        dev_acc = accuracy(state, dev)
        state.log(dev_accuracy=dev_acc)
        if dev_acc > state.best_dev_accuracy:
            state.best_dev_accuracy = dev_acc
            state.epochs_without_improvement = 0
            best = _snapshot(modules)
        else:
            state.epochs_without_improvement += 1
            if state.epochs_without_improvement >= config.patience:
                break
    if best is not None:
        _restore(modules, best)


def topic_training_phase(
    state: TrainState, train_ds: EncodedCorpus, config: TrainConfig
) -> TrainState:
    """Append a freshly initialized adversary and train it alone to predict
    the confound distributions from the frozen encoder representation."""
    if train_ds.confounds is None:
        raise ValueError("confound distributions required for topic training")
    j = len(state.pool) + 1
    state.phase = "topic_train"
    state.outer_iteration = j
    adversary = new_adversary(state.model_config, seed=config.seed + 1000 + j)
    state.pool.add(adversary)
    adv_optimizer = _make_optimizer(adversary.parameters(), config)
    stream = _step_stream(train_ds, config.batch_size, state.batch_rng)
    for _ in range(config.adversary_steps):
        batch = next(stream)
        with torch.no_grad():
            h, _ = state.encoder(batch.ids, batch.lengths)
        adv_optimizer.zero_grad()
        loss = cross_entropy_dist(adversary(h), batch.confounds).mean()
        _check_finite(float(loss), state, "adversary loss")
        loss.backward()
        adv_optimizer.step()
        state.step += 1
        state.log(adversary_loss=float(loss))
    return state


def topic_forgetting_phase(
    state: TrainState, train_ds: EncodedCorpus, config: TrainConfig
) -> TrainState:
    """Update encoder and classifier to predict labels while driving a
    randomly chosen frozen adversary toward the uniform distribution."""
    if len(state.pool) == 0:
        raise ValueError("adversary pool is empty")
    state.phase = "topic_forget"
    k = state.model_config.num_topics
    stream = _step_stream(train_ds, config.batch_size, state.batch_rng)
    for _ in range(config.forgetting_steps):
        _, adversary = state.pool.sample()
        batch = next(stream)
        state.optimizer.zero_grad()
        h, _ = state.encoder(batch.ids, batch.lengths)
        log_q = state.classifier.log_probs(h)
        cls_loss = -log_q.gather(1, batch.labels.view(-1, 1)).mean()
        target = uniform_target(k, batch.ids.size(0))
        adv_loss = cross_entropy_dist(adversary(h), target).mean()
        loss = cls_loss + adv_loss
        _check_finite(float(loss), state, "combined loss")
        loss.backward()
        state.optimizer.step()
        # gradients flowed *through* the adversary; it must stay untouched
        adversary.zero_grad(set_to_none=True)
        state.step += 1
        state.log(
            classification_loss=float(cls_loss),
            adversary_loss=float(adv_loss),
            combined_loss=float(loss),
        )
    return state


def mean_adversary_entropy(state: TrainState, docs: Sequence[Document], adversary: Head | None = None) -> float:
    """Mean entropy of the adversary's output distribution over ``docs``."""
    adversary = adversary or state.pool.newest
    dataset = EncodedCorpus(docs, state.vocab, state.classes, max_len=state.model_config.max_len)
    total, count = 0.0, 0
    with torch.no_grad():
        for batch in dataset.batches(64):
            h, _ = state.encoder(batch.ids, batch.lengths)
            q = adversary(h)
            ent = -(q * torch.log(q.clamp_min(1e-12))).sum(dim=1)
            total += float(ent.sum())
            count += q.size(0)
    return total / count


def compute_confounds(
    train: Sequence[Document], vocab: Vocabulary, confound_mode: str, config: TrainConfig
) -> tuple[np.ndarray, int]:
    """Confound matrix for the training set and the number of topics K."""
    if confound_mode == "lo":
        _, dists = log_odds_confounds(train, vocab, config.alpha0)
    elif confound_mode == "lda":
        _, dists = lda_confounds(
            train,
            vocab,
            num_topics=config.lda_topics,
            iterations=config.lda_iterations,
            seed=config.seed,
        )
    else:
        raise ValueError(f"confound_mode must be 'lo' or 'lda', got {confound_mode!r}")
    return dists, dists.shape[1]


def run_alternating(
    train: Sequence[Document],
    dev: Sequence[Document],
    confound_mode: str,
    config: TrainConfig,
    *,
    vocab: Vocabulary | None = None,
    model_config: ModelConfig | None = None,
) -> TrainState:
    """Pretrain, then alternate topic training and topic forgetting.

    After each outer iteration the dev accuracy and the newest adversary's
    mean output entropy are recorded; the returned parameters are those of
    the best-dev iteration among iterations whose adversary entropy stays
    above 0.9 * ln K (the model must actually fool its adversary).
    """
    vocab = vocab or build_vocabulary(train)
    confounds, num_topics = compute_confounds(train, vocab, confound_mode, config)
    state = pretrain(train, dev, config, vocab=vocab, model_config=model_config, num_topics=num_topics)
    train_ds = EncodedCorpus(
        train, vocab, state.classes, confounds=confounds, max_len=state.model_config.max_len
    )

    entropy_floor = 0.9 * math.log(num_topics)
    candidates: list[tuple[int, float, float, list[dict]]] = []
    for _ in range(config.outer_iterations):
        topic_training_phase(state, train_ds, config)
        topic_forgetting_phase(state, train_ds, config)
        dev_acc = accuracy(state, dev)
        entropy = mean_adversary_entropy(state, dev)
        state.log(dev_accuracy=dev_acc, adversary_entropy=entropy)
        candidates.append(
            (state.outer_iteration, dev_acc, entropy, _snapshot([state.encoder, state.classifier]))
        )

    qualified = [c for c in candidates if c[2] >= entropy_floor]
    chosen = max(qualified or candidates, key=lambda c: (c[1], -c[0]))
    _restore([state.encoder, state.classifier], chosen[3])
    state.phase = "done"
    state.log(dev_accuracy=chosen[1], adversary_entropy=chosen[2], selected_iteration=chosen[0])
    return state


def train_noadv(
    train: Sequence[Document],
    dev: Sequence[Document],
    config: TrainConfig,
    *,
    vocab: Vocabulary | None = None,
    model_config: ModelConfig | None = None,
) -> TrainState:
    vocab = vocab or build_vocabulary(train)
    state = pretrain(train, dev, config, vocab=vocab, model_config=model_config)
    state.phase = "done"
    return state


def train_grl(
    train: Sequence[Document],
    dev: Sequence[Document],
    config: TrainConfig,
    *,
    vocab: Vocabulary | None = None,
    model_config: ModelConfig | None = None,
    confounds: np.ndarray | None = None,
) -> TrainState:
    """Jointly train classifier and a single adversary whose gradient is
    reversed (scaled by -lambda) before it reaches the encoder."""
    vocab = vocab or build_vocabulary(train)
    if confounds is None:
        confounds, num_topics = compute_confounds(train, vocab, "lo", config)
    else:
        num_topics = confounds.shape[1]
    state = make_state(train, dev, config, vocab, num_topics=num_topics, model_config=model_config)
    adversary = new_adversary(state.model_config, seed=config.seed + 1001)
    state.pool.add(adversary)
    state.optimizer = _make_optimizer(
        list(state.encoder.parameters())
        + list(state.classifier.parameters())
        + list(adversary.parameters()),
        config,
    )
    state.phase = "grl"
    train_ds = EncodedCorpus(
        train, vocab, state.classes, confounds=confounds, max_len=state.model_config.max_len
    )
    _fit_classifier(state, train_ds, dev, config, adversary=adversary, adv_lambda=config.grl_lambda)
    state.phase = "done"
    return state


# ---------------------------------------------------------------------------
# Logistic-regression baseline on stylistic features
# ---------------------------------------------------------------------------

_SENTENCE_DELIMITERS = {".", "!", "?"}


def load_function_words() -> list[str]:
    text = resources.files("deconfound.data").joinpath("function_words.txt").read_text()
    return [w for w in text.split() if w]


class StyleFeaturizer:
    """Relative function-word frequencies, mean sentence length, and (when
    every fitted document carries POS tags) relative POS-trigram frequencies."""

    def __init__(self, function_words: Sequence[str] | None = None):
        self.function_words = list(function_words) if function_words is not None else load_function_words()
        self._fw_index = {w: i for i, w in enumerate(self.function_words)}
        self.pos_trigrams: dict[tuple[str, str, str], int] = {}
        self.use_pos = False

    @staticmethod
    def _trigrams(pos: Sequence[str]) -> Iterator[tuple[str, str, str]]:
        for i in range(len(pos) - 2):
            yield (pos[i], pos[i + 1], pos[i + 2])

    def fit(self, docs: Sequence[Document]) -> "StyleFeaturizer":
        self.use_pos = bool(docs) and all(d.pos is not None for d in docs)
        if self.use_pos:
            seen = sorted({tri for d in docs for tri in self._trigrams(d.pos)})
            self.pos_trigrams = {tri: i for i, tri in enumerate(seen)}
        return self

    @property
    def dim(self) -> int:
        return len(self.function_words) + 1 + (len(self.pos_trigrams) if self.use_pos else 0)

    def transform(self, docs: Sequence[Document]) -> np.ndarray:
        out = np.zeros((len(docs), self.dim), dtype=np.float64)
        n_fw = len(self.function_words)
        for row, doc in enumerate(docs):
            n = len(doc.tokens)
            for tok in doc.tokens:
                fi = self._fw_index.get(tok)
                if fi is not None:
                    out[row, fi] += 1.0
            out[row, :n_fw] /= n
            n_sentences = max(1, sum(1 for t in doc.tokens if t in _SENTENCE_DELIMITERS))
            out[row, n_fw] = n / n_sentences
            if self.use_pos and doc.pos is not None:
                for tri in self._trigrams(doc.pos):
                    ti = self.pos_trigrams.get(tri)
                    if ti is not None:
                        out[row, n_fw + 1 + ti] += 1.0
                total = max(1, len(doc.pos) - 2)
                out[row, n_fw + 1 :] /= total
        return out


@dataclass
class StylisticModel:
    featurizer: StyleFeaturizer
    classifier: LogisticRegression
    classes: list[str]

    def predict(self, docs: Sequence[Document]) -> list[str]:
        preds = self.classifier.predict(self.featurizer.transform(docs))
        return [self.classes[i] for i in preds]

    def accuracy(self, docs: Sequence[Document]) -> float:
        if not docs:
            raise ValueError("empty evaluation set")
        preds = self.predict(docs)
        return float(np.mean([p == d.label for p, d in zip(preds, docs)]))


def train_lr_baseline(
    train: Sequence[Document],
    dev: Sequence[Document] | None = None,
    config: TrainConfig | None = None,
) -> StylisticModel:
    """L2-penalized multinomial logistic regression on stylistic features."""
    if not train:
        raise ValueError("no training documents")
    config = config or TrainConfig(mode="lr")
    classes = sorted({d.label for d in train})
    index = {lab: i for i, lab in enumerate(classes)}
    featurizer = StyleFeaturizer().fit(train)
    X = featurizer.transform(train)
    y = np.asarray([index[d.label] for d in train])
    clf = LogisticRegression(penalty="l2", C=1.0, max_iter=5000, random_state=config.seed)
    clf.fit(X, y)
    return StylisticModel(featurizer=featurizer, classifier=clf, classes=classes)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(state: TrainState, path: str | Path) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_config": asdict(state.model_config),
        "train_config": asdict(state.config),
        "classes": list(state.classes),
        "vocab_tokens": [state.vocab.token_of(i) for i in range(3, state.vocab.size)],
        "encoder": state.encoder.state_dict(),
        "classifier": state.classifier.state_dict(),
        "adversaries": [h.state_dict() for h in state.pool.heads],
        "pool_selection_seed": state.pool.selection_seed,
        "phase": state.phase,
        "outer_iteration": state.outer_iteration,
        "step": state.step,
        "best_dev_accuracy": state.best_dev_accuracy,
        "torch_rng_state": torch.get_rng_state(),
        "history": state.history,
    }
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> TrainState:
    payload = torch.load(path, weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {payload.get('format')!r}")
    model_config = ModelConfig(**payload["model_config"])
    config = TrainConfig(**payload["train_config"])
    vocab = Vocabulary(payload["vocab_tokens"])
    encoder, classifier = build_model(model_config)
    encoder.load_state_dict(payload["encoder"])
    classifier.load_state_dict(payload["classifier"])
    pool = AdversaryPool(selection_seed=payload["pool_selection_seed"])
    for idx, adv_params in enumerate(payload["adversaries"], start=1):
        head = new_adversary(model_config, seed=config.seed + 1000 + idx)
        head.load_state_dict(adv_params)
        pool.add(head)
    state = TrainState(
        encoder=encoder,
        classifier=classifier,
        pool=pool,
        optimizer=_make_optimizer(
            list(encoder.parameters()) + list(classifier.parameters()), config
        ),
        model_config=model_config,
        config=config,
        classes=list(payload["classes"]),
        vocab=vocab,
        phase=payload["phase"],
        outer_iteration=payload["outer_iteration"],
        step=payload["step"],
        best_dev_accuracy=payload["best_dev_accuracy"],
        history=list(payload["history"]),
        batch_rng=random.Random(config.seed),
    )
    return state
