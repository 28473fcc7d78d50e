"""Differentiable pieces: attention BiLSTM encoder, MLP heads, gradient
reversal, distribution cross-entropy and input-gradient saliency."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .corpus import PAD_ID

LOG_Q_FLOOR = 1e-12
MAX_SEQ_LEN = 512


@dataclass
class ModelConfig:
    vocab_size: int
    num_classes: int
    num_topics: int
    embed_dim: int = 128
    hidden_dim: int = 128
    head_hidden: int = 256
    seed: int = 0
    max_len: int = MAX_SEQ_LEN

    def __post_init__(self):
        for name in ("vocab_size", "num_classes", "num_topics", "embed_dim", "hidden_dim", "head_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def _uniform_(param: torch.Tensor, fan_in: int, generator: torch.Generator) -> None:
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        param.uniform_(-bound, bound, generator=generator)


def init_parameters(module: nn.Module, generator: torch.Generator) -> None:
    """Uniform init in [-r, r] with r = 1/sqrt(fan_in), per parameter."""
    for sub in module.modules():
        if isinstance(sub, nn.Embedding):
            _uniform_(sub.weight, sub.embedding_dim, generator)
            if sub.padding_idx is not None:
                with torch.no_grad():
                    sub.weight[sub.padding_idx].zero_()
        elif isinstance(sub, nn.Linear):
            _uniform_(sub.weight, sub.in_features, generator)
            if sub.bias is not None:
                _uniform_(sub.bias, sub.in_features, generator)
        elif isinstance(sub, nn.LSTM):
            for name, param in sub.named_parameters():
                fan_in = sub.input_size if name.startswith("weight_ih") else sub.hidden_size
                _uniform_(param, fan_in, generator)


class Encoder(nn.Module):
    """Embedding + single-layer BiLSTM + additive attention pooling.

    Padded positions are excluded from the recurrence (packed sequences)
    and get exactly zero attention.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(config.vocab_size, config.embed_dim, padding_idx=PAD_ID)
        self.lstm = nn.LSTM(
            config.embed_dim, config.hidden_dim, batch_first=True, bidirectional=True
        )
        self.attn_proj = nn.Linear(2 * config.hidden_dim, config.hidden_dim)
        self.attn_score = nn.Linear(config.hidden_dim, 1, bias=False)

    @property
    def output_dim(self) -> int:
        return 2 * self.config.hidden_dim

    def forward(
        self, ids: torch.Tensor, lengths: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        return self.forward_embedded(self.embedding(ids), lengths)

    def forward_embedded(
        self, embedded: torch.Tensor, lengths: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Encode pre-embedded input; exposed so saliency can differentiate
        with respect to the embeddings. Returns (pooled [B, 2H], attention [B, L])."""
        if embedded.dim() != 3 or embedded.size(1) == 0:
            raise ValueError("input must be a non-empty [batch, length, embed] tensor")
        if int(lengths.min()) < 1:
            raise ValueError("every document must contain at least one token")
        total_len = embedded.size(1)
        packed = nn.utils.rnn.pack_padded_sequence(
            embedded, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        states, _ = self.lstm(packed)
        states, _ = nn.utils.rnn.pad_packed_sequence(
            states, batch_first=True, total_length=total_len
        )
        scores = self.attn_score(torch.tanh(self.attn_proj(states))).squeeze(-1)
        positions = torch.arange(total_len, device=embedded.device)
        pad_mask = positions[None, :] >= lengths.to(embedded.device)[:, None]
        scores = scores.masked_fill(pad_mask, float("-inf"))
        attention = torch.softmax(scores, dim=1)
        pooled = torch.bmm(attention.unsqueeze(1), states).squeeze(1)
        return pooled, attention


class Head(nn.Module):
    """Two affine layers with tanh in between; softmax output."""

    def __init__(self, in_dim: int, hidden_dim: int, out_dim: int):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, out_dim)

    def logits(self, h: torch.Tensor) -> torch.Tensor:
        if h.size(-1) != self.fc1.in_features:
            raise ValueError(
                f"input dim {h.size(-1)} does not match head input {self.fc1.in_features}"
            )
        return self.fc2(torch.tanh(self.fc1(h)))

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(h), dim=-1)

    def log_probs(self, h: torch.Tensor) -> torch.Tensor:
        return torch.log_softmax(self.logits(h), dim=-1)


class AdversaryPool:
    """Ordered pool of adversary heads, one appended per topic-training phase."""

    def __init__(self, selection_seed: int):
        self.heads: list[Head] = []
        self.selection_seed = selection_seed
        self._rng = random.Random(selection_seed)

    def __len__(self) -> int:
        return len(self.heads)

    def __getitem__(self, idx: int) -> Head:
        return self.heads[idx]

    def add(self, head: Head) -> None:
        self.heads.append(head)

    def sample(self) -> tuple[int, Head]:
        if not self.heads:
            raise ValueError("adversary pool is empty")
        idx = self._rng.randrange(len(self.heads))
        return idx, self.heads[idx]

    @property
    def newest(self) -> Head:
        if not self.heads:
            raise ValueError("adversary pool is empty")
        return self.heads[-1]


class _GradientReversal(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, lam):
        ctx.lam = lam
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return -ctx.lam * grad_output, None


def gradient_reversal(x: torch.Tensor, lam: float) -> torch.Tensor:
    """Identity in the forward pass; multiplies the gradient by -lam in the backward."""
    return _GradientReversal.apply(x, lam)


def _as_tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x, dtype=np.float64))


def cross_entropy_dist(q, t) -> torch.Tensor:
    """CE(q, t) = -sum_k t_k log q_k with q floored at 1e-12.

    Accepts [..., K] batches and reduces over the last axis only.
    """
    q = _as_tensor(q)
    t = _as_tensor(t)
    if q.shape != t.shape:
        raise ValueError(f"shape mismatch: {tuple(q.shape)} vs {tuple(t.shape)}")
    return -(t * torch.log(q.clamp_min(LOG_Q_FLOOR))).sum(dim=-1)


def cross_entropy_labels(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Per-example -log q_y from probability rows."""
    picked = probs.gather(1, labels.view(-1, 1)).squeeze(1)
    return -torch.log(picked.clamp_min(LOG_Q_FLOOR))


def uniform_target(k: int, batch: int = 1, dtype=torch.float32) -> torch.Tensor:
    return torch.full((batch, k), 1.0 / k, dtype=dtype)


def build_model(config: ModelConfig) -> tuple[Encoder, Head]:
    """Encoder plus classifier head, deterministically initialized from the seed."""
    encoder = Encoder(config)
    classifier = Head(encoder.output_dim, config.head_hidden, config.num_classes)
    generator = torch.Generator().manual_seed(config.seed)
    init_parameters(encoder, generator)
    init_parameters(classifier, generator)
    return encoder, classifier


def new_adversary(config: ModelConfig, seed: int) -> Head:
    head = Head(2 * config.hidden_dim, config.head_hidden, config.num_topics)
    init_parameters(head, torch.Generator().manual_seed(seed))
    return head


def saliency_map(doc_ids, encoder: Encoder, head: Head) -> np.ndarray:
    """Simplex of per-token saliency scores for one document.

    Score_i is the L2 norm over embedding dimensions of the gradient of the
    predicted-label probability with respect to token i's embedding.
    """
    ids = [i for i in np.asarray(doc_ids, dtype=np.int64).tolist() if i != PAD_ID]
    if not ids:
        raise ValueError("empty document")
    ids_t = torch.tensor([ids], dtype=torch.long)
    lengths = torch.tensor([len(ids)])
    embedded = encoder.embedding(ids_t).detach().requires_grad_(True)
    pooled, _ = encoder.forward_embedded(embedded, lengths)
    probs = head(pooled)[0]
    predicted = int(probs.detach().numpy().argmax())
    grad = torch.autograd.grad(probs[predicted], embedded)[0][0]
    scores = grad.norm(dim=1).detach().numpy().astype(np.float64)
    total = scores.sum()
    if total <= 0.0:
        return np.full(len(ids), 1.0 / len(ids))
    return scores / total


def param_checksum(module: nn.Module) -> str:
    """SHA-256 over all parameter bytes in named order; detects any drift."""
    digest = hashlib.sha256()
    for name, param in sorted(module.named_parameters()):
        digest.update(name.encode())
        digest.update(param.detach().cpu().numpy().tobytes())
    return digest.hexdigest()
