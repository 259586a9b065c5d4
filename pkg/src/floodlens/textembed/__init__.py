"""Paragraph embeddings of location geography text.

Three architectures:

``pretrained_avg``
    mean over tokens of the pretrained encoder's second-to-last hidden layer.
``finetuned_avg``
    same pooling after fine-tuning the encoder as a "floodiness" classifier.
``transfer_head``
    frozen encoder, a trained H -> 32 sigmoid projection applied per token,
    then averaged over tokens (32-dim).

The floodiness label of a grid is 1 when it has more than two historical
floods. Classifiers are trained on a seeded 70/30 split of labeled grids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from floodlens.ingest import DisasterType, EventTable
from floodlens.textembed.encoder import (
    Encoder,
    EncoderUnavailable,
    TokenEmbeddingSequence,
    encode_tokens,
    load_encoder,
    mean_pool,
    tiny_encoder,
)
from floodlens.textembed.finetune import FinetuneLog, finetune_texts, load_finetuned, save_finetuned
from floodlens.textembed.head import HEAD_DIM, TransferHead, fit_head

__all__ = [
    "Architecture",
    "EmbeddingVector",
    "Encoder",
    "EncoderUnavailable",
    "FloodinessLabel",
    "TokenEmbeddingSequence",
    "TrainConfig",
    "TransferHead",
    "embed_corpus",
    "embed_grid",
    "encode_tokens",
    "finetune_classifier",
    "label_floodiness",
    "load_embeddings",
    "load_encoder",
    "load_finetuned",
    "mean_pool",
    "save_embeddings",
    "save_finetuned",
    "tiny_encoder",
    "train_transfer_head",
]


class Architecture(str, Enum):
    PRETRAINED_AVG = "pretrained_avg"
    FINETUNED_AVG = "finetuned_avg"
    TRANSFER_HEAD = "transfer_head"


class ConfigurationError(ValueError):
    """Architecture and trained state do not belong together."""


class JoinError(ValueError):
    """Labels and corpus do not cover the same grids."""


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray
    architecture: Architecture

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding contains non-finite entries")


@dataclass(frozen=True)
class FloodinessLabel:
    grid: int
    label: int


@dataclass
class TrainConfig:
    epochs: int = 3
    learning_rate: float | None = None  # None -> 2e-5 fine-tune, 1e-3 head
    batch_size: int = 16
    seed: int = 0
    train_fraction: float = 0.7
    dropout: float | None = None
    sigmoid_placement: str = "per_token"
    extra: dict = field(default_factory=dict)


def label_floodiness(table: EventTable, grids: Iterable[int]) -> list[FloodinessLabel]:
    """1 when a grid has more than two flood events over the whole record."""
    counts: dict[int, int] = {}
    for ev in table.events:
        if ev.disaster_type is DisasterType.FLOOD:
            counts[ev.grid] = counts.get(ev.grid, 0) + 1
    return [FloodinessLabel(g, int(counts.get(g, 0) > 2)) for g in sorted(set(grids))]


def _texts(corpus) -> dict[int, str]:
    return corpus.texts() if hasattr(corpus, "texts") else {int(g): t for g, t in corpus.items()}


def _split(corpus, labels: Iterable[FloodinessLabel], config: TrainConfig):
    texts = _texts(corpus)
    labels = sorted(labels, key=lambda lb: lb.grid)
    missing = [lb.grid for lb in labels if lb.grid not in texts]
    if missing:
        raise JoinError(f"{len(missing)} labeled grids have no corpus entry, e.g. {missing[:5]}")
    if not labels:
        raise JoinError("no labeled grids")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(labels))
    n_train = int(round(config.train_fraction * len(labels)))
    pick = lambda idx: ([texts[labels[i].grid] for i in idx], np.array([labels[i].label for i in idx]))  # noqa: E731
    return pick(order[:n_train]), pick(order[n_train:])


def finetune_classifier(
    encoder: Encoder, corpus, labels: Iterable[FloodinessLabel], config: TrainConfig | None = None
) -> tuple[Encoder, FinetuneLog]:
    config = config or TrainConfig()
    (xtr, ytr), (xva, yva) = _split(corpus, labels, config)
    return finetune_texts(
        encoder,
        xtr,
        ytr,
        xva,
        yva,
        epochs=config.epochs,
        lr=config.learning_rate if config.learning_rate is not None else 2e-5,
        batch_size=config.batch_size,
        seed=config.seed,
        dropout=config.dropout,
    )


def _token_states(encoder: Encoder, texts: list[str], batch_size: int = 16) -> list[np.ndarray]:
    out = []
    for start in range(0, len(texts), batch_size):
        out += [s.matrix for s in encoder.hidden_states(texts[start : start + batch_size])]
    return out


def train_transfer_head(
    encoder: Encoder, corpus, labels: Iterable[FloodinessLabel], config: TrainConfig | None = None
) -> TransferHead:
    """Fit the H -> 32 head on frozen encoder states; the backbone is verified untouched."""
    config = config or TrainConfig()
    (xtr, ytr), (xva, yva) = _split(corpus, labels, config)
    before = encoder.checksum()
    train_states = _token_states(encoder, xtr)
    val_states = _token_states(encoder, xva)
    head = TransferHead.init(encoder.hidden_size, seed=config.seed, sigmoid_placement=config.sigmoid_placement)
    head.train_log = fit_head(
        head,
        train_states,
        ytr,
        val_states,
        yva,
        epochs=config.epochs,
        lr=config.learning_rate if config.learning_rate is not None else 1e-3,
        batch_size=config.batch_size,
        seed=config.seed,
    )
    if encoder.checksum() != before:
        raise RuntimeError("backbone parameters changed while training the transfer head")
    return head


def _check_state(architecture: Architecture, encoder: Encoder, head: TransferHead | None) -> None:
    architecture = Architecture(architecture)
    if architecture is Architecture.TRANSFER_HEAD:
        if head is None:
            raise ConfigurationError("transfer_head needs a trained TransferHead")
        if encoder.finetuned:
            raise ConfigurationError("transfer_head runs on the pretrained (frozen) encoder")
        if head.weight.shape[0] != encoder.hidden_size:
            raise ConfigurationError("head input width does not match encoder hidden size")
    else:
        if head is not None:
            raise ConfigurationError(f"{architecture.value} takes no head")
        if encoder.finetuned != (architecture is Architecture.FINETUNED_AVG):
            raise ConfigurationError(
                f"{architecture.value} needs a {'fine-tuned' if not encoder.finetuned else 'pretrained'} encoder"
            )


def _pool(architecture: Architecture, seq: TokenEmbeddingSequence, head: TransferHead | None) -> np.ndarray:
    if architecture is Architecture.TRANSFER_HEAD:
        return head.embed(seq.matrix, seq.attention_mask)
    return mean_pool(seq)


def embed_grid(
    text, architecture: Architecture | str, encoder: Encoder, head: TransferHead | None = None
) -> EmbeddingVector:
    """Embedding of one LocationText (or plain string)."""
    architecture = Architecture(architecture)
    _check_state(architecture, encoder, head)
    seq = encode_tokens(encoder, getattr(text, "text", text))
    return EmbeddingVector(_pool(architecture, seq, head), architecture)


def embed_corpus(
    corpus,
    architecture: Architecture | str,
    encoder: Encoder,
    head: TransferHead | None = None,
    batch_size: int = 16,
) -> tuple[np.ndarray, np.ndarray]:
    """(grid ids, N x D matrix) for every corpus entry, ordered by grid."""
    architecture = Architecture(architecture)
    _check_state(architecture, encoder, head)
    texts = _texts(corpus)
    grids = np.array(sorted(texts), dtype=np.int64)
    rows = []
    ordered = [texts[g] for g in grids]
    for start in range(0, len(ordered), batch_size):
        for seq in encoder.hidden_states(ordered[start : start + batch_size]):
            rows.append(_pool(architecture, seq, head))
    dim = HEAD_DIM if architecture is Architecture.TRANSFER_HEAD else encoder.hidden_size
    values = np.vstack(rows) if rows else np.empty((0, dim))
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite embeddings produced")
    return grids, values


def save_embeddings(path: str | Path, grids: np.ndarray, values: np.ndarray, header: Mapping) -> None:
    """Store embeddings keyed by grid id; ``header`` is kept as JSON."""
    header = {"dimension": int(values.shape[1]), **header}
    with open(path, "wb") as fh:
        np.savez(fh, grid=np.asarray(grids, dtype=np.int64), values=values, header=np.array(json.dumps(header, sort_keys=True)))


def load_embeddings(path: str | Path) -> tuple[dict[int, np.ndarray], dict]:
    with np.load(path) as z:
        header = json.loads(str(z["header"]))
        return {int(g): v for g, v in zip(z["grid"], z["values"])}, header
