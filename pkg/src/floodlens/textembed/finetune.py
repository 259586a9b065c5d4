"""Fine-tune the whole encoder as a binary sequence classifier."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from floodlens.textembed.encoder import Encoder

logger = logging.getLogger(__name__)


@dataclass
class FinetuneLog:
    epoch_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)


def _classifier_for(encoder: Encoder, seed: int, dropout: float | None):
    from transformers import AutoModelForSequenceClassification

    config = encoder.model.config.__class__.from_dict(encoder.model.config.to_dict())
    config.num_labels = 1
    if dropout is not None:
        for key in ("dropout", "seq_classif_dropout", "hidden_dropout_prob"):
            if hasattr(config, key):
                setattr(config, key, dropout)
    torch.manual_seed(seed)
    clf = AutoModelForSequenceClassification.from_config(config)
    clf.base_model.load_state_dict(encoder.model.state_dict())
    return clf


def finetune_texts(
    encoder: Encoder,
    train_texts: list[str],
    train_labels,
    val_texts: list[str] = (),
    val_labels=(),
    epochs: int = 3,
    lr: float = 2e-5,
    batch_size: int = 16,
    seed: int = 0,
    dropout: float | None = None,
) -> tuple[Encoder, FinetuneLog]:
    """Train encoder + classification readout with Adam and BCE loss.

    Returns a new :class:`Encoder` holding the fine-tuned backbone (the
    readout is discarded) and the per-epoch log. ``encoder`` is not modified.
    """
    rng_state = torch.random.get_rng_state()
    try:
        clf = _classifier_for(encoder, seed, dropout)
        opt = torch.optim.Adam(clf.parameters(), lr=lr)
        loss_fn = torch.nn.BCEWithLogitsLoss()
        y_train = torch.tensor(np.asarray(train_labels, dtype=np.float32))
        rng = np.random.default_rng(seed)
        log = FinetuneLog()
        n = len(train_texts)
        for epoch in range(epochs):
            clf.train()
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                batch = encoder.tokenize([train_texts[i] for i in idx])
                logits = clf(**batch).logits[:, 0]
                loss = loss_fn(logits, y_train[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
            log.epoch_loss.append(total / max(n, 1))
            if len(val_texts):
                log.val_accuracy.append(_accuracy(clf, encoder, list(val_texts), val_labels, batch_size))
            logger.info("finetune epoch %d loss %.4f", epoch + 1, log.epoch_loss[-1])
    finally:
        torch.random.set_rng_state(rng_state)
    tuned = encoder.clone()
    tuned.model.load_state_dict(clf.base_model.state_dict())
    tuned.model.eval()
    tuned.finetuned = True
    return tuned, log


@torch.no_grad()
def _accuracy(clf, encoder: Encoder, texts: list[str], labels, batch_size: int) -> float:
    clf.eval()
    preds = []
    for start in range(0, len(texts), batch_size):
        logits = clf(**encoder.tokenize(texts[start : start + batch_size])).logits[:, 0]
        preds.append((logits > 0).numpy())
    return float(np.mean(np.concatenate(preds) == np.asarray(labels, dtype=bool)))


def save_finetuned(encoder: Encoder, path: str | Path, meta: dict) -> None:
    path = Path(path)
    torch.save(encoder.model.state_dict(), path)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable))


def load_finetuned(base: Encoder, path: str | Path) -> Encoder:
    tuned = base.clone()
    tuned.model.load_state_dict(torch.load(path, weights_only=True))
    tuned.model.eval()
    tuned.finetuned = True
    return tuned


def _jsonable(obj):
    if isinstance(obj, FinetuneLog):
        return asdict(obj)
    raise TypeError(type(obj))
