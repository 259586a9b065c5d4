"""Trainable H -> 32 sigmoid projection on top of a frozen encoder.

The backbone never sees a gradient: token states are computed once in
inference mode and the head is fitted on those cached matrices with Adam.
Forward pass for one document with token states ``X`` (T x H)::

    s = sigmoid(X @ W + b)          # T x 32, per token
    p = mean(s over tokens)          # 32, the paragraph embedding
    logit = p @ v + c                # readout, used only for training

With ``sigmoid_placement="post_average"`` the mean is taken before the
sigmoid instead.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

HEAD_DIM = 32


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _bce_with_logit(logit: float, y: float) -> float:
    # log(1 + exp(-|z|)) form avoids overflow
    return float(max(logit, 0.0) - logit * y + np.log1p(np.exp(-abs(logit))))


@dataclass
class TransferHead:
    weight: np.ndarray  # H x 32
    bias: np.ndarray  # 32
    readout_weight: np.ndarray  # 32
    readout_bias: float = 0.0
    sigmoid_placement: str = "per_token"
    train_log: "HeadTrainLog | None" = field(default=None, compare=False)

    @classmethod
    def init(cls, hidden: int, seed: int = 0, dim: int = HEAD_DIM, sigmoid_placement: str = "per_token"):
        """Projection uniform in +-1/sqrt(hidden); readout starts at zero."""
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(hidden)
        return cls(
            weight=rng.uniform(-bound, bound, size=(hidden, dim)),
            bias=rng.uniform(-bound, bound, size=dim),
            readout_weight=np.zeros(dim),
            readout_bias=0.0,
            sigmoid_placement=sigmoid_placement,
        )

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {
            "weight": self.weight,
            "bias": self.bias,
            "readout_weight": self.readout_weight,
            "readout_bias": np.atleast_1d(np.asarray(self.readout_bias, dtype=np.float64)),
        }

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        self.weight = params["weight"]
        self.bias = params["bias"]
        self.readout_weight = params["readout_weight"]
        self.readout_bias = float(np.asarray(params["readout_bias"]).ravel()[0])

    def embed(self, tokens: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        """Paragraph embedding (length 32) of one document's token states."""
        x = np.asarray(tokens, dtype=np.float64)
        if mask is not None:
            x = x[np.asarray(mask, dtype=bool)]
        if x.shape[0] == 0:
            raise ValueError("no unmasked tokens to embed")
        z = x @ self.weight + self.bias
        if self.sigmoid_placement == "per_token":
            return _sigmoid(z).mean(axis=0)
        if self.sigmoid_placement == "post_average":
            return _sigmoid(z.mean(axis=0))
        raise ValueError(f"unknown sigmoid placement {self.sigmoid_placement!r}")

    def loss_and_grad(self, docs: list[np.ndarray], labels: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Mean binary cross-entropy over ``docs`` and its exact gradient."""
        grads = {k: np.zeros_like(v) for k, v in self.params().items()}
        total = 0.0
        n = len(docs)
        for x, y in zip(docs, labels):
            x = np.asarray(x, dtype=np.float64)
            t = x.shape[0]
            z = x @ self.weight + self.bias
            if self.sigmoid_placement == "per_token":
                s = _sigmoid(z)
                p = s.mean(axis=0)
            else:
                zbar = z.mean(axis=0)
                p = _sigmoid(zbar)
            logit = float(p @ self.readout_weight + self.readout_bias)
            total += _bce_with_logit(logit, float(y))
            g = (float(_sigmoid(np.asarray(logit))) - float(y)) / n
            grads["readout_weight"] += g * p
            grads["readout_bias"] += g
            dp = g * self.readout_weight
            if self.sigmoid_placement == "per_token":
                dz = (dp / t) * s * (1.0 - s)  # broadcast over tokens
            else:
                dz = np.broadcast_to(dp * p * (1.0 - p) / t, z.shape)
            grads["weight"] += x.T @ dz
            grads["bias"] += dz.sum(axis=0)
        return total / n, grads

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        path = Path(path)
        np.savez(path, **self.params())
        sidecar = {"sigmoid_placement": self.sigmoid_placement, "dim": self.dim, **(meta or {})}
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "TransferHead":
        path = Path(path)
        with np.load(path) as z:
            params = {k: z[k] for k in z.files}
        meta = json.loads(path.with_suffix(".json").read_text())
        head = cls.init(params["weight"].shape[0], dim=params["weight"].shape[1])
        head.set_params(params)
        head.sigmoid_placement = meta["sigmoid_placement"]
        return head


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.step_count += 1
        out = {}
        for k, p in params.items():
            g = grads[k]
            m = self.m.get(k, np.zeros_like(p)) * self.beta1 + (1 - self.beta1) * g
            v = self.v.get(k, np.zeros_like(p)) * self.beta2 + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            m_hat = m / (1 - self.beta1**self.step_count)
            v_hat = v / (1 - self.beta2**self.step_count)
            out[k] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


@dataclass
class HeadTrainLog:
    epoch_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)


def fit_head(
    head: TransferHead,
    train_docs: list[np.ndarray],
    train_labels: np.ndarray,
    val_docs: list[np.ndarray] = (),
    val_labels: np.ndarray = (),
    epochs: int = 3,
    lr: float = 1e-3,
    batch_size: int = 16,
    seed: int = 0,
) -> HeadTrainLog:
    """Mini-batch Adam on the head parameters. Mutates ``head`` in place."""
    rng = np.random.default_rng(seed)
    opt = Adam(lr=lr)
    log = HeadTrainLog()
    labels = np.asarray(train_labels, dtype=np.float64)
    n = len(train_docs)
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, grads = head.loss_and_grad([train_docs[i] for i in idx], labels[idx])
            losses.append(loss * len(idx))
            head.set_params(opt.step(head.params(), grads))
        log.epoch_loss.append(float(np.sum(losses) / n))
        if len(val_docs):
            log.val_accuracy.append(head_accuracy(head, val_docs, val_labels))
        logger.info("head epoch %d loss %.4f", epoch + 1, log.epoch_loss[-1])
    return log


def head_accuracy(head: TransferHead, docs: list[np.ndarray], labels) -> float:
    preds = [float(head.embed(d) @ head.readout_weight + head.readout_bias > 0) for d in docs]
    return float(np.mean(np.asarray(preds) == np.asarray(labels, dtype=float)))
