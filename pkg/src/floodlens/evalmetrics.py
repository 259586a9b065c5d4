"""Binary classification metrics and the comparison report.

ROCAUC is the Mann-Whitney statistic: the probability that a random positive
is scored above a random negative, ties counting one half. Predictions for
accuracy, F1 and balanced accuracy are 0/1 vectors (scores thresholded at
0.5 by the caller).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

THRESHOLD = 0.5
REPORT_COLUMNS = ("model", "horizon", "feature_count", "rocauc", "accuracy", "f1", "balanced_accuracy", "n_test")
MODEL_ORDER = ("baseline", "statistical", "pretrained_avg", "finetuned_avg", "transfer_head")


class UndefinedMetricError(ValueError):
    """Metric needs both classes present (or non-empty input)."""


class ReportError(ValueError):
    pass


def _binary(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.size and not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return y.astype(int)


def _pair(pred, labels) -> tuple[np.ndarray, np.ndarray]:
    p, y = _binary(pred), _binary(labels)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch {p.shape} vs {y.shape}")
    if p.size == 0:
        raise UndefinedMetricError("empty input")
    return p, y


def rocauc(scores, labels) -> float:
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    if s.shape != y.shape:
        raise ValueError(f"length mismatch {s.shape} vs {y.shape}")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROCAUC needs both classes")
    ranks = rankdata(s)  # average ranks give ties half credit
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(pred, labels) -> float:
    p, y = _pair(pred, labels)
    return float(np.mean(p == y))


def f1(pred, labels) -> float:
    p, y = _pair(pred, labels)
    tp = int(np.sum((p == 1) & (y == 1)))
    denom = int(p.sum()) + int(y.sum())
    return 2.0 * tp / denom if denom else 0.0


def balanced_accuracy(pred, labels) -> float:
    p, y = _pair(pred, labels)
    pos, neg = y == 1, y == 0
    if not pos.any() or not neg.any():
        raise UndefinedMetricError("balanced accuracy needs both classes")
    tpr = np.mean(p[pos] == 1)
    tnr = np.mean(p[neg] == 0)
    return float((tpr + tnr) / 2.0)


def confusion(pred, labels) -> tuple[int, int, int, int]:
    """(tn, fp, fn, tp)."""
    p, y = _pair(pred, labels)
    return (
        int(np.sum((p == 0) & (y == 0))),
        int(np.sum((p == 1) & (y == 0))),
        int(np.sum((p == 0) & (y == 1))),
        int(np.sum((p == 1) & (y == 1))),
    )


@dataclass(frozen=True)
class Run:
    model: str
    horizon: int
    scores: np.ndarray
    labels: np.ndarray
    feature_count: int
    example_ids: tuple | None = None  # to check label consistency across models


@dataclass(frozen=True)
class ReportRow:
    model: str
    horizon: int
    feature_count: int
    rocauc: float
    accuracy: float
    f1: float
    balanced_accuracy: float
    n_test: int


def _model_key(name: str) -> tuple:
    return (MODEL_ORDER.index(name), "") if name in MODEL_ORDER else (len(MODEL_ORDER), name)


@dataclass
class EvalReport:
    rows: list[ReportRow]

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([
                r.model, r.horizon, r.feature_count,
                f"{r.rocauc:.6f}", f"{r.accuracy:.6f}", f"{r.f1:.6f}", f"{r.balanced_accuracy:.6f}",
                r.n_test,
            ])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_text(self) -> str:
        """Fixed-width table, one block per horizon."""
        lines = []
        header = f"{'model':<16}{'features':>9}{'ROCAUC':>9}{'acc':>8}{'F1':>8}{'bal.acc':>9}{'n_test':>8}"
        for h in sorted({r.horizon for r in self.rows}):
            lines += [f"next {h} year(s)", header, "-" * len(header)]
            for r in (r for r in self.rows if r.horizon == h):
                lines.append(
                    f"{r.model:<16}{r.feature_count:>9d}{r.rocauc:>9.3f}{r.accuracy:>8.3f}"
                    f"{r.f1:>8.3f}{r.balanced_accuracy:>9.3f}{r.n_test:>8d}"
                )
            lines.append("")
        return "\n".join(lines)

    def get(self, model: str, horizon: int) -> ReportRow:
        for r in self.rows:
            if r.model == model and r.horizon == horizon:
                return r
        raise KeyError((model, horizon))


def build_report(runs: Iterable[Run], threshold: float = THRESHOLD) -> EvalReport:
    """Score every run; rows ordered by horizon, then model.

    The baseline's ROCAUC uses its 0/1 predictions as scores.
    """
    runs = list(runs)
    if not runs:
        raise ReportError("no runs to report")
    reference: dict[int, tuple] = {}
    rows = []
    for run in runs:
        labels = _binary(run.labels)
        key = (tuple(labels.tolist()), run.example_ids)
        if run.horizon in reference and reference[run.horizon] != key:
            raise ReportError(f"label vectors differ between models at horizon {run.horizon}")
        reference.setdefault(run.horizon, key)
        scores = np.asarray(run.scores, dtype=np.float64)
        pred = (scores >= threshold).astype(int)
        rows.append(
            ReportRow(
                run.model, run.horizon, int(run.feature_count),
                rocauc(scores, labels), accuracy(pred, labels), f1(pred, labels),
                balanced_accuracy(pred, labels), int(labels.size),
            )
        )
    rows.sort(key=lambda r: (r.horizon, _model_key(r.model)))
    return EvalReport(rows)


def plot_roc(scores: Sequence[float], labels: Sequence[int], path: str | Path, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    s = np.asarray(scores, dtype=float)
    y = _binary(labels)
    thresholds = np.r_[np.inf, np.unique(s)[::-1]]
    tpr = [np.mean(s[y == 1] >= t) for t in thresholds]
    fpr = [np.mean(s[y == 0] >= t) for t in thresholds]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(fpr, tpr, drawstyle="steps-post")
    ax.plot([0, 1], [0, 1], ls=":", c="grey")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title or f"ROCAUC {rocauc(s, y):.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=80)
    plt.close(fig)
