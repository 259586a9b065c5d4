"""Slow, obviously-correct reference implementations used as test oracles."""


def auc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    credit = 0.0
    for p in pos:
        for q in neg:
            credit += 1.0 if p > q else 0.5 if p == q else 0.0
    return credit / (len(pos) * len(neg))


def counts(pred, labels):
    tp = fp = tn = fn = 0
    for p, y in zip(pred, labels):
        if p == 1 and y == 1:
            tp += 1
        elif p == 1:
            fp += 1
        elif y == 1:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def accuracy(pred, labels):
    tp, fp, tn, fn = counts(pred, labels)
    return (tp + tn) / (tp + fp + tn + fn)


def f1(pred, labels):
    tp, fp, tn, fn = counts(pred, labels)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def balanced_accuracy(pred, labels):
    tp, fp, tn, fn = counts(pred, labels)
    return (tp / (tp + fn) + tn / (tn + fp)) / 2


def flood_label(events, grid, year, n):
    for ev in events:
        if ev.grid == grid and ev.disaster_type.value == "flood" and year < ev.year <= year + n:
            return 1
    return 0
