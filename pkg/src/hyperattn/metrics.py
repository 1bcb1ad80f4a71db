"""Task metrics: ranking scores, from-scratch logistic classification with
micro/macro F1, outsider top-k accuracy, and a 2-d projection for plots.

Ranking metrics are implemented in closed rank-statistic form and are
checked in the tests against brute-force pairwise and threshold-sweep
oracles.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def _as_score_arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError(f"scores {s.shape} and labels {y.shape} must be "
                        "equal-length vectors")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be 0/1")
    return s, y.astype(np.int64)


def _average_ranks(s: np.ndarray) -> np.ndarray:
    """1-based ranks, ties sharing the average of their positions."""
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """Probability a positive outscores a negative; ties count half."""
    s, y = _as_score_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("auroc needs at least one positive and one negative")
    ranks = _average_ranks(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(scores, labels) -> float:
    """Average precision in step form; tied scores act as one block."""
    s, y = _as_score_arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise DataError("aupr needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    ap = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    while i < len(s_sorted):
        j = i
        while j + 1 < len(s_sorted) and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        block = y_sorted[i:j + 1]
        tp += int(block.sum())
        fp += len(block) - int(block.sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(ap)


@dataclass
class LogisticModel:
    """Linear classifier trained by full-batch gradient descent."""

    classes: tuple
    mode: str                  # "multiclass" or "multilabel"
    weights: np.ndarray        # d x C
    bias: np.ndarray           # C
    feat_mean: np.ndarray
    feat_scale: np.ndarray

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feat_mean) / self.feat_scale

    def decision(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self._standardize(x) @ self.weights + self.bias

    def predict(self, x):
        z = self.decision(x)
        if self.mode == "multiclass":
            return [self.classes[i] for i in z.argmax(axis=1)]
        return [[c for c, on in zip(self.classes, row) if on]
                for row in (z >= 0.0)]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


_L2 = 1e-4
_ITERS = 500
_LR = 0.1


def fit_logistic(embeddings, labels, mode: str = "multiclass",
                 train_fraction: float = 1.0, seed: int = 0) -> LogisticModel:
    """Train on a random ``train_fraction`` subset (1.0 = everything).

    ``labels`` holds one class per row in multiclass mode and an iterable of
    classes per row in multilabel mode.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if mode not in ("multiclass", "multilabel"):
        raise DataError(f"unknown mode {mode!r}")
    if not 0.0 < train_fraction <= 1.0:
        raise DataError("train_fraction must be in (0, 1]")
    n = len(x)
    if n != len(labels):
        raise DataError("embeddings and labels length mismatch")

    if train_fraction < 1.0:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.permutation(n)[:max(1, int(round(n * train_fraction)))])
        x, labels = x[keep], [labels[i] for i in keep]

    if mode == "multiclass":
        classes = tuple(sorted(set(labels)))
    else:
        classes = tuple(sorted({c for row in labels for c in row}))
    if len(classes) < 2:
        raise DataError("need at least 2 classes")
    col = {c: i for i, c in enumerate(classes)}

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    xs = (x - mean) / scale

    y = np.zeros((len(x), len(classes)))
    if mode == "multiclass":
        for i, lab in enumerate(labels):
            y[i, col[lab]] = 1.0
    else:
        for i, row in enumerate(labels):
            for c in row:
                y[i, col[c]] = 1.0

    w = np.zeros((x.shape[1], len(classes)))
    b = np.zeros(len(classes))
    m = len(xs)
    for _ in range(_ITERS):
        z = xs @ w + b
        p = _softmax(z) if mode == "multiclass" else _sigmoid(z)
        gz = (p - y) / m
        w -= _LR * (xs.T @ gz + _L2 * w)
        b -= _LR * gz.sum(axis=0)
    return LogisticModel(classes=classes, mode=mode, weights=w, bias=b,
                         feat_mean=mean, feat_scale=scale)


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def f1_scores(y_true, y_pred, mode: str = "multiclass") -> dict[str, float]:
    """Micro and macro F1.

    Macro averages over classes present in ``y_true``; a present class with
    no true positives and no predicted positives scores 0.
    """
    if mode == "multiclass":
        true_sets = [{lab} for lab in y_true]
        pred_sets = [{lab} for lab in y_pred]
    else:
        true_sets = [set(row) for row in y_true]
        pred_sets = [set(row) for row in y_pred]
    present = sorted({c for row in true_sets for c in row})
    if not present:
        raise DataError("no classes present in the reference labels")
    tp_all = fp_all = fn_all = 0
    per_class = []
    for c in present:
        tp = sum(1 for t, p in zip(true_sets, pred_sets) if c in t and c in p)
        fp = sum(1 for t, p in zip(true_sets, pred_sets) if c not in t and c in p)
        fn = sum(1 for t, p in zip(true_sets, pred_sets) if c in t and c not in p)
        per_class.append(_f1(tp, fp, fn))
        tp_all += tp
        fp_all += fp
        fn_all += fn
    # predictions of classes never seen in the reference still cost
    # false positives under micro averaging
    ghost = {c for row in pred_sets for c in row} - set(present)
    for c in ghost:
        fp_all += sum(1 for p in pred_sets if c in p)
    return {"micro_f1": _f1(tp_all, fp_all, fn_all),
            "macro_f1": float(np.mean(per_class))}


def outsider_topk_accuracy(rankings, true_outsiders, k: int) -> float:
    """Fraction of instances whose true outsider appears in the first k."""
    if k < 1:
        raise DataError("k must be >= 1")
    if len(rankings) != len(true_outsiders):
        raise DataError("rankings and answers length mismatch")
    if not rankings:
        raise DataError("no ranking instances")
    hits = sum(1 for ranked, truth in zip(rankings, true_outsiders)
               if truth in list(ranked)[:k])
    return hits / len(rankings)


def project_2d(embeddings, seed: int = 0) -> np.ndarray:
    """Top-2 principal components by power iteration on the centered data."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("projection needs an (n >= 2) x d matrix")
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (len(x) - 1)
    if not cov.any():
        warnings.warn("zero-variance input; projection is all zeros")
        return np.zeros((len(x), 2))
    rng = np.random.default_rng(seed)
    comps: list[np.ndarray] = []
    work = cov.copy()
    for _ in range(2):
        v = rng.normal(size=cov.shape[0])
        for c in comps:
            v -= (v @ c) * c
        v /= np.linalg.norm(v)
        for _ in range(500):
            nxt = work @ v
            # keep the iterate out of the span already extracted; the
            # deflated matrix holds rounding residue along it
            for c in comps:
                nxt -= (nxt @ c) * c
            norm = np.linalg.norm(nxt)
            if norm < 1e-300:
                break
            nxt /= norm
            done = np.linalg.norm(nxt - v) < 1e-13
            v = nxt
            if done:
                break
        comps.append(v)
        lam = float(v @ work @ v)
        work = work - lam * np.outer(v, v)
    return xc @ np.column_stack(comps)


@dataclass
class MetricReport:
    """Named metric values for one task, with run context."""

    task: str
    values: dict[str, float]
    metadata: dict = field(default_factory=dict)
    per_run: dict[str, list[float]] = field(default_factory=dict)

    _UNIT = ("auroc", "aupr", "micro_f1", "macro_f1", "accuracy",
             "top1_accuracy", "top2_accuracy")

    def __post_init__(self):
        for name, value in self.values.items():
            if name in self._UNIT and not 0.0 <= value <= 1.0:
                raise DataError(f"{name}={value} outside [0, 1]")


def write_report_text(reports: list[MetricReport], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(f"[{rep.task}]\n")
            for key in sorted(rep.metadata):
                fh.write(f"{key}: {rep.metadata[key]}\n")
            for name in sorted(rep.values):
                fh.write(f"{name}: {rep.values[name]:.6f}\n")
            for name in sorted(rep.per_run):
                runs = " ".join(f"{v:.6f}" for v in rep.per_run[name])
                fh.write(f"{name}_runs: {runs}\n")
            fh.write("\n")


def write_report_csv(reports: list[MetricReport], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("run,task,metric,value,seed\n")
        for rep in reports:
            run = rep.metadata.get("run", "")
            seed = rep.metadata.get("seed", "")
            for name in sorted(rep.values):
                fh.write(f"{run},{rep.task},{name},{rep.values[name]:.6f},{seed}\n")
            for name in sorted(rep.per_run):
                for i, v in enumerate(rep.per_run[name]):
                    fh.write(f"{run}.{i},{rep.task},{name},{v:.6f},{seed}\n")
