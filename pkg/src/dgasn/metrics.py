"""Exact ranking metrics and attention-distribution export."""
from __future__ import annotations

import numpy as np

__all__ = [
    "UndefinedMetricError",
    "auc",
    "average_precision",
    "evaluate_target",
    "attention_scores",
    "attention_histograms",
    "export_attention_histograms",
]


class UndefinedMetricError(ValueError):
    pass


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"scores and labels differ in length: {scores.size} vs {labels.size}")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0/1")
    return scores, labels.astype(np.int64)


def auc(scores, labels):
    """Mann-Whitney AUC with half credit for ties, O(n log n)."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    # average 1-based rank of each tie group
    starts = np.concatenate([[0], np.nonzero(np.diff(s))[0] + 1])
    ends = np.concatenate([starts[1:], [s.size]])
    avg_rank = (starts + ends + 1) / 2.0
    ranks = np.repeat(avg_rank, ends - starts)
    pos_rank_sum = ranks[labels[order] == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, labels):
    """Step-wise AP over distinct score thresholds; tied scores enter together."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    last = np.concatenate([np.nonzero(np.diff(s))[0], [s.size - 1]])
    tp = np.cumsum(y)[last]
    seen = last + 1
    precision = tp / seen
    recall = tp / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))


def evaluate_target(hom_scores, edge_labels, positive="heterophilous"):
    """(AUC, AP) with heterophilous edges as the positive class by default.

    ``hom_scores`` are P(homophilous); for the heterophilous convention the
    metrics score ``1 - hom_scores`` against ``1 - edge_labels``.
    """
    hom_scores = np.asarray(hom_scores, dtype=np.float64)
    edge_labels = np.asarray(edge_labels)
    if positive == "heterophilous":
        s, y = 1.0 - hom_scores, 1 - edge_labels
    elif positive == "homophilous":
        s, y = hom_scores, edge_labels
    else:
        raise ValueError(f"positive must be 'heterophilous' or 'homophilous', got {positive!r}")
    return auc(s, y), average_precision(s, y)


def attention_scores(trace_logits):
    """σ of the mean logit over layers and both directions, one value per edge.

    ``trace_logits`` is the ``(L, E, 2)`` array from ``AttentionTrace.numpy()``.
    """
    arr = np.asarray(trace_logits, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError("expected an (L, E, 2) logit array")
    if arr.shape[1] == 0:
        return np.zeros(0)
    m = arr.mean(axis=(0, 2))
    return 0.5 * (1.0 + np.tanh(0.5 * m))


BINS = 50


def attention_histograms(networks):
    """Rows ``(network, class, lo, hi, count)`` for 50 uniform bins on [0, 1].

    ``networks`` is a sequence of ``(name, trace_logits, edge_labels)``.
    """
    edges = np.linspace(0.0, 1.0, BINS + 1)
    rows = []
    for name, logits, labels in networks:
        scores = attention_scores(logits)
        labels = np.asarray(labels)
        for cls, value in (("homophilous", 1), ("heterophilous", 0)):
            counts, _ = np.histogram(scores[labels == value], bins=edges)
            rows.extend((name, cls, edges[b], edges[b + 1], int(counts[b])) for b in range(BINS))
    return rows


def export_attention_histograms(networks, path):
    rows = attention_histograms(networks)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("network,class,bin_lo,bin_hi,count\n")
        for name, cls, lo, hi, count in rows:
            fh.write(f"{name},{cls},{lo:.2f},{hi:.2f},{count}\n")
    return rows
