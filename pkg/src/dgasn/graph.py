"""Attributed undirected graphs: loading, validation, edge labels, synthetic pairs.

On-disk format (one directory per network, UTF-8, LF, 0-based indices)::

    meta.json    {"n": ..., "attr_dim": ..., "label_dim": ...}
    edges.tsv    i<TAB>j            one undirected edge per line
    attrs.tsv    i<TAB>k            X[i, k] = 1
    labels.tsv   i<TAB>c            Y[i, c] = 1 (optional)
"""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .autodiff import EdgeIndex
from .rng import stream

__all__ = [
    "DatasetError",
    "Graph",
    "DatasetStats",
    "derive_edge_label",
    "derive_edge_labels",
    "load_graph",
    "save_graph",
    "SynthParams",
    "synth_pair",
]


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""


def derive_edge_label(y_i, y_j):
    """1 if the two multi-hot label vectors share a label, else 0."""
    y_i = np.asarray(y_i)
    y_j = np.asarray(y_j)
    if y_i.shape != y_j.shape:
        raise DatasetError(f"label vectors differ in length: {y_i.shape} vs {y_j.shape}")
    if not y_i.any() or not y_j.any():
        raise DatasetError("node without any label; edge label undefined")
    return int(np.any((y_i > 0) & (y_j > 0)))


def derive_edge_labels(node_labels, pairs):
    Y = np.asarray(node_labels) > 0
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    empty = ~Y.any(axis=1)
    if np.any(empty):
        raise DatasetError(f"{int(empty.sum())} node(s) carry no label, e.g. node {int(np.argmax(empty))}")
    return np.any(Y[pairs[:, 0]] & Y[pairs[:, 1]], axis=1).astype(np.int64)


@dataclass(frozen=True)
class DatasetStats:
    nodes: int
    attrs_dim: int
    label_dim: int
    total_edges_raw: int
    self_loops_removed: int
    homophilous: int | None
    heterophilous: int | None
    duplicates_collapsed: int = 0

    def as_dict(self):
        return {
            "nodes": self.nodes,
            "attrs_dim": self.attrs_dim,
            "label_dim": self.label_dim,
            "total_edges_raw": self.total_edges_raw,
            "self_loops_removed": self.self_loops_removed,
            "homophilous": self.homophilous,
            "heterophilous": self.heterophilous,
            "duplicates_collapsed": self.duplicates_collapsed,
        }


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable attributed undirected network.

    ``und_edges`` holds canonical pairs ``(i, j)`` with ``i < j``, sorted, no
    self pairs. ``edge_labels[e]`` is 1 for homophilous and 0 for
    heterophilous edges and is derived from ``node_labels`` when present.
    """

    n: int
    attrs: sp.csr_matrix
    und_edges: np.ndarray
    node_labels: np.ndarray | None = None
    edge_labels: np.ndarray | None = None
    edge_index: EdgeIndex = field(init=False, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.und_edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise DatasetError("und_edges must be canonical pairs with i < j")
            if edges.max() >= self.n or edges.min() < 0:
                raise DatasetError("edge endpoint out of range")
            if len(np.unique(edges, axis=0)) != len(edges):
                raise DatasetError("duplicate undirected edges")
        attrs = sp.csr_matrix(self.attrs, dtype=np.float64)
        if attrs.shape[0] != self.n:
            raise DatasetError(f"attribute matrix has {attrs.shape[0]} rows for {self.n} nodes")
        if attrs.nnz and not np.all(attrs.data == 1.0):
            raise DatasetError("attribute entries must be binary")
        object.__setattr__(self, "und_edges", edges)
        object.__setattr__(self, "attrs", attrs)
        labels = self.edge_labels
        if self.node_labels is not None:
            Y = np.asarray(self.node_labels, dtype=np.int64)
            if Y.shape[0] != self.n:
                raise DatasetError("node label matrix row count differs from n")
            object.__setattr__(self, "node_labels", Y)
            derived = derive_edge_labels(Y, edges)
            if labels is not None and not np.array_equal(np.asarray(labels), derived):
                raise DatasetError("edge labels disagree with node labels")
            labels = derived
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (len(edges),):
                raise DatasetError("one edge label per undirected edge required")
        object.__setattr__(self, "edge_labels", labels)
        object.__setattr__(self, "edge_index", EdgeIndex.from_undirected(self.n, edges))

    @property
    def num_edges(self):
        return len(self.und_edges)

    @property
    def attr_dim(self):
        return self.attrs.shape[1]

    @property
    def label_dim(self):
        return 0 if self.node_labels is None else self.node_labels.shape[1]

    @property
    def is_labeled(self):
        return self.edge_labels is not None

    def without_labels(self):
        """Copy with node and edge labels stripped (what a trainer sees of a target)."""
        return Graph(self.n, self.attrs, self.und_edges)

    def permuted(self, perm):
        """Relabel nodes so that old node ``perm[k]`` becomes node ``k``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        e = inv[self.und_edges]
        e = np.sort(e, axis=1)
        order = np.lexsort((e[:, 1], e[:, 0]))
        Y = None if self.node_labels is None else self.node_labels[perm]
        return Graph(self.n, self.attrs[perm], e[order], Y)


def _canonical_pairs(raw):
    """Collapse a raw (m, 2) pair list; returns pairs, self-loop and duplicate counts."""
    raw = np.asarray(raw, dtype=np.int64).reshape(-1, 2)
    canon = np.sort(raw, axis=1)
    uniq_all = np.unique(canon, axis=0) if len(canon) else canon
    duplicates = len(canon) - len(uniq_all)
    keep = uniq_all[uniq_all[:, 0] != uniq_all[:, 1]]
    self_loops = len(uniq_all) - len(keep)
    return keep, self_loops, duplicates


def _read_pairs(path, n_first, n_second, what):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected two tab-separated integers")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer field") from None
            if not (0 <= a < n_first) or not (0 <= b < n_second):
                raise DatasetError(f"{path}:{lineno}: {what} index out of range")
            rows.append((a, b))
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def load_graph(directory):
    """Read a network directory; returns ``(Graph, DatasetStats)``.

    Duplicate undirected pairs are collapsed (counted in
    ``duplicates_collapsed``), self-loops are counted then dropped, and edge
    labels are derived when ``labels.tsv`` exists. ``total_edges_raw`` counts
    distinct undirected pairs including self-loops.
    """
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise DatasetError(f"missing {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        n, attr_dim, label_dim = int(meta["n"]), int(meta["attr_dim"]), int(meta.get("label_dim", 0))
    except (KeyError, ValueError, TypeError) as exc:
        raise DatasetError(f"{meta_path}: invalid metadata ({exc})") from None

    raw = _read_pairs(directory / "edges.tsv", n, n, "node")
    pairs, self_loops, duplicates = _canonical_pairs(raw)

    attr_rows = _read_pairs(directory / "attrs.tsv", n, attr_dim, "attribute")
    attrs = sp.csr_matrix(
        (np.ones(len(attr_rows)), (attr_rows[:, 0], attr_rows[:, 1])), shape=(n, attr_dim)
    )
    attrs.sum_duplicates()
    attrs.data[:] = 1.0

    Y = None
    labels_path = directory / "labels.tsv"
    if labels_path.exists():
        lab = _read_pairs(labels_path, n, label_dim, "label")
        Y = np.zeros((n, label_dim), dtype=np.int64)
        Y[lab[:, 0], lab[:, 1]] = 1

    graph = Graph(n, attrs, pairs, Y)
    if graph.is_labeled:
        homo = int(graph.edge_labels.sum())
        hetero = graph.num_edges - homo
    else:
        homo = hetero = None
    stats = DatasetStats(
        nodes=n,
        attrs_dim=attr_dim,
        label_dim=label_dim,
        total_edges_raw=graph.num_edges + self_loops,
        self_loops_removed=self_loops,
        homophilous=homo,
        heterophilous=hetero,
        duplicates_collapsed=duplicates,
    )
    return graph, stats


def save_graph(graph: Graph, directory):
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    meta = {"n": graph.n, "attr_dim": graph.attr_dim, "label_dim": graph.label_dim}
    (directory / "meta.json").write_text(json.dumps(meta) + "\n", encoding="utf-8")
    _write_pairs(directory / "edges.tsv", graph.und_edges)
    coo = graph.attrs.tocoo()
    order = np.lexsort((coo.col, coo.row))
    _write_pairs(directory / "attrs.tsv", np.column_stack([coo.row[order], coo.col[order]]))
    if graph.node_labels is not None:
        _write_pairs(directory / "labels.tsv", np.argwhere(graph.node_labels > 0))


def _write_pairs(path, pairs):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{int(a)}\t{int(b)}\n" for a, b in pairs)


# ---------------------------------------------------------------------------
# synthetic source/target pairs


@dataclass(frozen=True)
class SynthParams:
    """Stochastic block pair with per-class attribute signatures.

    Every class owns a disjoint block of ``attr_dim // classes`` attributes
    that its nodes switch on. A ``bridge_frac`` share of nodes also leans
    towards one foreign topic: each bit of that topic's block is on with
    probability ``bridge_mix`` and the inter-class edge probability towards
    that topic is multiplied by ``bridge_boost``. Every bit is then flipped
    with the network's flip rate. Unequal flip rates or edge probabilities
    shift the two networks apart.

    ``shortcut_frac`` of each class block is a source-only shortcut: in the
    source those bits copy the signature with no flip noise, in the target
    they are fair coin flips. A model leaning on them transfers badly.
    """

    nodes: int = 200
    classes: int = 3
    attr_dim: int = 60
    p_in: float = 0.05
    p_out: float = 0.012
    source_flip: float = 0.1
    target_flip: float = 0.25
    target_p_in: float | None = None
    target_p_out: float | None = None
    multi_label_prob: float = 0.1
    bridge_frac: float = 0.0
    bridge_mix: float = 0.5
    bridge_boost: float = 1.0
    shortcut_frac: float = 0.0

    def __post_init__(self):
        for name in ("p_in", "p_out", "source_flip", "target_flip", "multi_label_prob",
                     "bridge_frac", "bridge_mix", "shortcut_frac", "target_p_in", "target_p_out"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.bridge_boost < 0:
            raise ValueError("bridge_boost must be non-negative")
        if self.classes < 1 or self.nodes < 1 or self.attr_dim < self.classes:
            raise ValueError("need nodes >= 1, classes >= 1 and attr_dim >= classes")


def _synth_network(rng, params, p_in, p_out, flip, is_source):
    n, C = params.nodes, params.classes
    primary = rng.integers(0, C, size=n)
    Y = np.zeros((n, C), dtype=np.int64)
    Y[np.arange(n), primary] = 1
    extra = rng.random(n) < params.multi_label_prob
    foreign = (primary + rng.integers(1, C, size=n)) % C if C > 1 else primary.copy()
    if C > 1:
        Y[np.nonzero(extra)[0], foreign[extra]] = 1
    bridge = (rng.random(n) < params.bridge_frac) & ~extra & (C > 1)

    block = params.attr_dim // C
    signature = np.zeros((C, params.attr_dim), dtype=bool)
    for c in range(C):
        signature[c, c * block:(c + 1) * block] = True
    base = (Y @ signature.astype(np.int64)) > 0
    lean = signature[foreign] & (rng.random((n, params.attr_dim)) < params.bridge_mix)
    base |= lean & bridge[:, None]
    flips = rng.random((n, params.attr_dim)) < flip
    shortcut = np.zeros(params.attr_dim, dtype=bool)
    for c in range(C):
        shortcut[c * block:c * block + int(round(params.shortcut_frac * block))] = True
    coins = rng.random((n, params.attr_dim)) < 0.5
    if is_source:
        flips[:, shortcut] = False
    else:
        base[:, shortcut] = coins[:, shortcut]
        flips[:, shortcut] = False
    X = (base ^ flips).astype(np.float64)

    iu, ju = np.triu_indices(n, k=1)
    share = np.any((Y[iu] > 0) & (Y[ju] > 0), axis=1)
    toward = (bridge[iu] & (Y[ju, foreign[iu]] > 0)) | (bridge[ju] & (Y[iu, foreign[ju]] > 0))
    prob = np.where(share, p_in, np.minimum(1.0, p_out * np.where(toward, params.bridge_boost, 1.0)))
    keep = rng.random(len(iu)) < prob
    pairs = np.column_stack([iu[keep], ju[keep]])

    counts = Y.sum(axis=0)
    if np.any(counts == 0):
        warnings.warn(f"synthetic network has empty label classes: {np.nonzero(counts == 0)[0].tolist()}")
    return Graph(n, sp.csr_matrix(X), pairs, Y)


def synth_pair(seed, params: SynthParams | None = None):
    """Draw ``(source, target)``; both carry labels, strip the target's before training."""
    params = params or SynthParams()
    src = _synth_network(stream(seed, "synth/source"), params, params.p_in, params.p_out, params.source_flip, True)
    t_in = params.p_in if params.target_p_in is None else params.target_p_in
    t_out = params.p_out if params.target_p_out is None else params.target_p_out
    tgt = _synth_network(stream(seed, "synth/target"), params, t_in, t_out, params.target_flip, False)
    return src, tgt
