"""Multi-head, multi-layer graph attention encoder.

Weight convention: a head's weight matrix is stored as ``(d_in, d)`` so that
messages are ``H @ W`` (the transpose of the column-vector form ``W h``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import EdgeIndex, Value

__all__ = ["AttentionTrace", "gat_layer", "encode", "encoder_param_names", "init_encoder"]


@dataclass
class AttentionTrace:
    """Pre-softmax attention logits of every layer, head-averaged.

    ``fwd[l]`` holds the logit of ``(i, j)`` (importance of ``j`` to ``i``)
    and ``bwd[l]`` that of ``(j, i)`` for each stored pair ``i < j``; both are
    ``(E, 1)`` Values on the tape.
    """

    fwd: list
    bwd: list

    @property
    def layers(self):
        return len(self.fwd)

    def numpy(self):
        """``(L, E, 2)`` array of (fwd, bwd) logits."""
        if not self.fwd:
            return np.zeros((0, 0, 2))
        return np.stack([np.hstack([f.data, b.data]) for f, b in zip(self.fwd, self.bwd)])


def encoder_param_names(layers, heads):
    return [
        (f"encoder/l{l}/h{k}/W", f"encoder/l{l}/h{k}/a")
        for l in range(layers)
        for k in range(heads)
    ]


def init_encoder(rng, in_dim, layers, heads, dim):
    """Glorot-uniform weights and attention vectors, layer by layer."""
    out = {}
    d_in = in_dim
    for l in range(layers):
        for k in range(heads):
            lim = np.sqrt(6.0 / (d_in + dim))
            out[f"encoder/l{l}/h{k}/W"] = rng.uniform(-lim, lim, size=(d_in, dim))
            lim_a = np.sqrt(6.0 / (2 * dim + 1))
            out[f"encoder/l{l}/h{k}/a"] = rng.uniform(-lim_a, lim_a, size=(2 * dim, 1))
        d_in = heads * dim
    return out


def _project(h_prev, W):
    if isinstance(h_prev, Value):
        return ad.matmul(h_prev, W)
    if sp.issparse(h_prev) or isinstance(h_prev, np.ndarray):
        return ad.spmatmul(h_prev, W)
    raise TypeError(f"unsupported layer input {type(h_prev).__name__}")


def gat_layer(h_prev, edges: EdgeIndex, weights, attn, slope=0.2):
    """One attention layer over all heads.

    ``h_prev`` is a Value, or a constant (sparse) matrix for the input layer.
    ``weights``/``attn`` hold one Value per head. Returns the concatenated
    head outputs ``(n, K*d)`` and the per-head slot logits, each ``(S, 1)``.
    """
    if len(weights) != len(attn) or not weights:
        raise ValueError("gat_layer: need one weight matrix and one attention vector per head")
    outputs, logits = [], []
    for W, a in zip(weights, attn):
        if a.shape != (2 * W.shape[1], 1):
            raise ValueError(f"gat_layer: attention vector shape {a.shape} for head width {W.shape[1]}")
        msg = _project(h_prev, W)
        m_dst = ad.gather_rows(msg, edges.dst)
        m_src = ad.gather_rows(msg, edges.src)
        logit = ad.leaky_relu(ad.matmul(ad.concat_cols([m_dst, m_src]), a), slope)
        alpha = ad.segment_softmax(logit, edges)
        outputs.append(ad.elu(ad.segment_weighted_sum(alpha, m_src, edges)))
        logits.append(logit)
    h_next = outputs[0] if len(outputs) == 1 else ad.concat_cols(outputs)
    return h_next, logits


def encode(graph, params, layers, heads, slope=0.2):
    """Run ``layers`` attention layers from the node attributes.

    ``params`` maps encoder parameter names to Values; the same mapping is
    used for source and target. Returns ``(H, AttentionTrace)``.
    """
    if layers < 1:
        raise ValueError("encode: need at least one layer")
    edges = graph.edge_index
    pairs = graph.und_edges
    fwd_slots = edges.slots(pairs[:, 0], pairs[:, 1])
    bwd_slots = edges.slots(pairs[:, 1], pairs[:, 0])
    h = graph.attrs
    trace = AttentionTrace([], [])
    for l in range(layers):
        Ws = [params[f"encoder/l{l}/h{k}/W"] for k in range(heads)]
        As = [params[f"encoder/l{l}/h{k}/a"] for k in range(heads)]
        h, head_logits = gat_layer(h, edges, Ws, As, slope)
        mean_logit = head_logits[0] if heads == 1 else ad.mean_over_group(head_logits)
        trace.fwd.append(ad.gather_rows(mean_logit, fwd_slots))
        trace.bwd.append(ad.gather_rows(mean_logit, bwd_slots))
    return h, trace
