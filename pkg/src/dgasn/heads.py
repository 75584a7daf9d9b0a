"""Edge embeddings and the three MLP heads."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad

__all__ = [
    "EDGE_OPERATORS",
    "NODE_HIDDEN",
    "EDGE_HIDDEN",
    "DOMAIN_HIDDEN",
    "edge_embed",
    "edge_embed_dim",
    "init_mlp",
    "mlp_logits",
    "node_classify",
    "edge_classify",
    "domain_discriminate",
]

EDGE_OPERATORS = ("concatenate", "hadamard", "average", "l1", "l2")

NODE_HIDDEN = (32,)
EDGE_HIDDEN = (128,)
DOMAIN_HIDDEN = (128, 32)


def edge_embed_dim(node_dim, operator):
    _check_operator(operator)
    return 2 * node_dim if operator == "concatenate" else node_dim


def _check_operator(operator):
    if operator not in EDGE_OPERATORS:
        raise ValueError(f"unknown edge operator {operator!r}; expected one of {EDGE_OPERATORS}")


def edge_embed(H, pairs, operator="concatenate"):
    """Combine endpoint embeddings of each stored pair ``(i, j)``."""
    _check_operator(operator)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    hi = ad.gather_rows(H, pairs[:, 0])
    hj = ad.gather_rows(H, pairs[:, 1])
    if operator == "concatenate":
        return ad.concat_cols([hi, hj])
    if operator == "hadamard":
        return ad.mul(hi, hj)
    if operator == "average":
        return ad.scale(ad.add(hi, hj), 0.5)
    diff = ad.sub(hi, hj)
    if operator == "l1":
        return ad.absolute(diff)
    return ad.square(diff)


def init_mlp(rng, prefix, in_dim, hidden, out_dim):
    """Glorot-uniform weights and zero biases, named ``{prefix}/{i}/W|b``."""
    dims = [in_dim, *hidden, out_dim]
    out = {}
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        lim = np.sqrt(6.0 / (a + b))
        out[f"{prefix}/{i}/W"] = rng.uniform(-lim, lim, size=(a, b))
        out[f"{prefix}/{i}/b"] = np.zeros((1, b))
    return out


def mlp_logits(x, params, prefix, depth):
    """ReLU hidden layers, linear output; ``depth`` counts weight layers."""
    h = x
    for i in range(depth):
        h = ad.add_rowvec(ad.matmul(h, params[f"{prefix}/{i}/W"]), params[f"{prefix}/{i}/b"])
        if i < depth - 1:
            h = ad.relu(h)
    return h


def node_classify(H, params):
    """Pre-sigmoid class logits ``(n, C)``; ``sigmoid`` of them gives probabilities."""
    return mlp_logits(H, params, "node", len(NODE_HIDDEN) + 1)


def edge_classify(E, params):
    """Pre-sigmoid logit of P(homophilous) per edge, ``(E, 1)``."""
    return mlp_logits(E, params, "edge", len(EDGE_HIDDEN) + 1)


def domain_discriminate(E, params, lam, reverse=True):
    """Pre-sigmoid logit of P(edge from target) per edge.

    The input first passes a gradient reversal scaled by ``lam``. With
    ``reverse=False`` it is a plain identity instead; used to verify the
    reversal against an unreversed run.
    """
    x = ad.grad_reverse(E, lam) if reverse else E
    return mlp_logits(x, params, "domain", len(DOMAIN_HIDDEN) + 1)
