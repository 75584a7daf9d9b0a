"""Loss terms, all computed from pre-sigmoid logits.

log σ(x) and log(1 - σ(x)) = log σ(-x) go through the branch-stable
``log_sigmoid`` so unbounded logits never overflow.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

__all__ = [
    "LossWeights",
    "LossReport",
    "binary_cross_entropy",
    "loss_node",
    "loss_edge",
    "loss_attention_layer",
    "loss_attention_total",
    "loss_domain",
    "loss_total",
]


@dataclass(frozen=True)
class LossWeights:
    eta: float = 1.0
    xi: float = 0.1
    lam: float = 0.0
    gamma: float = 5.0

    def __post_init__(self):
        if min(self.eta, self.xi, self.lam) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")


@dataclass
class LossReport:
    """Scalar loss values for logging.

    ``l_total`` is the bookkeeping value ``l_edge + eta*l_node + xi*l_attn -
    lam*l_domain``; the optimized scalar instead adds ``l_domain`` and lets
    the gradient reversal apply ``-lam`` on the encoder side.
    """

    l_node: float = 0.0
    l_edge: float = 0.0
    l_attn: float = 0.0
    l_attn_layers: list = field(default_factory=list)
    l_domain: float = 0.0
    l_total: float = 0.0

    def as_dict(self):
        return {
            "l_node": self.l_node,
            "l_edge": self.l_edge,
            "l_attn": self.l_attn,
            "l_attn_layers": list(self.l_attn_layers),
            "l_domain": self.l_domain,
            "l_total": self.l_total,
        }


def _zero():
    return ad.constant(np.zeros((1, 1)))


def _log_likelihood(logits, targets, neg_weight=1.0):
    """Σ t·log σ(x) + w·(1-t)·log σ(-x) as a scalar Value."""
    t = np.asarray(targets, dtype=np.float64).reshape(logits.shape)
    pos = ad.sum_all(ad.log_sigmoid(logits), t)
    neg = ad.sum_all(ad.log_sigmoid(ad.neg(logits)), neg_weight * (1.0 - t))
    return ad.add(pos, neg)


def binary_cross_entropy(logits, targets):
    """Mean binary cross-entropy over all entries of ``logits``."""
    if logits.data.size == 0:
        return _zero()
    return ad.scale(_log_likelihood(logits, targets), -1.0 / logits.data.size)


def loss_node(logits, Y):
    """Multi-label sigmoid cross-entropy, summed over classes, averaged over nodes."""
    n = logits.shape[0]
    if n == 0:
        return _zero()
    return ad.scale(_log_likelihood(logits, Y), -1.0 / n)


def loss_edge(logits, z):
    return binary_cross_entropy(logits, z)


def loss_attention_layer(fwd, bwd, z, gamma=5.0):
    """Cost-sensitive attention supervision of one layer.

    Both orientations of every source edge are pushed towards σ = 1 when the
    edge is homophilous and σ = 0 (with weight ``gamma``) when heterophilous.
    """
    E = fwd.shape[0]
    if E == 0:
        return _zero()
    total = ad.add(_log_likelihood(fwd, z, gamma), _log_likelihood(bwd, z, gamma))
    return ad.scale(total, -1.0 / (2 * E))


def loss_attention_total(trace, z, gamma=5.0):
    """Sum of per-layer losses; returns ``(total Value, [per-layer Values])``."""
    per_layer = [loss_attention_layer(f, b, z, gamma) for f, b in zip(trace.fwd, trace.bwd)]
    if not per_layer:
        return _zero(), []
    total = per_layer[0]
    for term in per_layer[1:]:
        total = ad.add(total, term)
    return total, per_layer


def loss_domain(source_logits, target_logits):
    """Mean cross-entropy of the domain label (0 source, 1 target) over both edge sets."""
    Es, Et = source_logits.shape[0], target_logits.shape[0]
    if Es + Et == 0:
        return _zero()
    parts = []
    if Es:
        parts.append(ad.sum_all(ad.log_sigmoid(ad.neg(source_logits))))
    if Et:
        parts.append(ad.sum_all(ad.log_sigmoid(target_logits)))
    total = parts[0] if len(parts) == 1 else ad.add(parts[0], parts[1])
    return ad.scale(total, -1.0 / (Es + Et))


def loss_total(l_edge, l_node, l_attn, l_domain, weights: LossWeights):
    """Scalar to backpropagate: ``l_edge + eta*l_node + xi*l_attn + l_domain``.

    ``l_domain`` must already have been built through ``grad_reverse`` with
    the current lambda, which both reverses and scales its encoder-side
    gradient; the discriminator sees the plain gradient. Any term may be
    ``None`` (switched off).
    """
    terms = []
    if l_edge is not None:
        terms.append(l_edge)
    if l_node is not None and weights.eta:
        terms.append(ad.scale(l_node, weights.eta))
    if l_attn is not None and weights.xi:
        terms.append(ad.scale(l_attn, weights.xi))
    if l_domain is not None:
        terms.append(l_domain)
    if not terms:
        return _zero()
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total
