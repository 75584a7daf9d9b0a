"""Finite-difference and gradient-reversal checks on a tiny synthetic pair."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoder import encode
from .graph import SynthParams, synth_pair
from .heads import domain_discriminate, edge_embed
from .losses import loss_domain
from .model import init_params
from .trainer import TrainConfig, build_objective

MAX_NODES = 50
TOLERANCE = 1e-4
GRL_TOLERANCE = 1e-9
# absolute disagreement below this is float noise (round-off is ~1e-16 / eps)
FD_FLOOR = 1e-11
# second differences above this (per eps**2) mark a stencil across a ReLU corner
KINK_CURVATURE = 1.0
MAX_KINK_SHARE = 0.01


@dataclass
class GradcheckReport:
    fd_heads: float  # node and edge classifiers, full objective
    fd_encoder_domain: float  # encoder and discriminator, reversal disabled
    grl_deviation: float  # max |g_rev + lam * g_plain| over encoder params
    discriminator_identical: bool
    encoder_domain_grad_max: float  # max |d L_d / d theta_h| with reversal on
    lam: float
    checked: int = 0
    kinks: int = 0

    @property
    def worst(self):
        return max(self.fd_heads, self.fd_encoder_domain)

    @property
    def passed(self):
        return (self.worst <= TOLERANCE and self.grl_deviation <= GRL_TOLERANCE
                and self.discriminator_identical and self.kinks <= MAX_KINK_SHARE * self.checked)

    def lines(self):
        return [
            f"fd worst relative error (node, edge heads): {self.fd_heads:.3e}",
            f"fd worst relative error (encoder, discriminator; reversal off): {self.fd_encoder_domain:.3e}",
            f"reversal identity max deviation (lambda={self.lam:g}): {self.grl_deviation:.3e}",
            f"discriminator gradient identical across runs: {self.discriminator_identical}",
            f"max |encoder gradient of domain loss|: {self.encoder_domain_grad_max:.3e}",
            f"entries checked: {self.checked}, skipped at ReLU corners: {self.kinks}",
            f"worst relative error: {self.worst:.3e}",
        ]


def tiny_pair(seed, nodes=12):
    if nodes > MAX_NODES:
        raise ValueError(f"gradcheck networks are capped at {MAX_NODES} nodes")
    params = SynthParams(nodes=nodes, classes=3, attr_dim=9, p_in=0.35, p_out=0.15)
    return synth_pair(seed, params)


def _domain_grads(arrays, source, target, config, lam, reverse):
    leaves = {k: ad.parameter(v) for k, v in arrays.items()}
    E = []
    for g in (source, target):
        H, _ = encode(g, leaves, config.layers, config.heads, config.slope)
        E.append(edge_embed(H, g.und_edges, config.edge_operator))
    loss = loss_domain(domain_discriminate(E[0], leaves, lam, reverse),
                       domain_discriminate(E[1], leaves, lam, reverse))
    loss.backward()
    return {k: (np.zeros_like(v.data) if v.grad is None else v.grad.copy()) for k, v in leaves.items()}


def gradcheck(seed=0, nodes=12, lam=0.1, layers=2, heads=2, dim=4, eps=1e-5):
    source, target = tiny_pair(seed, nodes)
    target = target.without_labels()
    config = TrainConfig(layers=layers, heads=heads, dim=dim, seed=seed)
    model = init_params(seed, layers, heads, dim, source.attr_dim, source.label_dim)
    arrays = model.arrays

    def objective(reverse):
        return lambda leaves: build_objective(leaves, source, target, config, lam, reverse)[0]

    heads_names = model.names("node") + model.names("edge")
    enc_dom = model.names("encoder") + model.names("domain")
    fd_heads, n1, k1 = ad.gradient_errors(objective(True), arrays, eps, heads_names, FD_FLOOR, KINK_CURVATURE)
    fd_enc, n2, k2 = ad.gradient_errors(objective(False), arrays, eps, enc_dom, FD_FLOOR, KINK_CURVATURE)

    rev = _domain_grads(arrays, source, target, config, lam, True)
    plain = _domain_grads(arrays, source, target, config, lam, False)
    dev = max(float(np.max(np.abs(rev[k] + lam * plain[k]))) for k in model.names("encoder"))
    same = all(np.array_equal(rev[k], plain[k]) for k in model.names("domain"))
    enc_max = max(float(np.max(np.abs(rev[k]))) for k in model.names("encoder"))
    return GradcheckReport(fd_heads, fd_enc, dev, same, enc_max, lam, n1 + n2, k1 + k2)
