"""Full-batch adversarial training loop with Adam and progress schedules."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .encoder import encode
from .graph import Graph
from .heads import EDGE_OPERATORS, domain_discriminate, edge_classify, edge_embed, node_classify
from .losses import (
    LossReport,
    LossWeights,
    loss_attention_total,
    loss_domain,
    loss_edge,
    loss_node,
    loss_total,
)
from .metrics import evaluate_target
from .model import ModelParams, init_params

__all__ = [
    "TrainConfig",
    "AdamState",
    "EpochTrace",
    "TrainingDiverged",
    "lr_schedule",
    "lambda_schedule",
    "progress",
    "adam_step",
    "build_objective",
    "train",
    "predict_target",
    "ABLATIONS",
    "ablation_config",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    layers: int = 2
    heads: int = 4
    dim: int = 16
    eta: float = 1.0
    xi: float = 0.1
    gamma: float = 5.0
    lambda_max: float = 0.1
    mu0: float = 1e-3
    weight_decay: float = 1e-3
    epochs: int = 200
    seed: int = 0
    edge_operator: str = "concatenate"
    use_node_loss: bool = True
    use_edge_loss: bool = True
    use_attn_loss: bool = True
    use_domain_loss: bool = True
    slope: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_every: int = 10

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if min(self.layers, self.heads, self.dim) < 1:
            raise ValueError("layers, heads and dim must be >= 1")
        if min(self.eta, self.xi, self.lambda_max, self.mu0, self.weight_decay) < 0:
            raise ValueError("weights, rates and decay must be non-negative")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.edge_operator not in EDGE_OPERATORS:
            raise ValueError(f"unknown edge operator {self.edge_operator!r}")

    @property
    def effective_eta(self):
        return self.eta if self.use_node_loss else 0.0

    @property
    def effective_xi(self):
        return self.xi if self.use_attn_loss else 0.0


ABLATIONS = {
    "full": {},
    "no_node": {"use_node_loss": False},
    "no_edge": {"use_edge_loss": False},
    "no_domain": {"use_domain_loss": False},
    "no_attn": {"use_attn_loss": False},
}


def ablation_config(config: TrainConfig, variant):
    if variant not in ABLATIONS:
        raise ValueError(f"unknown variant {variant!r}; choose from {', '.join(ABLATIONS)}")
    return replace(config, **ABLATIONS[variant])


def progress(epoch, epochs):
    return 0.0 if epochs <= 1 else min(max(epoch / (epochs - 1), 0.0), 1.0)


def lr_schedule(p, mu0=1e-3):
    return mu0 / (1.0 + 10.0 * p) ** 0.75


def lambda_schedule(p, lambda_max=0.1):
    return (2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0) * lambda_max


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr, weight_decay=0.0):
    """In-place Adam update with bias correction and coupled L2 decay.

    ``weight_decay * theta`` is added to each gradient before the moment
    updates. Parameters missing from ``grads`` are treated as zero-gradient.
    """
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, theta in params.items():
        g = grads.get(name)
        g = np.zeros_like(theta) if g is None else g.reshape(theta.shape)
        if not np.all(np.isfinite(g)):
            raise ad.NumericError("adam_step", f"non-finite gradient for {name}")
        if weight_decay:
            g = g + weight_decay * theta
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - b1) * g if m is None else b1 * m + (1 - b1) * g
        with np.errstate(over="ignore"):
            v = (1 - b2) * g * g if v is None else b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        with np.errstate(over="ignore", invalid="ignore"):
            theta -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.all(np.isfinite(theta)):
            raise ad.NumericError("adam_step", f"non-finite parameter {name} after update")
    return params


@dataclass
class EpochTrace:
    epoch: int
    p: float
    mu_p: float
    lambda_p: float
    losses: LossReport
    auc: float | None = None
    ap: float | None = None

    def as_dict(self):
        return {
            "epoch": self.epoch,
            "p": self.p,
            "mu_p": self.mu_p,
            "lambda_p": self.lambda_p,
            **self.losses.as_dict(),
            "auc": self.auc,
            "ap": self.ap,
        }


class TrainingDiverged(ad.NumericError):
    def __init__(self, message, history):
        super().__init__("train", message)
        self.history = history
        self.last = history[-1] if history else None


def build_objective(leaves, source: Graph, target: Graph | None, config: TrainConfig, lam, reverse=True):
    """Assemble all losses on one tape.

    Returns ``(objective Value, parts dict)``; ``parts`` maps
    ``edge/node/attn/domain`` to scalar Values (or None when switched off),
    plus ``attn_layers``, ``trace`` and the source embeddings ``H_source``.
    ``target`` may be None when the domain term is off.
    """
    L, K = config.layers, config.heads
    H_s, trace_s = encode(source, leaves, L, K, config.slope)
    E_s = edge_embed(H_s, source.und_edges, config.edge_operator)
    parts = {"edge": None, "node": None, "attn": None, "attn_layers": [], "domain": None,
             "trace": trace_s, "H_source": H_s}

    z = source.edge_labels
    if config.use_edge_loss:
        parts["edge"] = loss_edge(edge_classify(E_s, leaves), z)
    if config.use_node_loss:
        parts["node"] = loss_node(node_classify(H_s, leaves), source.node_labels)
    if config.use_attn_loss:
        parts["attn"], parts["attn_layers"] = loss_attention_total(trace_s, z, config.gamma)
    if config.use_domain_loss and target is not None:
        H_t, _ = encode(target, leaves, L, K, config.slope)
        E_t = edge_embed(H_t, target.und_edges, config.edge_operator)
        parts["domain"] = loss_domain(
            domain_discriminate(E_s, leaves, lam, reverse),
            domain_discriminate(E_t, leaves, lam, reverse),
        )
    weights = LossWeights(config.effective_eta, config.effective_xi, lam, config.gamma)
    total = loss_total(parts["edge"], parts["node"], parts["attn"], parts["domain"], weights)
    return total, parts


def _report(parts, config, lam):
    val = lambda v: 0.0 if v is None else v.item()  # noqa: E731
    r = LossReport(
        l_node=val(parts["node"]),
        l_edge=val(parts["edge"]),
        l_attn=val(parts["attn"]),
        l_attn_layers=[v.item() for v in parts["attn_layers"]],
        l_domain=val(parts["domain"]),
    )
    r.l_total = r.l_edge + config.effective_eta * r.l_node + config.effective_xi * r.l_attn - lam * r.l_domain
    return r


def _check_source(source):
    if not source.is_labeled or source.node_labels is None:
        raise ValueError("source graph must carry node labels (edge labels are derived from them)")


def train(source: Graph, target: Graph, config: TrainConfig, params: ModelParams | None = None,
          trace_path=None):
    """Train on a labeled source and an unlabeled target.

    Target labels, if the graph carries them, are stripped before any loss is
    built and only used to score the periodic evaluations. Returns
    ``(ModelParams, [EpochTrace])``.
    """
    _check_source(source)
    eval_labels = target.edge_labels if target.is_labeled else None
    target = target.without_labels()
    if source.attr_dim != target.attr_dim:
        raise ValueError("source and target attribute dimensions differ")
    if params is None:
        params = init_params(config.seed, config.layers, config.heads, config.dim,
                             source.attr_dim, source.label_dim, config.edge_operator)
    else:
        params = params.copy()
    state = AdamState(config.beta1, config.beta2, config.adam_eps)
    history = []
    sink = open(trace_path, "w", encoding="utf-8") if trace_path else None
    try:
        for epoch in range(config.epochs):
            p = progress(epoch, config.epochs)
            mu = lr_schedule(p, config.mu0)
            lam = lambda_schedule(p, config.lambda_max) if config.use_domain_loss else 0.0
            try:
                leaves = {k: ad.parameter(v) for k, v in params.arrays.items()}
                total, parts = build_objective(leaves, source, target, config, lam)
                total.backward()
                grads = {k: v.grad for k, v in leaves.items() if v.grad is not None}
                rec = EpochTrace(epoch, p, mu, lam, _report(parts, config, lam))
                adam_step(params.arrays, grads, state, mu, config.weight_decay)
            except ad.NumericError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", history) from exc
            last = epoch == config.epochs - 1
            if eval_labels is not None and (last or (epoch + 1) % config.eval_every == 0):
                if 0 < eval_labels.sum() < len(eval_labels):
                    scores = predict_target(params, target, config.slope)
                    rec.auc, rec.ap = evaluate_target(scores, eval_labels)
            history.append(rec)
            if sink is not None:
                sink.write(json.dumps(rec.as_dict()) + "\n")
            log.debug("epoch %d total %.6f", epoch, rec.losses.l_total)
    finally:
        if sink is not None:
            sink.close()
    return params, history


def predict_target(params: ModelParams, target: Graph, slope=0.2):
    """P(homophilous) for every stored edge of ``target``."""
    leaves = {k: ad.constant(v) for k, v in params.arrays.items()}
    H, _ = encode(target, leaves, params.layers, params.heads, slope)
    E = edge_embed(H, target.und_edges, params.edge_operator)
    logits = edge_classify(E, leaves).data[:, 0]
    return ad.stable_sigmoid(logits)
