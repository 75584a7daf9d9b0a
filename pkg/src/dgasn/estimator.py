"""scikit-learn style wrapper around the training loop.

``fit`` takes the labeled source graph and the unlabeled target graph;
prediction methods score the stored edges of any graph with the same
attribute dimension.
"""
from __future__ import annotations

from dataclasses import fields

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import autodiff as ad
from .encoder import encode
from .graph import Graph
from .metrics import evaluate_target
from .trainer import TrainConfig, predict_target, train

_CONFIG_FIELDS = [f.name for f in fields(TrainConfig)]


def check_graph(graph, require_labels=False, attr_dim=None, name="graph"):
    if not isinstance(graph, Graph):
        raise TypeError(f"{name} must be a Graph, got {type(graph).__name__}")
    if require_labels and (graph.node_labels is None or not graph.is_labeled):
        raise ValueError(f"{name} must carry node labels")
    if attr_dim is not None and graph.attr_dim != attr_dim:
        raise ValueError(f"{name} has {graph.attr_dim} attributes, expected {attr_dim}")
    return graph


class DGASNClassifier(ClassifierMixin, BaseEstimator):
    """Cross-network edge classifier (1 = homophilous, 0 = heterophilous).

    Constructor arguments mirror :class:`~dgasn.trainer.TrainConfig`.
    """

    def __init__(self, layers=2, heads=4, dim=16, eta=1.0, xi=0.1, gamma=5.0, lambda_max=0.1,
                 mu0=1e-3, weight_decay=1e-3, epochs=200, seed=0, edge_operator="concatenate",
                 use_node_loss=True, use_edge_loss=True, use_attn_loss=True, use_domain_loss=True,
                 slope=0.2, beta1=0.9, beta2=0.999, adam_eps=1e-8, eval_every=10):
        self.layers = layers
        self.heads = heads
        self.dim = dim
        self.eta = eta
        self.xi = xi
        self.gamma = gamma
        self.lambda_max = lambda_max
        self.mu0 = mu0
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.seed = seed
        self.edge_operator = edge_operator
        self.use_node_loss = use_node_loss
        self.use_edge_loss = use_edge_loss
        self.use_attn_loss = use_attn_loss
        self.use_domain_loss = use_domain_loss
        self.slope = slope
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.eval_every = eval_every

    def to_config(self):
        return TrainConfig(**{k: getattr(self, k) for k in _CONFIG_FIELDS})

    def fit(self, source, target):
        check_graph(source, require_labels=True, name="source")
        check_graph(target, attr_dim=source.attr_dim, name="target")
        self.params_, self.history_ = train(source, target, self.to_config())
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = source.attr_dim
        return self

    def decision_function(self, graph):
        """P(homophilous) per stored edge."""
        check_is_fitted(self, "params_")
        check_graph(graph, attr_dim=self.n_features_in_)
        return predict_target(self.params_, graph, self.slope)

    def predict_proba(self, graph):
        p = self.decision_function(graph)
        return np.column_stack([1.0 - p, p])

    def predict(self, graph):
        return (self.decision_function(graph) >= 0.5).astype(np.int64)

    def transform(self, graph):
        """Final-layer node embeddings ``(n, heads * dim)``."""
        check_is_fitted(self, "params_")
        check_graph(graph, attr_dim=self.n_features_in_)
        leaves = {k: ad.constant(v) for k, v in self.params_.arrays.items()}
        H, _ = encode(graph, leaves, self.params_.layers, self.params_.heads, self.slope)
        return H.data

    def score(self, graph, y=None):
        """Target AUC with heterophilous edges as positives."""
        labels = graph.edge_labels if y is None else np.asarray(y)
        if labels is None:
            raise ValueError("score needs edge labels")
        return evaluate_target(self.decision_function(graph), labels)[0]
