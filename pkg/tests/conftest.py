from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from dgasn.graph import Graph, SynthParams, synth_pair


def central_difference(f, x, eps=1e-5):
    """Gradient of scalar ``f`` at array ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def random_graph(rng, n, p=0.4, attr_dim=5, classes=3, labeled=True):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    pairs = np.column_stack([iu[keep], ju[keep]])
    X = (rng.random((n, attr_dim)) < 0.5).astype(float)
    Y = None
    if labeled:
        Y = np.zeros((n, classes), dtype=int)
        Y[np.arange(n), rng.integers(0, classes, n)] = 1
    return Graph(n, sp.csr_matrix(X), pairs, Y)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_pair():
    params = SynthParams(nodes=12, classes=3, attr_dim=9, p_in=0.35, p_out=0.15)
    return synth_pair(3, params)


STANDARD_SEEDS = range(5)


@pytest.fixture(scope="session")
def standard_runs():
    """Desk config on the standard pair, 5 seeds x {full, no_attn, no_domain}.

    Shared by the acceptance suite and the trainer tests; each entry holds the
    final target AUC, the source attention gap and the edge-loss history.
    """
    from dgasn import autodiff as ad
    from dgasn.encoder import encode
    from dgasn.metrics import attention_scores
    from dgasn.presets import DESK, STANDARD_PAIR
    from dgasn.trainer import TrainConfig, ablation_config, train

    base = TrainConfig(eval_every=10**9, **DESK)
    runs = {}
    for variant in ("full", "no_attn", "no_domain"):
        for seed in STANDARD_SEEDS:
            source, target = synth_pair(seed, STANDARD_PAIR)
            config = replace(ablation_config(base, variant), seed=seed)
            params, history = train(source, target, config)
            leaves = {k: ad.constant(v) for k, v in params.arrays.items()}
            _, trace = encode(source, leaves, params.layers, params.heads)
            score = attention_scores(trace.numpy())
            z = source.edge_labels
            runs[variant, seed] = {
                "auc": history[-1].auc,
                "gap": float(score[z == 1].mean() - score[z == 0].mean()),
                "l_edge": [r.losses.l_edge for r in history],
            }
    return runs


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
