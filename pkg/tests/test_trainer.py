import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from dgasn import autodiff as ad
from dgasn.graph import Graph
from dgasn.model import init_params
from dgasn.trainer import (
    AdamState,
    TrainConfig,
    TrainingDiverged,
    ablation_config,
    adam_step,
    build_objective,
    lambda_schedule,
    lr_schedule,
    predict_target,
    progress,
    train,
)

SMALL = TrainConfig(layers=2, heads=2, dim=4, epochs=6, eval_every=3)


def test_schedules_endpoints():
    assert lr_schedule(0.0) == 1e-3
    assert lr_schedule(1.0) == pytest.approx(1e-3 / 11 ** 0.75, rel=1e-14)
    assert lr_schedule(1.0) == pytest.approx(1.6556e-4, abs=1e-8)
    assert lambda_schedule(0.0) == 0.0
    assert lambda_schedule(1.0) == pytest.approx(0.0999909, abs=1e-7)
    assert lambda_schedule(0.5) == pytest.approx(0.0986614, abs=1e-7)


def test_schedules_monotone():
    p = np.linspace(0, 1, 101)
    lr = [lr_schedule(x) for x in p]
    lam = [lambda_schedule(x) for x in p]
    assert all(a > b for a, b in zip(lr, lr[1:]))
    assert all(a < b for a, b in zip(lam, lam[1:]))
    assert max(lam) < 0.1


def test_progress():
    assert progress(0, 200) == 0.0 and progress(199, 200) == 1.0
    assert progress(0, 1) == 0.0


def test_adam_first_step_moves_by_lr():
    theta = {"w": np.array([[1.0, -2.0, 3.0]])}
    adam_step(theta, {"w": np.array([[0.5, -4.0, 1e-3]])}, AdamState(), lr=0.01)
    np.testing.assert_allclose(theta["w"], [[0.99, -1.99, 2.99]], atol=1e-6)


def test_adam_zero_gradient_no_decay_is_noop():
    theta = {"w": np.array([[1.0, 2.0]])}
    adam_step(theta, {}, AdamState(), lr=0.1)
    np.testing.assert_array_equal(theta["w"], [[1.0, 2.0]])


def test_adam_decay_only_shrinks():
    theta = {"w": np.array([[1.0, -2.0]])}
    adam_step(theta, {}, AdamState(), lr=0.1, weight_decay=0.01)
    assert np.all(np.abs(theta["w"]) < [[1.0, 2.0]])


def test_adam_rejects_nan():
    with pytest.raises(ad.NumericError, match="w"):
        adam_step({"w": np.ones((1, 1))}, {"w": np.array([[np.nan]])}, AdamState(), lr=0.1)


def test_adam_rejects_non_finite_update():
    with pytest.raises(ad.NumericError, match="w"):
        adam_step({"w": np.array([[-1e308]])}, {"w": np.array([[1.0]])}, AdamState(), lr=1e308)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(edge_operator="cosine")
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        ablation_config(TrainConfig(), "no_everything")


def test_training_is_deterministic(tiny_pair):
    s, t = tiny_pair
    p1, h1 = train(s, t, SMALL)
    p2, h2 = train(s, t, SMALL)
    for a, b in zip(h1, h2):
        assert abs(a.losses.l_total - b.losses.l_total) <= 1e-12
    for k in p1.arrays:
        np.testing.assert_array_equal(p1.arrays[k], p2.arrays[k])


def test_target_labels_never_reach_the_loss(tiny_pair):
    s, t = tiny_pair
    rng = np.random.default_rng(0)
    shuffled = Graph(t.n, t.attrs, t.und_edges, t.node_labels[rng.permutation(t.n)])
    p1, h1 = train(s, t, replace(SMALL, eval_every=100))
    p2, h2 = train(s, shuffled, replace(SMALL, eval_every=100))
    assert [r.losses.l_total for r in h1] == [r.losses.l_total for r in h2]
    for k in p1.arrays:
        np.testing.assert_array_equal(p1.arrays[k], p2.arrays[k])


def test_domain_off_ignores_target_attributes(tiny_pair):
    s, t = tiny_pair
    flipped = Graph(t.n, sp.csr_matrix(1.0 - t.attrs.toarray()), t.und_edges, t.node_labels)
    cfg = replace(SMALL, use_domain_loss=False)
    p1, _ = train(s, t, cfg)
    p2, _ = train(s, flipped, cfg)
    for k in p1.arrays:
        np.testing.assert_array_equal(p1.arrays[k], p2.arrays[k])


def test_history_records_schedules(tiny_pair):
    s, t = tiny_pair
    _, h = train(s, t, SMALL)
    assert [r.epoch for r in h] == list(range(6))
    assert h[0].lambda_p == 0.0 and h[0].mu_p == SMALL.mu0
    assert h[-1].p == 1.0
    assert h[2].auc is not None and h[5].auc is not None and h[0].auc is None


def test_reported_total_subtracts_domain(tiny_pair):
    s, t = tiny_pair
    _, h = train(s, t, SMALL)
    r = h[-1]
    expected = r.losses.l_edge + r.losses.l_node + 0.1 * r.losses.l_attn - r.lambda_p * r.losses.l_domain
    assert r.losses.l_total == pytest.approx(expected, rel=1e-14)


def _grads(cfg, s, t, lam, params):
    leaves = {k: ad.parameter(v) for k, v in params.arrays.items()}
    total, parts = build_objective(leaves, s, t.without_labels(), cfg, lam)
    total.backward()
    return leaves, parts


def test_zero_weights_leave_only_edge_gradient(tiny_pair):
    s, t = tiny_pair
    cfg = replace(SMALL, eta=0.0, xi=0.0)
    params = init_params(0, 2, 2, 4, s.attr_dim, s.label_dim)
    leaves, _ = _grads(cfg, s, t, 0.0, params)
    assert all(leaves[k].grad is None or not leaves[k].grad.any() for k in params.names("node"))
    assert all(not leaves[k].grad.any() for k in params.names("encoder") if leaves[k].grad is not None) is False


def test_discriminator_sees_only_domain_loss(tiny_pair):
    s, t = tiny_pair
    params = init_params(0, 2, 2, 4, s.attr_dim, s.label_dim)
    full, _ = _grads(SMALL, s, t, 0.07, params)
    leaves = {k: ad.parameter(v) for k, v in params.arrays.items()}
    _, parts = build_objective(leaves, s, t.without_labels(), SMALL, 0.07)
    parts["domain"].backward()
    for k in params.names("domain"):
        np.testing.assert_array_equal(full[k].grad, leaves[k].grad)


def test_predict_with_zero_edge_head_is_half(tiny_pair):
    s, _ = tiny_pair
    params = init_params(0, 2, 2, 4, s.attr_dim, s.label_dim)
    for k in params.names("edge"):
        params.arrays[k][:] = 0.0
    np.testing.assert_array_equal(predict_target(params, s), 0.5)


def test_divergence_raises_with_history(tiny_pair):
    s, t = tiny_pair
    params = init_params(0, 2, 2, 4, s.attr_dim, s.label_dim)
    params.arrays["encoder/l0/h0/W"][0, 0] = np.inf
    with pytest.raises(TrainingDiverged) as info:
        train(s, t, SMALL, params=params)
    assert info.value.history == []


def test_trace_file(tiny_pair, tmp_path):
    import json

    s, t = tiny_pair
    train(s, t, SMALL, trace_path=tmp_path / "t.jsonl")
    rows = [json.loads(x) for x in (tmp_path / "t.jsonl").read_text().splitlines()]
    assert len(rows) == 6
    assert {"epoch", "p", "mu_p", "lambda_p", "l_edge", "l_total", "auc", "ap"} <= set(rows[0])
    assert not math.isnan(rows[-1]["l_total"])


def test_edge_loss_halves_on_standard_pair(standard_runs):
    from conftest import STANDARD_SEEDS

    for seed in STANDARD_SEEDS:
        losses = standard_runs["full", seed]["l_edge"]
        assert len(losses) == 200
        assert losses[-1] <= 0.5 * losses[0], (seed, losses[0], losses[-1])
