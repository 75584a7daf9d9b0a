import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgasn.metrics import (
    UndefinedMetricError,
    attention_histograms,
    auc,
    average_precision,
    evaluate_target,
    export_attention_histograms,
)


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def sweep_ap(scores, labels):
    """Walk thresholds from the top distinct score down, adding (ΔR)·P."""
    n_pos = sum(labels)
    ap, prev_recall = 0.0, 0.0
    for t in sorted(set(scores), reverse=True):
        chosen = [y for s, y in zip(scores, labels) if s >= t]
        tp = sum(chosen)
        recall = tp / n_pos
        ap += (recall - prev_recall) * (tp / len(chosen))
        prev_recall = recall
    return ap


def random_instance(rng):
    n = int(rng.integers(2, 101))
    # coarse grid forces ties
    scores = rng.integers(0, int(rng.integers(2, 12)), size=n) / 10.0
    labels = rng.integers(0, 2, size=n)
    labels[0], labels[1] = 1, 0
    return scores, labels


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.3] * 5, [1, 0, 1, 0, 0]) == 0.5


def test_ap_examples():
    assert average_precision([0.9, 0.1], [1, 0]) == 1.0
    labels = [1, 0, 0, 1, 0, 0, 0, 0]
    assert average_precision([0.4] * 8, labels) == pytest.approx(2 / 8, abs=1e-15)


def test_metrics_match_oracles_50(rng):
    scores = rng.random(50).round(1)
    labels = rng.integers(0, 2, 50)
    assert abs(auc(scores, labels) - pairwise_auc(scores, labels)) <= 1e-12
    assert abs(average_precision(scores, labels) - sweep_ap(list(scores), list(labels))) <= 1e-12


def test_metrics_match_oracles_many(rng):
    for _ in range(200):
        s, y = random_instance(rng)
        assert abs(auc(s, y) - pairwise_auc(s, y)) <= 1e-12
        assert abs(average_precision(s, y) - sweep_ap(list(s), list(y))) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=2, max_size=40), st.randoms(use_true_random=False))
def test_auc_invariant_to_monotone_transform(grid, rnd):
    scores = [g / 1000 for g in grid]
    labels = [rnd.randint(0, 1) for _ in scores]
    labels[0], labels[1] = 1, 0
    s = np.array(scores)
    assert auc(s, labels) == pytest.approx(auc(np.exp(3 * s) - 2, labels), abs=1e-12)


def test_ap_of_shuffled_ties_is_prevalence(rng):
    for _ in range(20):
        y = rng.permutation(np.r_[np.ones(7), np.zeros(23)].astype(int))
        assert average_precision(np.full(30, 0.25), y) == pytest.approx(7 / 30, abs=1e-15)


def test_undefined_metrics():
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        average_precision([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        auc([0.1], [1, 0])


def test_evaluate_target_heterophilous_positive(rng):
    z = rng.integers(0, 2, 60)
    z[:2] = [0, 1]
    hom = rng.random(60).round(2)
    a, p = evaluate_target(hom, z)
    assert a == pytest.approx(pairwise_auc(1 - hom, 1 - z), abs=1e-12)
    assert p == pytest.approx(sweep_ap(list(1 - hom), list(1 - z)), abs=1e-12)


def test_evaluate_target_perfect_and_flipped(rng):
    z = np.array([1, 1, 0, 1, 0, 1])
    assert evaluate_target(z.astype(float), z) == (1.0, 1.0)
    hom = rng.random(6)
    a, _ = evaluate_target(hom, z)
    a_flip, _ = evaluate_target(1 - hom, z)
    assert a + a_flip == pytest.approx(1.0, abs=1e-12)


def test_uninformative_ap_equals_heterophilous_prevalence():
    # ACMv9 as target: 1673 heterophilous among 13883 + 1673 labeled edges
    z = np.r_[np.ones(13883), np.zeros(1673)].astype(int)
    _, ap = evaluate_target(np.full(z.size, 0.5), z)
    assert ap == pytest.approx(1673 / 15556, abs=1e-15)
    assert ap == pytest.approx(0.1075, abs=1e-4)


def test_histogram_spike_and_conservation(tmp_path):
    logits = np.zeros((2, 5, 2))
    labels = np.array([1, 1, 0, 1, 0])
    rows = export_attention_histograms([("source", logits, labels)], tmp_path / "h.csv")
    homo = [r for r in rows if r[1] == "homophilous"]
    hetero = [r for r in rows if r[1] == "heterophilous"]
    assert len(homo) == len(hetero) == 50
    assert sum(r[4] for r in homo) == 3 and sum(r[4] for r in hetero) == 2
    spike = [r for r in homo if r[4]]
    assert len(spike) == 1 and spike[0][2] <= 0.5 < spike[0][3]
    text = (tmp_path / "h.csv").read_text().splitlines()
    assert text[0] == "network,class,bin_lo,bin_hi,count"
    assert len(text) == 101


def test_histogram_conservation_random(rng):
    logits = rng.normal(size=(3, 40, 2)) * 4
    labels = rng.integers(0, 2, 40)
    rows = attention_histograms([("s", logits, labels), ("t", logits[:, :10], labels[:10])])
    for net, n_edges in (("s", 40), ("t", 10)):
        assert sum(r[4] for r in rows if r[0] == net) == n_edges
