import numpy as np
import pytest

from dgasn import autodiff as ad
from dgasn.diagnostics import GradcheckReport, _domain_grads, tiny_pair
from dgasn.model import init_params
from dgasn.trainer import TrainConfig


def grads(lam, reverse):
    source, target = tiny_pair(0)
    params = init_params(0, 2, 2, 4, source.attr_dim, source.label_dim)
    g = _domain_grads(params.arrays, source, target.without_labels(), TrainConfig(layers=2, heads=2, dim=4),
                      lam, reverse)
    return params, g


def test_lambda_zero_blocks_encoder_exactly():
    params, g = grads(0.0, True)
    for k in params.names("encoder"):
        assert not np.any(g[k])
    assert any(np.any(g[k]) for k in params.names("domain"))


def test_reversal_is_seed_stable():
    _, a = grads(0.1, True)
    _, b = grads(0.1, True)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_node_cap():
    with pytest.raises(ValueError):
        tiny_pair(0, nodes=51)


def test_report_pass_logic():
    good = GradcheckReport(1e-6, 2e-6, 1e-18, True, 1e-3, 0.1, checked=1000, kinks=3)
    assert good.passed and good.worst == 2e-6
    assert not GradcheckReport(1e-3, 0, 0, True, 0, 0.1, 1000, 0).passed
    assert not GradcheckReport(0, 0, 0, False, 0, 0.1, 1000, 0).passed
    assert not GradcheckReport(0, 0, 0, True, 0, 0.1, 100, 5).passed
    assert good.lines()[-1].startswith("worst relative error")


def test_kink_straddling_entries_are_set_aside():
    # relu(x) at x = 3e-6 sits inside the +/-1e-5 stencil
    def f(leaves):
        return ad.sum_all(ad.relu(leaves["x"]))

    x = {"x": np.array([[3e-6, 0.5]])}
    assert ad.check_gradients(f, x, floor=0.0) > 0.1
    worst, checked, kinks = ad.gradient_errors(f, x, floor=0.0, kink_curvature=1.0)
    assert (checked, kinks) == (1, 1) and worst < 1e-9


def test_wrong_gradient_is_not_mistaken_for_kink():
    def bad_square(a):
        return ad.Value(a.data ** 2, (a,), lambda g: [3.0 * a.data * g], "bad")

    def f(leaves):
        return ad.sum_all(bad_square(leaves["x"]))

    worst, checked, kinks = ad.gradient_errors(f, {"x": np.array([[0.7, -1.2]])}, kink_curvature=1e3)
    assert kinks == 0 and checked == 2 and worst > 0.3
