import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taperprune import build, build_polynomial, count_macs, eval_F, extract, grad_F
from taperprune.graph import GraphSpec, GraphSpecError, build_extracted
from taperprune.harness.models import grouped_cnn_spec, toy_cnn_spec
from taperprune.resources import (
    F_of_masks,
    ResourcePolynomial,
    Segment,
    grad_w,
    segment_fractions,
    site_fractions,
)


def two_site_chain():
    layers = [
        {"name": "conv0", "kind": "conv", "out_channels": 16, "kernel": 3, "pad": 1},
        {"name": "conv1", "kind": "conv", "out_channels": 32, "kernel": 3, "pad": 1},
        {"name": "conv2", "kind": "conv", "out_channels": 4, "kernel": 1},
        {"name": "flatten", "kind": "flatten"},
        {"name": "fc", "kind": "dense", "out_features": 3},
    ]
    sites = [{"name": "a", "at": "conv0"}, {"name": "b", "at": "conv1"}]
    return GraphSpec((3, 8, 8), layers, sites)


def toy_oracle(p, widths=(32, 32, 32), size=16, in_ch=3, classes=10):
    """Expected MACs of the toy CNN by per-layer summation of retention probabilities."""
    total = 0.0
    cin_sum = float(in_ch)
    s = size
    for i, w in enumerate(widths, start=1):
        out_sum = float(np.sum(p[f"site{i}"]))
        total += 9 * s * s * cin_sum * out_sum
        cin_sum = out_sum
        s //= 2
    total += cin_sum * s * s * classes
    return total


def test_conv_quadratic_coefficient():
    poly = build_polynomial(build(two_site_chain()))
    labels = dict(((t, v), c) for t, v, c in poly.coefficient_table())
    assert labels[("F", "a*b")] == 16 * 32 * 9 * 64 == 294_912


def test_all_open_equals_naive_mac_count():
    for spec in (toy_cnn_spec(), two_site_chain(), grouped_cnn_spec()):
        g = build(spec)
        poly = build_polynomial(g)
        assert poly.total() == count_macs(g)


def test_single_quadratic_term_at_half():
    poly = ResourcePolynomial([Segment("a", 0, 4), Segment("b", 0, 2)], {(0, 1): 800.0}, {}, 0.0, {"a": 4, "b": 2})
    assert eval_F(poly, [0.5, 0.5]) == 200.0


def test_closed_site_kills_linear_layer():
    layers = [
        {"name": "conv0", "kind": "conv", "out_channels": 4, "kernel": 3, "pad": 1},
        {"name": "conv1", "kind": "conv", "out_channels": 2, "kernel": 3, "pad": 1},
    ]
    g = build(GraphSpec((1, 4, 4), layers, [{"name": "a", "at": "conv0"}]))
    poly = build_polynomial(g)
    assert F_of_masks(poly, {"a": np.zeros(4)}) == 0.0
    assert F_of_masks(poly, {"a": np.ones(4)}) == count_macs(g)


@pytest.mark.parametrize("seed", range(10))
def test_random_fractions_vs_summation_oracle(seed):
    g = build(toy_cnn_spec())
    poly = build_polynomial(g)
    rng = np.random.default_rng(seed)
    p = {s: rng.random(32) for s in g.site_names}
    assert eval_F(poly, segment_fractions(poly, p)) == pytest.approx(toy_oracle(p), rel=1e-12)


def test_grad_single_term_by_hand():
    poly = ResourcePolynomial([Segment("a", 0, 4), Segment("b", 0, 2)], {(0, 1): 800.0}, {}, 0.0, {"a": 4, "b": 2})
    g = grad_F(poly, {"a": np.full(4, 0.3), "b": np.array([0.2, 0.6])})
    np.testing.assert_allclose(g["a"], 800.0 * 0.4 / 4)
    np.testing.assert_allclose(g["b"], 800.0 * 0.3 / 2)


def test_grad_linear_only_site():
    poly = ResourcePolynomial([Segment("a", 0, 5)], {}, {0: 250.0}, 7.0, {"a": 5})
    np.testing.assert_allclose(grad_F(poly, {"a": np.full(5, 0.9)})["a"], 50.0)


def _fd_grad_p(poly, p, step=1e-6):
    out = {}
    for s, v in p.items():
        g = np.zeros_like(v)
        for c in range(v.size):
            up = {k: a.copy() for k, a in p.items()}
            dn = {k: a.copy() for k, a in p.items()}
            up[s][c] += step
            dn[s][c] -= step
            g[c] = (eval_F(poly, segment_fractions(poly, up)) - eval_F(poly, segment_fractions(poly, dn))) / (2 * step)
        out[s] = g
    return out


@pytest.mark.parametrize("spec_fn", [toy_cnn_spec, grouped_cnn_spec])
@pytest.mark.parametrize("seed", range(3))
def test_grad_F_finite_differences(spec_fn, seed):
    g = build(spec_fn())
    poly = build_polynomial(g)
    rng = np.random.default_rng(seed)
    p = {s: rng.random(g.site_channels[s]) for s in g.site_names}
    analytic = grad_F(poly, p)
    numeric = _fd_grad_p(poly, p)
    for s in p:
        np.testing.assert_allclose(analytic[s], numeric[s], rtol=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_F_monotone_in_each_fraction(data):
    poly = build_polynomial(build(toy_cnn_spec()))
    n = len(poly.segments)
    w = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n)))
    gw = grad_w(poly, w)
    assert np.all(gw >= 0)
    i = data.draw(st.integers(0, n - 1))
    w2 = w.copy()
    w2[i] = min(1.0, w[i] + data.draw(st.floats(0, 1)))
    assert eval_F(poly, w2) >= eval_F(poly, w)


def test_coefficients_non_negative():
    for spec in (toy_cnn_spec(), grouped_cnn_spec(), two_site_chain()):
        poly = build_polynomial(build(spec))
        assert all(c >= 0 for _, _, c in poly.coefficient_table())


@pytest.mark.parametrize("spec_fn", [toy_cnn_spec, grouped_cnn_spec])
def test_integer_masks_equal_extracted_macs(spec_fn):
    g = build(spec_fn())
    poly = build_polynomial(g)
    rng = np.random.default_rng(11)
    for _ in range(20):
        masks = {s: rng.random(g.site_channels[s]) < 0.6 for s in g.site_names}
        for m in masks.values():
            m[rng.integers(m.size)] = True
        conf, dense = extract(g, masks)
        assert F_of_masks(poly, masks) == count_macs(build_extracted(conf, dense))


def test_weight_count_builder():
    g = build(toy_cnn_spec())
    poly = build_polynomial(g, resource="weights")
    from taperprune.graph import count_weights

    assert poly.total() == count_weights(g)
    assert poly.unit == "weight"


def test_site_fractions():
    g = build(toy_cnn_spec())
    g.sites["site1"].rho[:16] = -12.0
    w = site_fractions(g.sites)
    assert w["site1"] == pytest.approx(0.5, abs=1e-4)
    assert w["site2"] == pytest.approx(1.0, abs=1e-4)


def test_channel_claimed_by_two_sites():
    layers = [
        {"name": "conv0", "kind": "conv", "out_channels": 4, "kernel": 3, "pad": 1},
        {"name": "relu0", "kind": "relu"},
        {"name": "conv1", "kind": "conv", "out_channels": 2, "kernel": 3, "pad": 1},
    ]
    sites = [{"name": "a", "at": "conv0"}, {"name": "b", "at": "relu0"}]
    with pytest.raises(GraphSpecError, match="two sites"):
        build(GraphSpec((1, 4, 4), layers, sites))
