"""Reverse-mode tape: finite-difference checks for every operator, graph
traversal properties, and the Adam update against a reference implementation."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tgvdeconv import autodiff as ad
from tgvdeconv.core import conv_same_arr, pad_index_maps


def _fd_check(params, build, rel_tol=2e-6, h=1e-6):
    """Compare analytic gradients of the scalar ``build()`` against central
    differences, for each leaf in ``params`` (mutated in place)."""
    for p in params:
        p.grad = None
    out = build()
    out.backward()
    for p in params:
        assert p.grad is not None, "missing gradient"
        analytic = p.grad.copy()
        flat = p.value.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = float(build().value)
            flat[i] = old - h
            down = float(build().value)
            flat[i] = old
            numeric[i] = (up - down) / (2.0 * h)
        numeric = numeric.reshape(p.value.shape)
        denom = max(1.0, float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
        assert float(np.max(np.abs(analytic - numeric))) / denom <= rel_tol


def _weighted(out, weights):
    return ad.sum_all(ad.mul(out, ad.leaf(weights)))


# ---------------------------------------------------------------------------
# per-operator gradients
# ---------------------------------------------------------------------------

def test_arithmetic_gradients_with_broadcasting():
    rng = np.random.default_rng(0)
    a = ad.leaf(rng.standard_normal((3, 1)), requires_grad=True)
    b = ad.leaf(rng.standard_normal((3, 4)), requires_grad=True)
    w = rng.standard_normal((3, 4))
    _fd_check([a, b], lambda: _weighted(ad.add(a, b), w))
    _fd_check([a, b], lambda: _weighted(ad.sub(a, b), w))
    _fd_check([a, b], lambda: _weighted(ad.mul(a, b), w))


def test_scalar_nonlinearity_gradients():
    rng = np.random.default_rng(1)
    w = rng.standard_normal((2, 5))
    x = ad.leaf(rng.standard_normal((2, 5)), requires_grad=True)
    _fd_check([x], lambda: _weighted(ad.exp(x), w))
    _fd_check([x], lambda: _weighted(ad.sigmoid(x), w))
    _fd_check([x], lambda: _weighted(ad.silu(x), w))
    xpos = ad.leaf(rng.uniform(0.5, 2.0, (2, 5)), requires_grad=True)
    _fd_check([xpos], lambda: _weighted(ad.log(xpos), w))


def test_softmax_gradient():
    rng = np.random.default_rng(2)
    x = ad.leaf(rng.standard_normal(7), requires_grad=True)
    w = rng.standard_normal(7)
    _fd_check([x], lambda: _weighted(ad.softmax_vec(x), w))


def test_reshape_and_affine_gradients():
    rng = np.random.default_rng(3)
    x = ad.leaf(rng.standard_normal(6), requires_grad=True)
    w = ad.leaf(rng.standard_normal((4, 6)), requires_grad=True)
    b = ad.leaf(rng.standard_normal(4), requires_grad=True)
    wt = rng.standard_normal((2, 2))
    _fd_check([x, w, b],
              lambda: _weighted(ad.reshape(ad.affine(w, x, b), (2, 2)), wt))


def test_conv3x3_gradients_with_and_without_bias():
    rng = np.random.default_rng(4)
    x = ad.leaf(rng.standard_normal((2, 4, 4)), requires_grad=True)
    w = ad.leaf(rng.standard_normal((3, 18)) * 0.5, requires_grad=True)
    b = ad.leaf(rng.standard_normal(3), requires_grad=True)
    wt = rng.standard_normal((3, 4, 4))
    _fd_check([x, w, b], lambda: _weighted(ad.conv3x3(x, w, b), wt))
    _fd_check([x, w], lambda: _weighted(ad.conv3x3(x, w), wt))


def test_conv3x3_one_hot_weight_is_shift():
    # weight flat index ci*9 + a*3 + b picks x[ci, i+a-1, j+b-1], zero padded
    rng = np.random.default_rng(5)
    xv = rng.standard_normal((2, 5, 5))
    x = ad.leaf(xv)
    for ci, a, b in ((0, 0, 0), (1, 2, 1), (0, 1, 1)):
        w = np.zeros((1, 18))
        w[0, ci * 9 + a * 3 + b] = 1.0
        y = ad.conv3x3(x, ad.leaf(w)).value[0]
        xp = np.zeros((7, 7))
        xp[1:-1, 1:-1] = xv[ci]
        assert_allclose(y, xp[a:a + 5, b:b + 5])


def test_pool_upsample_gradients():
    rng = np.random.default_rng(6)
    x = ad.leaf(rng.standard_normal((2, 4, 4)), requires_grad=True)
    wt_small = rng.standard_normal((2, 2, 2))
    wt_big = rng.standard_normal((2, 8, 8))
    _fd_check([x], lambda: _weighted(ad.avgpool2(x), wt_small))
    _fd_check([x], lambda: _weighted(ad.upsample2(x), wt_big))


def test_avgpool2_rejects_odd_dims():
    with pytest.raises(ValueError):
        ad.avgpool2(ad.leaf(np.zeros((1, 3, 4))))


def test_upsample2_is_nearest_neighbour():
    x = ad.leaf(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    y = ad.upsample2(x).value
    assert_allclose(y[0, :2, :2], 1.0)
    assert_allclose(y[0, 2:, 2:], 4.0)


def test_channel_norm_gradients():
    rng = np.random.default_rng(7)
    x = ad.leaf(rng.standard_normal((3, 4, 4)) * 2.0, requires_grad=True)
    gain = ad.leaf(rng.uniform(0.5, 1.5, 3), requires_grad=True)
    bias = ad.leaf(rng.standard_normal(3), requires_grad=True)
    wt = rng.standard_normal((3, 4, 4))
    _fd_check([x, gain, bias],
              lambda: _weighted(ad.channel_norm(x, gain, bias), wt),
              rel_tol=5e-6)


def test_channel_norm_standardizes_per_channel():
    rng = np.random.default_rng(8)
    x = ad.leaf(rng.standard_normal((2, 8, 8)) * 3.0 + 1.0)
    y = ad.channel_norm(x, ad.leaf(np.ones(2)), ad.leaf(np.zeros(2))).value
    for c in range(2):
        assert abs(float(y[c].mean())) <= 1e-12
        assert abs(float(y[c].std()) - 1.0) <= 1e-4  # eps-regularized variance


def test_concat_and_gather_gradients():
    rng = np.random.default_rng(9)
    a = ad.leaf(rng.standard_normal((2, 3, 3)), requires_grad=True)
    b = ad.leaf(rng.standard_normal((1, 3, 3)), requires_grad=True)
    wt = rng.standard_normal((3, 3, 3))
    _fd_check([a, b], lambda: _weighted(ad.concat_c(a, b), wt))

    x = ad.leaf(rng.standard_normal((4, 5)), requires_grad=True)
    idx = np.array([0, 2, 2, 3])  # repeated index exercises scatter-add
    wt0 = rng.standard_normal((4, 5))
    wt1 = rng.standard_normal((4, 4))
    _fd_check([x], lambda: _weighted(ad.index_axis(x, idx, 0), wt0))
    _fd_check([x], lambda: _weighted(ad.index_axis(x, idx, 1), wt1))
    with pytest.raises(ValueError):
        ad.index_axis(x, idx, 2)


@pytest.mark.parametrize("boundary", ["circular", "replicate"])
def test_conv_image_kernel_value_and_gradients(boundary):
    rng = np.random.default_rng(10)
    uv = rng.random((6, 6))
    kv = rng.random((3, 3))
    kv /= kv.sum()
    pi_r, pi_c = pad_index_maps((6, 6), 3, boundary)
    u = ad.leaf(uv, requires_grad=True)
    k = ad.leaf(kv, requires_grad=True)
    got = ad.conv_image_kernel(u, k, pi_r, pi_c).value
    assert_allclose(got, conv_same_arr(uv, kv, boundary), atol=1e-13)
    wt = rng.standard_normal((6, 6))
    _fd_check([u, k], lambda: _weighted(ad.conv_image_kernel(u, k, pi_r, pi_c), wt))


# ---------------------------------------------------------------------------
# graph traversal
# ---------------------------------------------------------------------------

def test_diamond_graph_accumulates_both_paths():
    x = ad.leaf(np.array(3.0), requires_grad=True)
    y = ad.mul(x, x)  # both parents are the same node
    y.backward()
    assert_allclose(x.grad, 6.0)


def test_shared_subexpression_counted_once_per_consumer():
    x = ad.leaf(np.array([1.0, -2.0]), requires_grad=True)
    s = ad.silu(x)
    out = ad.sum_all(ad.add(s, s))
    out.backward()
    sv = 1.0 / (1.0 + np.exp(-x.value))
    expected = 2.0 * (sv + x.value * sv * (1.0 - sv))
    assert_allclose(x.grad, expected, atol=1e-12)


def test_deep_chain_does_not_recurse():
    x = ad.leaf(np.array(0.5), requires_grad=True)
    t = x
    for _ in range(5000):
        t = ad.add(t, ad.leaf(np.array(0.0)))
    ad.sum_all(t).backward()
    assert_allclose(x.grad, 1.0)


def test_requires_grad_gating():
    x = ad.leaf(np.ones(3), requires_grad=True)
    c = ad.leaf(np.ones(3))  # constant
    out = ad.sum_all(ad.mul(x, c))
    out.backward()
    assert c.grad is None
    assert_allclose(x.grad, np.ones(3))


def test_backward_requires_scalar_root():
    x = ad.leaf(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        ad.add(x, x).backward()


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def test_adam_matches_reference_trajectory():
    rng = np.random.default_rng(11)
    p0 = rng.standard_normal(5)
    grads = [rng.standard_normal(5) for _ in range(20)]

    p = ad.leaf(p0.copy(), requires_grad=True)
    opt = ad.Adam([p], lr=0.05)
    for gval in grads:
        opt.zero_grad()
        p.grad = gval.copy()
        opt.step()

    ref = p0.copy()
    m = np.zeros(5)
    v = np.zeros(5)
    for t, gval in enumerate(grads, start=1):
        m = 0.9 * m + 0.1 * gval
        v = 0.999 * v + 0.001 * gval * gval
        mhat = m / (1.0 - 0.9 ** t)
        vhat = v / (1.0 - 0.999 ** t)
        ref -= 0.05 * mhat / (np.sqrt(vhat) + 1e-8)
    assert_allclose(p.value, ref, atol=1e-12)


def test_adam_skips_missing_gradients():
    p = ad.leaf(np.array([1.0, 2.0]), requires_grad=True)
    opt = ad.Adam([p], lr=0.1)
    opt.zero_grad()
    opt.step()
    assert_allclose(p.value, [1.0, 2.0])
