"""Backend parity: the compiled core must agree with the pure fallback."""

import math

import numpy as np
import pytest

from adcsd import _kernels
from adcsd._kernels import _fallback

compiled = pytest.importorskip("adcsd._kernels._core", reason="compiled core not built")


def net_params(rng, d_in, d_h, dtype):
    return (
        rng.normal(size=(d_h, d_in)).astype(dtype),
        rng.normal(size=d_h).astype(dtype),
        (1.0 + 0.1 * rng.normal(size=d_h)).astype(dtype),
        rng.normal(size=d_h).astype(dtype),
        rng.normal(size=(d_in, d_h)).astype(dtype),
        rng.normal(size=d_in).astype(dtype),
    )


@pytest.mark.parametrize("act", [0, 1])
def test_forward_backward_parity_f64(rng, act):
    w1, b1, gain, bias, w2, b2 = net_params(rng, 6, 16, np.float64)
    x = rng.normal(size=(13, 6))
    dy = rng.normal(size=(13, 6))
    op = _fallback.net_forward(x, w1, b1, gain, bias, w2, b2, 1e-5, act)
    oc = compiled.net_forward(x, w1, b1, gain, bias, w2, b2, 1e-5, act)
    for a, b in zip(op, oc):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-13)
    bp = _fallback.net_backward(x, w1, gain, w2, *op[1:], dy)
    bc = compiled.net_backward(x, w1, gain, w2, *oc[1:], dy)
    for a, b in zip(bp, bc):
        assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("act", [0, 1])
def test_forward_parity_f32(rng, act):
    w1, b1, gain, bias, w2, b2 = net_params(rng, 6, 16, np.float32)
    x = rng.normal(size=(9, 6)).astype(np.float32)
    op = _fallback.net_forward(x, w1, b1, gain, bias, w2, b2, 1e-5, act)
    oc = compiled.net_forward(x, w1, b1, gain, bias, w2, b2, 1e-5, act)
    for a, b in zip(op, oc):
        assert a.dtype == b.dtype == np.float32
        assert np.allclose(a, b, rtol=1e-4, atol=1e-5)


def test_moving_average_parity_and_brute_force(rng):
    vals = rng.normal(size=(4, 11, 2))
    mask = rng.random((4, 11, 2)) > 0.3
    for kernel in (1, 3, 5, 7):
        tp = _fallback.moving_average(vals, mask, kernel)
        tc = compiled.moving_average(vals, mask, kernel)
        assert np.allclose(tp, tc, rtol=1e-13, atol=1e-15)
        # brute force with explicit replicate padding
        pad = (kernel - 1) // 2
        for n in range(4):
            for c in range(2):
                v = np.concatenate([[vals[n, 0, c]] * pad, vals[n, :, c], [vals[n, -1, c]] * pad])
                m = np.concatenate([[mask[n, 0, c]] * pad, mask[n, :, c], [mask[n, -1, c]] * pad])
                for t in range(11):
                    win_v = v[t : t + kernel]
                    win_m = m[t : t + kernel].astype(bool)
                    want = win_v[win_m].mean() if win_m.any() else 0.0
                    assert tp[n, t, c] == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_adam_parity(rng):
    # f32 tolerance reflects the compiled path's double-precision intermediates
    for dtype, rtol in ((np.float64, 1e-14), (np.float32, 3e-5)):
        p1 = rng.normal(size=64).astype(dtype)
        p2 = p1.copy()
        m1 = np.zeros(64, dtype)
        v1 = np.zeros(64, dtype)
        m2 = m1.copy()
        v2 = v1.copy()
        for step in range(1, 4):
            g = rng.normal(size=64).astype(dtype)
            _fallback.adam_update(p1, g, m1, v1, step, 1e-3, 0.9, 0.999, 1e-8)
            compiled.adam_update(p2, g, m2, v2, step, 1e-3, 0.9, 0.999, 1e-8)
        assert np.allclose(p1, p2, rtol=rtol)
        assert np.allclose(v1, v2, rtol=rtol)


def test_gelu_array_functions_match_scalar_math(rng):
    x = rng.normal(size=200) * 3.0
    want = np.array([v * 0.5 * (1.0 + math.erf(v / math.sqrt(2))) for v in x])
    for impl in (_fallback, compiled):
        assert np.allclose(impl.gelu(x), want, rtol=1e-14, atol=1e-15)
    # derivative against central differences of the scalar form
    h = 1e-6
    fd = np.array(
        [
            (u + h) * 0.5 * (1 + math.erf((u + h) / math.sqrt(2)))
            - (u - h) * 0.5 * (1 + math.erf((u - h) / math.sqrt(2)))
            for u in x
        ]
    ) / (2 * h)
    for impl in (_fallback, compiled):
        assert np.allclose(impl.gelu_grad(x), fd, rtol=1e-7, atol=1e-9)


def test_backend_switching():
    assert set(_kernels.available_backends()) == {"pure", "compiled"}
    previous = _kernels.backend_name()
    try:
        assert _kernels.set_backend("pure") == "pure"
        assert _kernels.backend_name() == "pure"
        assert _kernels.set_backend("compiled") == "compiled"
        with pytest.raises(ValueError):
            _kernels.set_backend("gpu")
    finally:
        _kernels.set_backend(previous)


def test_full_adapt_agrees_across_backends(rng):
    import adcsd

    o = adcsd.SeriesTensor.of(rng.uniform(0, 10, size=(5, 6, 1)))
    y = adcsd.SeriesTensor.of(rng.uniform(0, 10, size=(5, 6, 1)))
    results = {}
    previous = _kernels.backend_name()
    try:
        for backend in ("pure", "compiled"):
            _kernels.set_backend(backend)
            state = adcsd.init_state(n_nodes=5, horizon=6, seed=3, lr=1e-2)
            losses = []
            for _ in range(10):
                loss, state = adcsd.adapt(state, o, y)
                losses.append(loss)
            results[backend] = (losses, adcsd.predict(state, o).values)
    finally:
        _kernels.set_backend(previous)
    assert np.allclose(results["pure"][0], results["compiled"][0], rtol=1e-10)
    assert np.allclose(results["pure"][1], results["compiled"][1], rtol=1e-10, atol=1e-12)
