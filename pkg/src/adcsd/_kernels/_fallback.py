"""Pure NumPy implementations of the hot per-entry kernels.

Used when the compiled core is unavailable (or explicitly disabled via
ADCSD_BACKEND=pure).  Signatures and numeric semantics mirror `_core` exactly;
the compiled module only changes speed.  All functions preserve the dtype of
their float inputs (float32 or float64).
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

BACKEND = "pure"

ACT_GELU_EXACT = 0
ACT_GELU_TANH = 1

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327
_SQRT_2_OVER_PI = 0.7978845608028654
_TANH_CUBIC = 0.044715


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU x * Phi(x) with Phi the standard normal CDF."""
    x = np.asarray(x)
    half = x.dtype.type(0.5)
    return x * half * (1.0 + erf(x * x.dtype.type(_INV_SQRT2)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    """d/dx of exact GELU: Phi(x) + x * phi(x)."""
    x = np.asarray(x)
    t = x.dtype.type
    phi = t(_INV_SQRT_2PI) * np.exp(t(-0.5) * x * x)
    cdf = t(0.5) * (1.0 + erf(x * t(_INV_SQRT2)))
    return (cdf + x * phi).astype(x.dtype, copy=False)


def gelu_tanh(x: np.ndarray) -> np.ndarray:
    """Tanh approximation of GELU."""
    x = np.asarray(x)
    t = x.dtype.type
    inner = t(_SQRT_2_OVER_PI) * (x + t(_TANH_CUBIC) * x * x * x)
    return t(0.5) * x * (1.0 + np.tanh(inner))


def gelu_tanh_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    t = x.dtype.type
    inner = t(_SQRT_2_OVER_PI) * (x + t(_TANH_CUBIC) * x * x * x)
    th = np.tanh(inner)
    dinner = t(_SQRT_2_OVER_PI) * (1.0 + 3.0 * t(_TANH_CUBIC) * x * x)
    return (t(0.5) * (1.0 + th) + t(0.5) * x * (1.0 - th * th) * dinner).astype(
        x.dtype, copy=False
    )


def _act_pair(u, act):
    """(activation value, its derivative) in one pass; shares the erf/tanh work."""
    t = u.dtype.type
    if act == ACT_GELU_EXACT:
        cdf = t(0.5) * (1.0 + erf(u * t(_INV_SQRT2)))
        phi = t(_INV_SQRT_2PI) * np.exp(t(-0.5) * u * u)
        return u * cdf, cdf + u * phi
    inner = t(_SQRT_2_OVER_PI) * (u + t(_TANH_CUBIC) * u * u * u)
    th = np.tanh(inner)
    dinner = t(_SQRT_2_OVER_PI) * (1.0 + 3.0 * t(_TANH_CUBIC) * u * u)
    half_1p = t(0.5) * (1.0 + th)
    return u * half_1p, half_1p + t(0.5) * u * (1.0 - th * th) * dinner


def net_forward(x, w1, b1, ln_gain, ln_bias, w2, b2, eps, act):
    """Batched correction-net forward over rows of x.

    x: (rows, d_in); returns (y, z_hat, inv_std, act_grad, a) where the last
    four are the tape arrays needed by net_backward.  act_grad is the
    activation derivative at the pre-activation, cached so backward needs no
    transcendentals.
    """
    dt = x.dtype.type
    z = x @ w1.T + b1
    mu = z.mean(axis=1, keepdims=True)
    var = np.mean((z - mu) ** 2, axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + dt(eps))
    z_hat = (z - mu) * inv_std
    u = ln_gain * z_hat + ln_bias
    a, act_grad = _act_pair(u, act)
    y = a @ w2.T + b2
    return y, z_hat, inv_std[:, 0], act_grad, a


def net_backward(x, w1, ln_gain, w2, z_hat, inv_std, act_grad, a, dy):
    """Reverse-mode pass matching net_forward; returns parameter grads and dx."""
    h = z_hat.shape[1]
    da = dy @ w2
    dw2 = dy.T @ a
    db2 = dy.sum(axis=0)
    du = da * act_grad
    dgain = (du * z_hat).sum(axis=0)
    dbias = du.sum(axis=0)
    dz_hat = du * ln_gain
    mean_dzh = dz_hat.mean(axis=1, keepdims=True)
    mean_dzh_zh = (dz_hat * z_hat).sum(axis=1, keepdims=True) / x.dtype.type(h)
    dz = inv_std[:, None] * (dz_hat - mean_dzh - z_hat * mean_dzh_zh)
    dw1 = dz.T @ x
    db1 = dz.sum(axis=0)
    dx = dz @ w1
    return dw1, db1, dgain, dbias, dw2, db2, dx


def moving_average(values, mask, kernel):
    """Masked centered moving average along the time axis.

    values: (n_nodes, n_steps, n_channels); mask: same shape, uint8/bool.
    The series is replicate-padded by (kernel-1)/2 steps on each side (mask
    included); each window mean runs over the observed entries only.  Windows
    with no observed entry yield 0.
    """
    pad = (kernel - 1) // 2
    m = mask.astype(values.dtype, copy=False)
    vm = values * m
    if pad:
        vm = np.concatenate(
            [np.repeat(vm[:, :1], pad, axis=1), vm, np.repeat(vm[:, -1:], pad, axis=1)],
            axis=1,
        )
        m = np.concatenate(
            [np.repeat(m[:, :1], pad, axis=1), m, np.repeat(m[:, -1:], pad, axis=1)],
            axis=1,
        )
    zeros = np.zeros((values.shape[0], 1, values.shape[2]), dtype=values.dtype)
    csum = np.concatenate([zeros, np.cumsum(vm, axis=1)], axis=1)
    ccnt = np.concatenate([zeros, np.cumsum(m, axis=1)], axis=1)
    n_steps = values.shape[1]
    win_sum = csum[:, kernel : kernel + n_steps] - csum[:, :n_steps]
    win_cnt = ccnt[:, kernel : kernel + n_steps] - ccnt[:, :n_steps]
    with np.errstate(invalid="ignore", divide="ignore"):
        trend = np.where(win_cnt > 0, win_sum / np.maximum(win_cnt, 1), 0.0)
    return trend.astype(values.dtype, copy=False)


def adam_update(params, grads, m, v, step, lr, beta1, beta2, eps):
    """One bias-corrected Adam step, in place on params/m/v.

    step is the 1-based number of this update (already incremented).
    """
    dt = params.dtype.type
    b1, b2 = dt(beta1), dt(beta2)
    m *= b1
    m += (1.0 - b1) * grads
    v *= b2
    v += (1.0 - b2) * grads * grads
    m_hat = m / dt(1.0 - beta1**step)
    v_hat = v / dt(1.0 - beta2**step)
    params -= dt(lr) * m_hat / (np.sqrt(v_hat) + dt(eps))
