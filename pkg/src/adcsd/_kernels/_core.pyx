# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-entry kernels; numerically equivalent to `_fallback`.

Matrix products go through BLAS (via numpy) exactly as in the fallback; the
compiled win is fusing the elementwise LayerNorm/GELU chains that otherwise
burn time in temporaries, plus tight loops for the masked moving average and
the Adam update.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport erf, exp, sqrt, tanh, pow

cnp.import_array()

BACKEND = "compiled"

ACT_GELU_EXACT = 0
ACT_GELU_TANH = 1

ctypedef fused floating:
    float
    double

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double SQRT_2_OVER_PI = 0.7978845608028654
cdef double TANH_CUBIC = 0.044715


cdef inline double _gelu1(double x, int act) noexcept nogil:
    cdef double inner
    if act == 0:
        return x * 0.5 * (1.0 + erf(x * INV_SQRT2))
    inner = SQRT_2_OVER_PI * (x + TANH_CUBIC * x * x * x)
    return 0.5 * x * (1.0 + tanh(inner))


cdef inline double _gelu1_grad(double x, int act) noexcept nogil:
    cdef double inner, th, dinner
    if act == 0:
        return 0.5 * (1.0 + erf(x * INV_SQRT2)) + x * INV_SQRT_2PI * exp(-0.5 * x * x)
    inner = SQRT_2_OVER_PI * (x + TANH_CUBIC * x * x * x)
    th = tanh(inner)
    dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * TANH_CUBIC * x * x)
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner


cdef inline void _gelu1_pair(double x, int act, double* val, double* grad) noexcept nogil:
    # value and derivative together; shares the expensive erf/tanh evaluation
    cdef double inner, th, dinner, cdf, phi, half_1p
    if act == 0:
        cdf = 0.5 * (1.0 + erf(x * INV_SQRT2))
        phi = INV_SQRT_2PI * exp(-0.5 * x * x)
        val[0] = x * cdf
        grad[0] = cdf + x * phi
        return
    inner = SQRT_2_OVER_PI * (x + TANH_CUBIC * x * x * x)
    th = tanh(inner)
    dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * TANH_CUBIC * x * x)
    half_1p = 0.5 * (1.0 + th)
    val[0] = x * half_1p
    grad[0] = half_1p + 0.5 * x * (1.0 - th * th) * dinner


def gelu(x):
    arr = np.ascontiguousarray(x)
    out = np.empty_like(arr)
    _gelu_arr(arr.ravel(), out.ravel(), 0, 0)
    return out


def gelu_grad(x):
    arr = np.ascontiguousarray(x)
    out = np.empty_like(arr)
    _gelu_arr(arr.ravel(), out.ravel(), 0, 1)
    return out


def gelu_tanh(x):
    arr = np.ascontiguousarray(x)
    out = np.empty_like(arr)
    _gelu_arr(arr.ravel(), out.ravel(), 1, 0)
    return out


def gelu_tanh_grad(x):
    arr = np.ascontiguousarray(x)
    out = np.empty_like(arr)
    _gelu_arr(arr.ravel(), out.ravel(), 1, 1)
    return out


def _gelu_arr(const floating[::1] x, floating[::1] out, int act, int grad):
    cdef Py_ssize_t i
    if grad:
        for i in range(x.shape[0]):
            out[i] = <floating>_gelu1_grad(<double>x[i], act)
    else:
        for i in range(x.shape[0]):
            out[i] = <floating>_gelu1(<double>x[i], act)


def net_forward(x, w1, b1, ln_gain, ln_bias, w2, b2, double eps, int act):
    z = x @ w1.T
    z += b1
    dtype = z.dtype
    rows, d_hidden = z.shape
    z_hat = z  # normalized in place by the fused loop
    inv_std = np.empty(rows, dtype=dtype)
    act_grad = np.empty((rows, d_hidden), dtype=dtype)
    a = np.empty((rows, d_hidden), dtype=dtype)
    _ln_act_fused(z, ln_gain, ln_bias, eps, act, inv_std, act_grad, a)
    y = a @ w2.T
    y += b2
    return y, z_hat, inv_std, act_grad, a


def _ln_act_fused(floating[:, ::1] z, const floating[::1] ln_gain,
                  const floating[::1] ln_bias, double eps, int act,
                  floating[::1] inv_std, floating[:, ::1] act_grad,
                  floating[:, ::1] a):
    # rows are independent and each output cell is written exactly once, so
    # the parallel loop is bit-deterministic for any thread count
    cdef Py_ssize_t rows = z.shape[0], d_h = z.shape[1]
    cdef Py_ssize_t r, i
    cdef double mu, var, istd, zh, uu, dev, aval, agrad
    for r in prange(rows, nogil=True, schedule="static"):
        mu = 0.0
        for i in range(d_h):
            mu = mu + <double>z[r, i]
        mu = mu / d_h
        var = 0.0
        for i in range(d_h):
            dev = <double>z[r, i] - mu
            var = var + dev * dev
        var = var / d_h
        istd = 1.0 / sqrt(var + eps)
        inv_std[r] = <floating>istd
        for i in range(d_h):
            zh = (<double>z[r, i] - mu) * istd
            z[r, i] = <floating>zh
            uu = <double>ln_gain[i] * zh + <double>ln_bias[i]
            _gelu1_pair(uu, act, &aval, &agrad)
            a[r, i] = <floating>aval
            act_grad[r, i] = <floating>agrad


def net_backward(x, w1, ln_gain, w2, z_hat, inv_std, act_grad, a, dy):
    dz = dy @ w2  # starts as da, turned into dz in place by the fused loop
    dw2 = dy.T @ a
    db2 = dy.sum(axis=0)
    d_hidden = dz.shape[1]
    dtype = dz.dtype
    dgain = np.zeros(d_hidden, dtype=dtype)
    dbias = np.zeros(d_hidden, dtype=dtype)
    _ln_act_backward_fused(dz, act_grad, z_hat, inv_std, ln_gain, dgain, dbias)
    dw1 = dz.T @ x
    db1 = dz.sum(axis=0)
    dx = dz @ w1
    return dw1, db1, dgain, dbias, dw2, db2, dx


def _ln_act_backward_fused(floating[:, ::1] dz, const floating[:, ::1] act_grad,
                           const floating[:, ::1] z_hat, const floating[::1] inv_std,
                           const floating[::1] ln_gain, floating[::1] dgain,
                           floating[::1] dbias):
    # dz arrives holding da; leaves holding the LayerNorm input gradient.
    cdef Py_ssize_t rows = dz.shape[0], d_h = dz.shape[1]
    cdef Py_ssize_t r, i
    cdef double du_i, dzh, mean_dzh, mean_dzh_zh, istd
    with nogil:
        for r in range(rows):
            mean_dzh = 0.0
            mean_dzh_zh = 0.0
            for i in range(d_h):
                du_i = <double>dz[r, i] * <double>act_grad[r, i]
                dgain[i] += <floating>(du_i * <double>z_hat[r, i])
                dbias[i] += <floating>du_i
                dzh = du_i * <double>ln_gain[i]
                dz[r, i] = <floating>dzh
                mean_dzh += dzh
                mean_dzh_zh += dzh * <double>z_hat[r, i]
            mean_dzh /= d_h
            mean_dzh_zh /= d_h
            istd = <double>inv_std[r]
            for i in range(d_h):
                dz[r, i] = <floating>(istd * (<double>dz[r, i] - mean_dzh
                                              - <double>z_hat[r, i] * mean_dzh_zh))


def moving_average(values, mask, int kernel):
    values = np.ascontiguousarray(values)
    mask_u8 = np.ascontiguousarray(mask, dtype=np.uint8)
    trend = np.empty_like(values)
    _moving_average(values, mask_u8, kernel, trend)
    return trend


def _moving_average(const floating[:, :, ::1] values, const cnp.uint8_t[:, :, ::1] mask,
                    int kernel, floating[:, :, ::1] trend):
    cdef Py_ssize_t n_nodes = values.shape[0], n_steps = values.shape[1]
    cdef Py_ssize_t n_ch = values.shape[2]
    cdef Py_ssize_t n, t, c, w
    cdef Py_ssize_t pad = (kernel - 1) // 2
    cdef Py_ssize_t src
    cdef double s
    cdef long cnt
    with nogil:
        for n in range(n_nodes):
            for c in range(n_ch):
                for t in range(n_steps):
                    s = 0.0
                    cnt = 0
                    # clamping the window index replicates the edge steps
                    for w in range(kernel):
                        src = t - pad + w
                        if src < 0:
                            src = 0
                        elif src >= n_steps:
                            src = n_steps - 1
                        if mask[n, src, c]:
                            s += <double>values[n, src, c]
                            cnt += 1
                    if cnt > 0:
                        trend[n, t, c] = <floating>(s / cnt)
                    else:
                        trend[n, t, c] = <floating>0.0


def adam_update(params, grads, m, v, long step, double lr,
                double beta1, double beta2, double eps):
    grads = np.ascontiguousarray(grads)
    _adam_update(params, grads, m, v, step, lr, beta1, beta2, eps)


def _adam_update(floating[::1] params, const floating[::1] grads, floating[::1] m,
                 floating[::1] v, long step, double lr, double beta1,
                 double beta2, double eps):
    cdef Py_ssize_t i
    cdef double g, mi, vi, c1, c2
    c1 = 1.0 - pow(beta1, <double>step)
    c2 = 1.0 - pow(beta2, <double>step)
    with nogil:
        for i in range(params.shape[0]):
            g = <double>grads[i]
            mi = beta1 * <double>m[i] + (1.0 - beta1) * g
            vi = beta2 * <double>v[i] + (1.0 - beta2) * g * g
            m[i] = <floating>mi
            v[i] = <floating>vi
            params[i] -= <floating>(lr * (mi / c1) / (sqrt(vi / c2) + eps))
