"""Kernel backend selection.

The compiled Cython core is preferred when importable; the pure NumPy
fallback is numerically equivalent and always available.  Selection order:

  1. ADCSD_BACKEND=pure|compiled environment variable, if set;
  2. the compiled core, if the extension built;
  3. the fallback.

`set_backend` exists so tests and the benchmark can compare both paths in
one process.
"""

from __future__ import annotations

import os

from . import _fallback

try:
    from . import _core
except ImportError:
    _core = None

ACT_GELU_EXACT = _fallback.ACT_GELU_EXACT
ACT_GELU_TANH = _fallback.ACT_GELU_TANH

_impl = _fallback


def available_backends() -> tuple[str, ...]:
    return ("pure", "compiled") if _core is not None else ("pure",)


def set_backend(name: str) -> str:
    """Select 'pure', 'compiled' or 'auto'; returns the backend now active."""
    global _impl
    if name == "pure":
        _impl = _fallback
    elif name == "compiled":
        if _core is None:
            raise RuntimeError("compiled kernel core is not built")
        _impl = _core
    elif name == "auto":
        _impl = _core if _core is not None else _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    return _impl.BACKEND


def backend_name() -> str:
    return _impl.BACKEND


def gelu(x):
    return _impl.gelu(x)


def gelu_grad(x):
    return _impl.gelu_grad(x)


def gelu_tanh(x):
    return _impl.gelu_tanh(x)


def gelu_tanh_grad(x):
    return _impl.gelu_tanh_grad(x)


def net_forward(x, w1, b1, ln_gain, ln_bias, w2, b2, eps, act):
    return _impl.net_forward(x, w1, b1, ln_gain, ln_bias, w2, b2, eps, act)


def net_backward(x, w1, ln_gain, w2, z_hat, inv_std, act_grad, a, dy):
    return _impl.net_backward(x, w1, ln_gain, w2, z_hat, inv_std, act_grad, a, dy)


def moving_average(values, mask, kernel):
    return _impl.moving_average(values, mask, kernel)


def adam_update(params, grads, m, v, step, lr, beta1, beta2, eps):
    return _impl.adam_update(params, grads, m, v, step, lr, beta1, beta2, eps)


set_backend(os.environ.get("ADCSD_BACKEND", "auto"))
