"""The correction module: linear -> LayerNorm -> GELU -> linear.

Output width equals input width: the net corrects a flattened per-node
(time x channel) slice, with weights shared across nodes.  Gradients are
hand-derived reverse mode, including the LayerNorm mean/variance terms and
the exact-GELU derivative Phi(x) + x*phi(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import _kernels
from .errors import ContractError, ShapeError

LN_EPS = 1e-5

ACTIVATIONS = {"exact": _kernels.ACT_GELU_EXACT, "tanh": _kernels.ACT_GELU_TANH}


@dataclass(frozen=True)
class CorrectionNet:
    """Parameters of one correction module.

    w1: (d_hidden, d_in), b1/ln_gain/ln_bias: (d_hidden,),
    w2: (d_in, d_hidden), b2: (d_in,).
    """

    w1: np.ndarray
    b1: np.ndarray
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        dh, di = self.w1.shape
        expect = {"b1": (dh,), "ln_gain": (dh,), "ln_bias": (dh,), "w2": (di, dh), "b2": (di,)}
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"{name} shape {got}, expected {shape}")

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def d_hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def dtype(self):
        return self.w1.dtype

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]


@dataclass(frozen=True)
class NetGradients:
    """Per-parameter gradients, shape-congruent with a CorrectionNet."""

    w1: np.ndarray
    b1: np.ndarray
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]


@dataclass(frozen=True)
class Tape:
    """Intermediates cached by forward; only valid for the net that made it."""

    net: CorrectionNet
    x: np.ndarray
    z_hat: np.ndarray
    inv_std: np.ndarray
    act_grad: np.ndarray
    a: np.ndarray


def param_count(d_in: int, d_hidden: int) -> int:
    """2*d_in*d_hidden + d_in + 3*d_hidden."""
    return 2 * d_in * d_hidden + d_in + 3 * d_hidden


def gelu(x: float) -> float:
    """Exact GELU of a scalar: x * Phi(x)."""
    return x * 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def gelu_tanh(x: float) -> float:
    """Tanh-approximation GELU of a scalar."""
    return 0.5 * x * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def layer_norm(v: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    """gain * (v - mean) / sqrt(population variance + eps) + bias."""
    if not (v.shape == gain.shape == bias.shape):
        raise ShapeError(f"length mismatch: {v.shape}, {gain.shape}, {bias.shape}")
    mu = v.mean()
    var = np.mean((v - mu) ** 2)
    return gain * ((v - mu) / np.sqrt(var + eps)) + bias


def init_net(d_in: int, d_hidden: int, seed: int, dtype=np.float64) -> CorrectionNet:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases, unit gain."""
    if d_in < 1 or d_hidden < 1:
        raise ShapeError(f"d_in and d_hidden must be >= 1, got {d_in}, {d_hidden}")
    rng = np.random.default_rng(seed)
    lim1 = 1.0 / math.sqrt(d_in)
    lim2 = 1.0 / math.sqrt(d_hidden)
    return CorrectionNet(
        w1=rng.uniform(-lim1, lim1, size=(d_hidden, d_in)).astype(dtype),
        b1=np.zeros(d_hidden, dtype=dtype),
        ln_gain=np.ones(d_hidden, dtype=dtype),
        ln_bias=np.zeros(d_hidden, dtype=dtype),
        w2=rng.uniform(-lim2, lim2, size=(d_in, d_hidden)).astype(dtype),
        b2=np.zeros(d_in, dtype=dtype),
    )


def zero_gradients(net: CorrectionNet) -> NetGradients:
    return NetGradients(*(np.zeros_like(a) for a in net.arrays()))


def forward_batch(net: CorrectionNet, x: np.ndarray, activation: str = "exact"):
    """Forward over a batch of rows; x: (rows, d_in).  Returns (y, tape)."""
    if x.ndim != 2 or x.shape[1] != net.d_in:
        raise ShapeError(f"input shape {x.shape} incompatible with d_in={net.d_in}")
    act = ACTIVATIONS[activation]
    y, z_hat, inv_std, act_grad, a = _kernels.net_forward(
        x, net.w1, net.b1, net.ln_gain, net.ln_bias, net.w2, net.b2, LN_EPS, act
    )
    return y, Tape(net=net, x=x, z_hat=z_hat, inv_std=inv_std, act_grad=act_grad, a=a)


def backward_batch(net: CorrectionNet, tape: Tape, dl_dy: np.ndarray):
    """Gradients of the forward map; returns (NetGradients, dl_dx)."""
    if tape.net is not net:
        raise ContractError("tape does not belong to this net (stale tape)")
    if dl_dy.shape != (tape.x.shape[0], net.d_in):
        raise ShapeError(f"cotangent shape {dl_dy.shape} != {(tape.x.shape[0], net.d_in)}")
    dw1, db1, dgain, dbias, dw2, db2, dx = _kernels.net_backward(
        tape.x, net.w1, net.ln_gain, net.w2, tape.z_hat, tape.inv_std, tape.act_grad, tape.a, dl_dy
    )
    return NetGradients(w1=dw1, b1=db1, ln_gain=dgain, ln_bias=dbias, w2=dw2, b2=db2), dx


def forward(net: CorrectionNet, x: np.ndarray, activation: str = "exact"):
    """Single-vector forward; x: (d_in,).  Returns (y, tape)."""
    y, tape = forward_batch(net, np.asarray(x)[None, :], activation)
    return y[0], tape


def backward(net: CorrectionNet, tape: Tape, dl_dy: np.ndarray):
    """Single-vector backward matching forward; returns (NetGradients, dl_dx)."""
    grads, dx = backward_batch(net, tape, np.asarray(dl_dy)[None, :])
    return grads, dx[0]
