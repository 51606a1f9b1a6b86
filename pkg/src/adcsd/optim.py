"""First-order optimizers over flat parameter vectors, plus the FD checker."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import _kernels
from .errors import ContractError, ShapeError

ADAM_LR = 1e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AdamState:
    """Bias-corrected Adam state over one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = ADAM_LR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def fresh(cls, n_params: int, lr: float = ADAM_LR, dtype=np.float64, **kw) -> "AdamState":
        return cls(m=np.zeros(n_params, dtype=dtype), v=np.zeros(n_params, dtype=dtype), lr=lr, **kw)


@dataclass(frozen=True)
class SgdState:
    """Plain gradient descent; kept for the strict-descent property checks."""

    lr: float


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray):
    """One Adam update; returns (new params, new state).  Inputs untouched."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, moments {state.m.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise ContractError("non-finite gradient passed to adam_step")
    p = params.copy()
    m = state.m.copy()
    v = state.v.copy()
    step = state.step + 1
    _kernels.adam_update(p, grads, m, v, step, state.lr, state.beta1, state.beta2, state.eps)
    return p, replace(state, m=m, v=v, step=step)


def sgd_step(lr: float, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """params - lr * grads."""
    if params.shape != grads.shape:
        raise ShapeError(f"shape mismatch: params {params.shape}, grads {grads.shape}")
    return params - lr * grads


def clip_gradients(grads: np.ndarray, max_norm: float) -> np.ndarray:
    """Scale grads down to the given global L2 norm if they exceed it."""
    norm = float(np.linalg.norm(grads))
    if norm > max_norm and norm > 0.0:
        return grads * (max_norm / norm)
    return grads


def grad_check(
    loss_fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    analytic: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error of `analytic` vs central finite differences of loss_fn.

    Relative error uses denominator max(|analytic_i|, |fd_i|, 1e-12).
    """
    if params.shape != analytic.shape:
        raise ShapeError(f"shape mismatch: params {params.shape}, analytic {analytic.shape}")
    worst = 0.0
    p = params.astype(np.float64).copy()
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + h
        up = loss_fn(p)
        p[i] = orig - h
        down = loss_fn(p)
        p[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise ContractError(f"non-finite loss at coordinate {i}")
        fd = (up - down) / (2.0 * h)
        denom = max(abs(float(analytic[i])), abs(fd), 1e-12)
        worst = max(worst, abs(float(analytic[i]) - fd) / denom)
    return worst
