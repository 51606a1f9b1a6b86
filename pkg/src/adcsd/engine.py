"""Per-entry predict-then-adapt engine.

Each stream entry is handled in two phases: `predict` combines the frozen
base forecast with corrected seasonal and trend parts, gated by per-node
adaptive scales; `adapt` takes the delayed ground truth, runs one backward
pass through the active formula and applies exactly one optimizer step to
the correction nets and scales.  The base forecast itself never receives a
gradient.

Prediction formulas by ablation mode (o = base forecast, s/t = corrected
seasonal/trend parts, ws/wt = per-node scales):

  M0  y = o
  M1  y = s + t
  M2  y = o + s + t
  M3  y = o + ws*s
  M4  y = o + wt*t
  M5  y = o + ws*s + wt*t          (the full method)
  M6  y = o + ws*g(o)              (single net, no decomposition)

Scales start at zero, so a fresh state in the gated modes (M3-M6) reproduces
the base forecast exactly until the first update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .decompose import DecompConfig
from .errors import ConfigError, ContractError, DegenerateInputError, ShapeError
from .metrics import MetricReport, compute_metrics
from .network import (
    CorrectionNet,
    NetGradients,
    backward_batch,
    forward_batch,
    init_net,
)
from .optim import AdamState, SgdState, adam_step, clip_gradients, sgd_step
from .series import NodeVector, SeriesTensor, _canonical, add, masked_mse
from . import _kernels

LOSS_KINDS = ("mse", "mae")


class AblationMode(Enum):
    M0 = "M0"
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    M4 = "M4"
    M5 = "M5"
    M6 = "M6"


# Parameter blocks that train under each mode, in flat-vector order.
TRAINABLE_BLOCKS = {
    AblationMode.M0: (),
    AblationMode.M1: ("seasonal_net", "trend_net"),
    AblationMode.M2: ("seasonal_net", "trend_net"),
    AblationMode.M3: ("seasonal_net", "seasonal_scale"),
    AblationMode.M4: ("trend_net", "trend_scale"),
    AblationMode.M5: ("seasonal_net", "trend_net", "seasonal_scale", "trend_scale"),
    AblationMode.M6: ("seasonal_net", "seasonal_scale"),
}


@dataclass(frozen=True)
class StreamEntry:
    """One prequential unit: input window, frozen forecast, delayed truth."""

    x: SeriesTensor | None
    base_forecast: SeriesTensor
    truth: SeriesTensor

    def __post_init__(self):
        if self.base_forecast.shape != self.truth.shape:
            raise ShapeError(
                f"truth shape {self.truth.shape} != forecast shape {self.base_forecast.shape}"
            )


@dataclass(frozen=True)
class AdaptState:
    """Full trainable state of one stream."""

    mode: AblationMode
    seasonal_net: CorrectionNet
    trend_net: CorrectionNet
    seasonal_scale: NodeVector
    trend_scale: NodeVector
    opt: AdamState | SgdState
    decomp_cfg: DecompConfig
    entries_seen: int = 0
    loss_kind: str = "mse"
    activation: str = "exact"
    clip: float | None = None
    freeze: frozenset = frozenset()

    @property
    def n_nodes(self) -> int:
        return self.seasonal_scale.n_nodes

    @property
    def dtype(self):
        return self.seasonal_net.dtype


def init_state(
    n_nodes: int,
    horizon: int,
    n_channels: int = 1,
    mode: AblationMode = AblationMode.M5,
    hidden: int | None = None,
    kernel: int = 3,
    lr: float = 1e-4,
    optimizer: str = "adam",
    seed: int = 0,
    loss: str = "mse",
    activation: str = "exact",
    clip: float | None = None,
    dtype=np.float64,
) -> AdaptState:
    """Fresh state: seeded nets, zero scales, empty optimizer moments."""
    if loss not in LOSS_KINDS:
        raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {loss!r}")
    if optimizer not in ("adam", "sgd"):
        raise ConfigError(f"optimizer must be adam or sgd, got {optimizer!r}")
    d_in = horizon * n_channels
    d_hidden = hidden if hidden is not None else 4 * d_in
    # Child seeds keep the seasonal net identical across modes for a given seed.
    seed_s, seed_t = np.random.SeedSequence(seed).spawn(2)
    state = AdaptState(
        mode=mode,
        seasonal_net=init_net(d_in, d_hidden, seed_s, dtype=dtype),
        trend_net=init_net(d_in, d_hidden, seed_t, dtype=dtype),
        seasonal_scale=NodeVector.zeros(n_nodes, dtype=dtype),
        trend_scale=NodeVector.zeros(n_nodes, dtype=dtype),
        opt=SgdState(lr=lr) if optimizer == "sgd" else AdamState.fresh(0, lr=lr, dtype=dtype),
        decomp_cfg=DecompConfig(kernel=kernel),
        loss_kind=loss,
        activation=activation,
        clip=clip,
    )
    if optimizer == "adam":
        state = replace(state, opt=AdamState.fresh(trainable_size(state), lr=lr, dtype=dtype))
    return state


def trainable_size(state: AdaptState) -> int:
    return sum(a.size for _, arrs in _active_blocks(state) for a in arrs)


def _active_blocks(state: AdaptState):
    out = []
    for name in TRAINABLE_BLOCKS[state.mode]:
        attr = getattr(state, name)
        arrs = attr.arrays() if isinstance(attr, CorrectionNet) else [attr.values]
        out.append((name, arrs))
    return out


def _flatten(arrays) -> np.ndarray:
    if not arrays:
        return np.zeros(0)
    return np.concatenate([np.asarray(a).ravel() for a in arrays])


def flatten_params(state: AdaptState) -> np.ndarray:
    return _flatten([a for _, arrs in _active_blocks(state) for a in arrs])


def unflatten_params(state: AdaptState, flat: np.ndarray) -> AdaptState:
    """Rebuild a state whose active blocks take their values from `flat`."""
    if flat.size != trainable_size(state):
        raise ShapeError(f"flat vector size {flat.size} != trainable size {trainable_size(state)}")
    updates = {}
    pos = 0
    for name, arrs in _active_blocks(state):
        new = []
        for a in arrs:
            chunk = flat[pos : pos + a.size].reshape(a.shape).astype(a.dtype, copy=True)
            pos += a.size
            new.append(chunk)
        attr = getattr(state, name)
        if isinstance(attr, CorrectionNet):
            updates[name] = CorrectionNet(*new)
        else:
            updates[name] = NodeVector.of(new[0], dtype=attr.values.dtype)
    return replace(state, **updates)


def _check_compat(state: AdaptState, o: SeriesTensor) -> None:
    if o.n_nodes != state.n_nodes:
        raise ShapeError(f"forecast has {o.n_nodes} nodes, state expects {state.n_nodes}")
    d_in = o.n_steps * o.n_channels
    if state.mode is not AblationMode.M0 and d_in != state.seasonal_net.d_in:
        raise ShapeError(
            f"forecast window {o.n_steps}x{o.n_channels} gives width {d_in}, "
            f"nets expect {state.seasonal_net.d_in}"
        )


@dataclass
class _Forward:
    """Everything adapt's backward pass needs from one forward evaluation."""

    yhat: np.ndarray
    corr_s: np.ndarray | None = None
    corr_t: np.ndarray | None = None
    tape_s: object = None
    tape_t: object = None


def _run_forward(state: AdaptState, o: SeriesTensor) -> _Forward:
    mode = state.mode
    vals = o.values.astype(state.dtype, copy=False)
    if mode is AblationMode.M0:
        return _Forward(yhat=vals)
    n, tp, c = o.shape
    d_in = tp * c

    if mode is AblationMode.M6:
        y6, tape = forward_batch(state.seasonal_net, vals.reshape(n, d_in), state.activation)
        corr = y6.reshape(n, tp, c)
        yhat = vals + state.seasonal_scale.values[:, None, None] * corr
        return _Forward(yhat=yhat, corr_s=corr, tape_s=tape)

    trend = _kernels.moving_average(vals, o.mask, state.decomp_cfg.kernel)
    seasonal = vals - trend
    fwd = _Forward(yhat=vals)
    use_s = mode in (AblationMode.M1, AblationMode.M2, AblationMode.M3, AblationMode.M5)
    use_t = mode in (AblationMode.M1, AblationMode.M2, AblationMode.M4, AblationMode.M5)
    gated = mode in (AblationMode.M3, AblationMode.M4, AblationMode.M5)

    terms = []
    if use_s:
        ys, fwd.tape_s = forward_batch(state.seasonal_net, seasonal.reshape(n, d_in), state.activation)
        fwd.corr_s = ys.reshape(n, tp, c)
        terms.append(
            state.seasonal_scale.values[:, None, None] * fwd.corr_s if gated else fwd.corr_s
        )
    if use_t:
        yt, fwd.tape_t = forward_batch(state.trend_net, trend.reshape(n, d_in), state.activation)
        fwd.corr_t = yt.reshape(n, tp, c)
        terms.append(state.trend_scale.values[:, None, None] * fwd.corr_t if gated else fwd.corr_t)

    yhat = terms[0] if mode is AblationMode.M1 else vals
    for term in terms[1:] if mode is AblationMode.M1 else terms:
        yhat = yhat + term
    fwd.yhat = yhat
    return fwd


def predict(state: AdaptState, base_forecast: SeriesTensor) -> SeriesTensor:
    """Corrected forecast under the active mode; never mutates state."""
    _check_compat(state, base_forecast)
    fwd = _run_forward(state, base_forecast)
    return SeriesTensor(
        values=_canonical(fwd.yhat, base_forecast.mask), mask=base_forecast.mask
    )


def _loss_and_cotangent(state, yhat, truth: SeriesTensor, forecast_mask):
    joint = truth.mask & forecast_mask
    count = int(joint.sum())
    if count == 0:
        return math.nan, None
    diff = np.where(joint, yhat - truth.values.astype(yhat.dtype, copy=False), 0.0)
    if state.loss_kind == "mse":
        loss = float(np.sum(diff * diff) / count)
        d_yhat = (2.0 / count) * diff
    else:
        loss = float(np.sum(np.abs(diff)) / count)
        d_yhat = np.sign(diff) / count
    return loss, d_yhat.astype(yhat.dtype, copy=False)


def gradients(state: AdaptState, base_forecast: SeriesTensor, truth: SeriesTensor):
    """Loss and flat gradient of the active trainable blocks.

    Returns (loss, flat_grads); flat_grads is None when no cell of the truth
    overlaps the forecast mask (nothing to learn from).
    """
    _check_compat(state, base_forecast)
    if truth.shape != base_forecast.shape:
        raise ShapeError(f"truth shape {truth.shape} != forecast shape {base_forecast.shape}")
    fwd = _run_forward(state, base_forecast)
    loss, d_yhat = _loss_and_cotangent(state, fwd.yhat, truth, base_forecast.mask)
    if d_yhat is None:
        return loss, None
    if not math.isfinite(loss):
        raise ContractError(f"non-finite loss {loss}")

    mode = state.mode
    n, tp, c = base_forecast.shape
    gated = mode in (AblationMode.M3, AblationMode.M4, AblationMode.M5, AblationMode.M6)
    grads: dict[str, object] = {}

    if fwd.corr_s is not None:
        if gated:
            grads["seasonal_scale"] = np.sum(d_yhat * fwd.corr_s, axis=(1, 2))
            d_corr = d_yhat * state.seasonal_scale.values[:, None, None]
        else:
            d_corr = d_yhat
        g, _ = backward_batch(state.seasonal_net, fwd.tape_s, d_corr.reshape(n, tp * c))
        grads["seasonal_net"] = g
    if fwd.corr_t is not None:
        if gated:
            grads["trend_scale"] = np.sum(d_yhat * fwd.corr_t, axis=(1, 2))
            d_corr = d_yhat * state.trend_scale.values[:, None, None]
        else:
            d_corr = d_yhat
        g, _ = backward_batch(state.trend_net, fwd.tape_t, d_corr.reshape(n, tp * c))
        grads["trend_net"] = g

    pieces = []
    for name, arrs in _active_blocks(state):
        if name in state.freeze or name not in grads:
            pieces.extend(np.zeros_like(a) for a in arrs)
        else:
            g = grads[name]
            pieces.extend(g.arrays() if isinstance(g, NetGradients) else [g])
    return loss, _flatten(pieces)


def adapt(state: AdaptState, base_forecast: SeriesTensor, truth: SeriesTensor):
    """One loss evaluation and one optimizer step; returns (loss, new state).

    An entry whose truth shares no observed cell with the forecast is skipped:
    the state comes back unchanged and the loss is NaN.
    """
    loss, flat_grads = gradients(state, base_forecast, truth)
    if flat_grads is None or state.mode is AblationMode.M0:
        return loss, state
    if not np.all(np.isfinite(flat_grads)):
        raise ContractError("non-finite gradient in adapt")
    if state.clip is not None:
        flat_grads = clip_gradients(flat_grads, state.clip)
    params = flatten_params(state)
    if isinstance(state.opt, AdamState):
        new_params, new_opt = adam_step(state.opt, params, flat_grads)
    else:
        new_params, new_opt = sgd_step(state.opt.lr, params, flat_grads), state.opt
    new_state = unflatten_params(state, new_params)
    return loss, replace(new_state, opt=new_opt, entries_seen=state.entries_seen + 1)


@dataclass
class RunReport:
    """Everything one prequential run produced."""

    predictions: list[SeriesTensor]
    per_entry_loss: np.ndarray
    metrics: MetricReport
    seasonal_scale: np.ndarray
    trend_scale: np.ndarray
    final_state: AdaptState
    label_delay: int
    updates_applied: int


def run_stream(
    state: AdaptState,
    entries: Sequence[StreamEntry],
    label_delay: int = 1,
    policy: str = "graph",
) -> RunReport:
    """Prequential loop: every prediction is recorded before the update that
    consumes that entry's truth.

    The truth of entry i becomes usable max(1, label_delay) entries after i was
    predicted; labels still pending when the stream ends are applied at the end.
    """
    if not entries:
        raise ShapeError("entry stream is empty")
    shape = entries[0].base_forecast.shape
    for i, e in enumerate(entries):
        if e.base_forecast.shape != shape:
            raise ShapeError(f"entry {i} shape {e.base_forecast.shape} != {shape}")
    delay = max(1, label_delay)

    predictions: list[SeriesTensor] = []
    losses = np.full(len(entries), math.nan)
    next_update = 0
    updates = 0
    for i, entry in enumerate(entries):
        while next_update <= i - delay:
            before = state.entries_seen
            _, state = adapt(state, entries[next_update].base_forecast, entries[next_update].truth)
            updates += state.entries_seen - before
            next_update += 1
        yhat = predict(state, entry.base_forecast)
        predictions.append(yhat)
        joint = entry.truth.mask & yhat.mask
        if joint.any():
            losses[i], _ = _loss_and_cotangent(state, yhat.values, entry.truth, yhat.mask)
    while next_update < len(entries):
        before = state.entries_seen
        _, state = adapt(state, entries[next_update].base_forecast, entries[next_update].truth)
        updates += state.entries_seen - before
        next_update += 1

    report = compute_metrics([e.truth for e in entries], predictions, policy)
    return RunReport(
        predictions=predictions,
        per_entry_loss=losses,
        metrics=report,
        seasonal_scale=state.seasonal_scale.values.copy(),
        trend_scale=state.trend_scale.values.copy(),
        final_state=state,
        label_delay=delay,
        updates_applied=updates,
    )


def residual_witness(o: SeriesTensor, y: SeriesTensor) -> SeriesTensor:
    """The additive correction r = y - o, which drives the square loss to zero.

    Constructive witness that attaching a trainable additive head can always
    beat the frozen forecast on its own training loss.  Rejected when o and y
    already agree on every jointly observed cell.
    """
    if o.shape != y.shape:
        raise ShapeError(f"shape mismatch {o.shape} vs {y.shape}")
    joint = o.mask & y.mask
    diff = np.where(joint, y.values - o.values, 0.0)
    if not np.any(diff[joint] != 0.0):
        raise DegenerateInputError("o equals y on all observed cells; no strict improvement exists")
    joint.setflags(write=False)
    return SeriesTensor(values=_canonical(diff, joint), mask=joint)


def skip_connection_losses(o: SeriesTensor, y: SeriesTensor):
    """Square losses of keeping vs dropping the base output, same correction.

    With the residual correction r = y - o: predicting o + r scores zero,
    while predicting r alone scores mean(o^2) over observed cells.  Returns
    (loss_with_base, loss_without_base).  Signalled as degenerate when o is
    all-zero on observed cells (the two predictions coincide).
    """
    if o.shape != y.shape:
        raise ShapeError(f"shape mismatch {o.shape} vs {y.shape}")
    joint = o.mask & y.mask
    if int(joint.sum()) == 0:
        raise DegenerateInputError("no jointly observed cells")
    if not np.any(o.values[joint] != 0.0):
        raise DegenerateInputError("o is all-zero on observed cells; both models coincide")
    joint_ro = joint.copy()
    joint_ro.setflags(write=False)
    r = SeriesTensor(values=_canonical(np.where(joint, y.values - o.values, 0.0), joint_ro), mask=joint_ro)
    loss_with = masked_mse(y, add(o, r))
    loss_without = masked_mse(y, r)
    return loss_with, loss_without
