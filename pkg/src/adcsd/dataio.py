"""Text file formats, chronological splits and sliding-window entries.

Three containers, all line-oriented text so runs diff and reproduce exactly
across platforms:

  STTF v1  dataset: header, dims line, then one line per time step holding
           n_nodes*n_channels values (node-major, channel-minor); the literal
           token `nan` marks a missing cell.
  PRED v1  prediction stream: one line per (entry, horizon) pair.
  CKPT v1  checkpoint: `meta key value` lines plus named, dimensioned decimal
           array sections printed with 17 significant digits (exact float64
           round-trip).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .decompose import DecompConfig
from .engine import AblationMode, AdaptState
from .errors import ConfigError, DataFormatError, ShapeError
from .network import CorrectionNet
from .optim import AdamState, SgdState
from .series import NodeVector, SeriesTensor


def _fmt(v: float) -> str:
    """Shortest decimal that round-trips the float64 exactly; `nan` if missing."""
    return repr(float(v))


def _fmt17(v: float) -> str:
    return format(float(v), ".17g")


def _parse_float(token: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise DataFormatError(f"bad numeric token {token!r}", line=line) from None


def _parse_dim(text: str, key: str, line: int) -> int:
    prefix = key + "="
    if not text.startswith(prefix):
        raise DataFormatError(f"expected {prefix}<int>, got {text!r}", line=line)
    try:
        value = int(text[len(prefix) :])
    except ValueError:
        raise DataFormatError(f"expected {prefix}<int>, got {text!r}", line=line) from None
    if value < 1:
        raise DataFormatError(f"{key} must be positive, got {value}", line=line)
    return value


def _grid_lines(values: np.ndarray, mask: np.ndarray):
    # One text line per leading index; nan token where masked out.
    flat_v = values.reshape(values.shape[0], -1)
    flat_m = mask.reshape(mask.shape[0], -1)
    for row_v, row_m in zip(flat_v, flat_m):
        yield " ".join(_fmt(v) if ok else "nan" for v, ok in zip(row_v, row_m))


def save_dataset(path: str | Path, data: SeriesTensor) -> None:
    n, t, c = data.shape
    lines = ["STTF v1", f"N={n} T={t} C={c}"]
    # step-major on disk: transpose to (T, N, C)
    lines.extend(_grid_lines(data.values.transpose(1, 0, 2), data.mask.transpose(1, 0, 2)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path: str | Path) -> SeriesTensor:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "STTF v1":
        raise DataFormatError("expected header 'STTF v1'", line=1)
    if len(lines) < 2:
        raise DataFormatError("missing dimensions line", line=2)
    dims = lines[1].split()
    if len(dims) != 3:
        raise DataFormatError(f"expected 'N=.. T=.. C=..', got {lines[1]!r}", line=2)
    n = _parse_dim(dims[0], "N", 2)
    t = _parse_dim(dims[1], "T", 2)
    c = _parse_dim(dims[2], "C", 2)
    body = [ln for ln in lines[2:] if ln.strip()]
    if len(body) != t:
        raise DataFormatError(f"expected {t} data lines, found {len(body)}", line=3 + len(body))
    grid = np.empty((t, n, c))
    for i, ln in enumerate(body):
        tokens = ln.split()
        if len(tokens) != n * c:
            raise DataFormatError(
                f"expected {n * c} values, found {len(tokens)}", line=3 + i
            )
        grid[i] = np.array(
            [_parse_float(tok, 3 + i) for tok in tokens]
        ).reshape(n, c)
    return SeriesTensor.of(grid.transpose(1, 0, 2))


def save_predictions(path: str | Path, entries: list[SeriesTensor]) -> None:
    if not entries:
        raise ShapeError("cannot save an empty prediction stream")
    n, h, c = entries[0].shape
    lines = ["PRED v1", f"E={len(entries)} N={n} H={h} C={c}"]
    for e in entries:
        if e.shape != (n, h, c):
            raise ShapeError(f"inhomogeneous entry shape {e.shape} != {(n, h, c)}")
        lines.extend(_grid_lines(e.values.transpose(1, 0, 2), e.mask.transpose(1, 0, 2)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_predictions(path: str | Path) -> list[SeriesTensor]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "PRED v1":
        raise DataFormatError("expected header 'PRED v1'", line=1)
    if len(lines) < 2:
        raise DataFormatError("missing dimensions line", line=2)
    dims = lines[1].split()
    if len(dims) != 4:
        raise DataFormatError(f"expected 'E=.. N=.. H=.. C=..', got {lines[1]!r}", line=2)
    e = _parse_dim(dims[0], "E", 2)
    n = _parse_dim(dims[1], "N", 2)
    h = _parse_dim(dims[2], "H", 2)
    c = _parse_dim(dims[3], "C", 2)
    body = [ln for ln in lines[2:] if ln.strip()]
    if len(body) != e * h:
        raise DataFormatError(f"expected {e * h} data lines, found {len(body)}", line=3 + len(body))
    out = []
    for k in range(e):
        grid = np.empty((h, n, c))
        for j in range(h):
            line_no = 3 + k * h + j
            tokens = body[k * h + j].split()
            if len(tokens) != n * c:
                raise DataFormatError(f"expected {n * c} values, found {len(tokens)}", line=line_no)
            grid[j] = np.array([_parse_float(tok, line_no) for tok in tokens]).reshape(n, c)
        out.append(SeriesTensor.of(grid.transpose(1, 0, 2)))
    return out


def split(data: SeriesTensor | int, fractions: tuple[float, float, float]):
    """Chronological train/val/test ranges with boundaries at floor(T*cumfrac)."""
    n_steps = data if isinstance(data, int) else data.n_steps
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError(f"need three positive fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)!r}")
    a = int(np.floor(n_steps * fractions[0]))
    b = int(np.floor(n_steps * (fractions[0] + fractions[1])))
    parts = (range(0, a), range(a, b), range(b, n_steps))
    if any(len(p) == 0 for p in parts):
        raise ConfigError(f"split {fractions} leaves an empty part for {n_steps} steps")
    return parts


def parse_fractions(text: str) -> tuple[float, float, float]:
    """'6:2:2' -> (0.6, 0.2, 0.2)."""
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError:
        raise ConfigError(f"bad split {text!r}; expected e.g. 6:2:2") from None
    if len(parts) != 3 or sum(parts) <= 0:
        raise ConfigError(f"bad split {text!r}; expected three nonnegative numbers")
    total = sum(parts)
    return tuple(p / total for p in parts)


def make_entries(
    data: SeriesTensor, t_in: int, t_out: int, step_range: range
) -> list[tuple[SeriesTensor, SeriesTensor]]:
    """Stride-1 sliding (x, y) windows inside step_range.

    Entry k: x = steps [k, k+t_in), y = steps [k+t_in, k+t_in+t_out); there
    are len(step_range) - t_in - t_out + 1 of them.
    """
    if t_in < 1 or t_out < 1:
        raise ConfigError(f"window lengths must be positive, got {t_in}, {t_out}")
    span = len(step_range)
    count = span - t_in - t_out + 1
    if count < 1:
        raise ConfigError(
            f"range of {span} steps is too short for windows {t_in}+{t_out}"
        )
    base = step_range.start
    out = []
    for k in range(count):
        x = data.steps(base + k, base + k + t_in)
        y = data.steps(base + k + t_in, base + k + t_in + t_out)
        out.append((x, y))
    return out


# --- checkpoint container ---------------------------------------------------


def save_checkpoint(
    path: str | Path, kind: str, meta: dict[str, str], sections: dict[str, np.ndarray]
) -> None:
    lines = [f"CKPT v1 {kind}"]
    for key, value in meta.items():
        lines.append(f"meta {key} {value}")
    for name, arr in sections.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim < 1 or arr.ndim > 3:
            raise ShapeError(f"section {name}: only 1-3 dimensional arrays supported")
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"section {name} {dims}")
        rows = arr.reshape(-1, arr.shape[-1]) if arr.ndim > 1 else arr.reshape(1, -1)
        for row in rows:
            lines.append(" ".join(_fmt17(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path: str | Path):
    """Returns (kind, meta dict, ordered sections dict of float64 arrays)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("CKPT v1 "):
        raise DataFormatError("expected header 'CKPT v1 <kind>'", line=1)
    kind = lines[0][len("CKPT v1 ") :].strip()
    if not kind:
        raise DataFormatError("missing checkpoint kind", line=1)
    meta: dict[str, str] = {}
    sections: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        if line.startswith("meta "):
            parts = line.split(maxsplit=2)
            if len(parts) != 3:
                raise DataFormatError(f"bad meta line {line!r}", line=i + 1)
            meta[parts[1]] = parts[2]
            i += 1
        elif line.startswith("section "):
            parts = line.split()
            if len(parts) < 3 or len(parts) > 5:
                raise DataFormatError(f"bad section line {line!r}", line=i + 1)
            name = parts[1]
            try:
                shape = tuple(int(p) for p in parts[2:])
            except ValueError:
                raise DataFormatError(f"bad section dims in {line!r}", line=i + 1) from None
            if any(d < 1 for d in shape):
                raise DataFormatError(f"section {name}: dims must be positive", line=i + 1)
            n_rows = 1 if len(shape) == 1 else int(np.prod(shape[:-1]))
            row_len = shape[-1]
            data = np.empty((n_rows, row_len))
            for r in range(n_rows):
                i += 1
                if i >= len(lines):
                    raise DataFormatError(f"section {name}: unexpected end of file", line=i)
                tokens = lines[i].split()
                if len(tokens) != row_len:
                    raise DataFormatError(
                        f"section {name}: expected {row_len} values, found {len(tokens)}",
                        line=i + 1,
                    )
                data[r] = [_parse_float(tok, i + 1) for tok in tokens]
            sections[name] = data.reshape(shape)
            i += 1
        else:
            raise DataFormatError(f"unrecognized line {line!r}", line=i + 1)
    return kind, meta, sections


# --- adapt-state checkpoints -------------------------------------------------

_NET_FIELDS = ("w1", "b1", "ln_gain", "ln_bias", "w2", "b2")


def save_state(path: str | Path, state: AdaptState) -> None:
    meta = {
        "mode": state.mode.value,
        "kernel": str(state.decomp_cfg.kernel),
        "entries_seen": str(state.entries_seen),
        "loss": state.loss_kind,
        "activation": state.activation,
        "clip": "-" if state.clip is None else _fmt17(state.clip),
        "freeze": "-" if not state.freeze else ",".join(sorted(state.freeze)),
        "dtype": np.dtype(state.dtype).name,
    }
    if isinstance(state.opt, AdamState):
        meta.update(
            optimizer="adam",
            lr=_fmt17(state.opt.lr),
            beta1=_fmt17(state.opt.beta1),
            beta2=_fmt17(state.opt.beta2),
            eps=_fmt17(state.opt.eps),
            opt_step=str(state.opt.step),
        )
    else:
        meta.update(optimizer="sgd", lr=_fmt17(state.opt.lr))
    sections: dict[str, np.ndarray] = {}
    for prefix, net in (("seasonal_net", state.seasonal_net), ("trend_net", state.trend_net)):
        for fname, arr in zip(_NET_FIELDS, net.arrays()):
            sections[f"{prefix}_{fname}"] = arr
    sections["seasonal_scale"] = state.seasonal_scale.values
    sections["trend_scale"] = state.trend_scale.values
    if isinstance(state.opt, AdamState):
        sections["opt_m"] = state.opt.m
        sections["opt_v"] = state.opt.v
    save_checkpoint(path, "adapt-state", meta, sections)


def load_state(path: str | Path) -> AdaptState:
    kind, meta, sections = load_checkpoint(path)
    if kind != "adapt-state":
        raise DataFormatError(f"expected an adapt-state checkpoint, got kind {kind!r}")
    try:
        mode = AblationMode(meta["mode"])
        dtype = np.dtype(meta.get("dtype", "float64")).type
        nets = {}
        for prefix in ("seasonal_net", "trend_net"):
            nets[prefix] = CorrectionNet(
                *(sections[f"{prefix}_{f}"].astype(dtype) for f in _NET_FIELDS)
            )
        seasonal_scale = NodeVector.of(sections["seasonal_scale"], dtype=dtype)
        trend_scale = NodeVector.of(sections["trend_scale"], dtype=dtype)
        if meta["optimizer"] == "adam":
            opt: AdamState | SgdState = AdamState(
                m=sections["opt_m"].astype(dtype),
                v=sections["opt_v"].astype(dtype),
                step=int(meta["opt_step"]),
                lr=float(meta["lr"]),
                beta1=float(meta["beta1"]),
                beta2=float(meta["beta2"]),
                eps=float(meta["eps"]),
            )
        else:
            opt = SgdState(lr=float(meta["lr"]))
        state = AdaptState(
            mode=mode,
            seasonal_net=nets["seasonal_net"],
            trend_net=nets["trend_net"],
            seasonal_scale=seasonal_scale,
            trend_scale=trend_scale,
            opt=opt,
            decomp_cfg=DecompConfig(kernel=int(meta["kernel"])),
            entries_seen=int(meta["entries_seen"]),
            loss_kind=meta["loss"],
            activation=meta["activation"],
            clip=None if meta["clip"] == "-" else float(meta["clip"]),
            freeze=frozenset() if meta["freeze"] == "-" else frozenset(meta["freeze"].split(",")),
        )
    except KeyError as exc:
        raise DataFormatError(f"checkpoint missing field {exc}") from None
    if seasonal_scale.n_nodes != trend_scale.n_nodes:
        raise ShapeError("scale vectors disagree on node count")
    from .engine import trainable_size

    if isinstance(opt, AdamState) and opt.m.size != trainable_size(state):
        raise ShapeError(
            f"optimizer moments ({opt.m.size}) do not match trainable size "
            f"({trainable_size(state)})"
        )
    return state
