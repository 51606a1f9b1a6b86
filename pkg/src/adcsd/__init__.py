"""Streaming per-entry correction of frozen spatial-temporal forecasts.

A frozen base forecaster's output is decomposed into seasonal and
trend-cyclical parts, each is corrected by a small trainable module, and the
corrections are recombined with per-node adaptive scales that start at zero.
After every prediction the newly arrived ground truth drives exactly one
optimizer step on the correction parameters; the base model never changes.
"""

from . import _kernels
from .decompose import DecompConfig, Decomposition, decompose
from .driftsim import DriftScenario, generate
from .engine import (
    AblationMode,
    AdaptState,
    RunReport,
    StreamEntry,
    adapt,
    init_state,
    predict,
    residual_witness,
    run_stream,
    skip_connection_losses,
)
from .errors import (
    AdcsdError,
    ConfigError,
    ContractError,
    DataFormatError,
    DegenerateInputError,
    ShapeError,
)
from .metrics import MetricReport, compute_metrics
from .network import CorrectionNet, NetGradients, forward, backward, gelu, init_net, layer_norm, param_count
from .optim import AdamState, SgdState, adam_step, grad_check, sgd_step
from .series import NodeVector, SeriesTensor, add, broadcast_scale, masked_mse

__version__ = "0.1.0"

__all__ = [
    "AblationMode",
    "AdamState",
    "AdaptState",
    "AdcsdError",
    "ConfigError",
    "ContractError",
    "CorrectionNet",
    "DataFormatError",
    "DecompConfig",
    "Decomposition",
    "DegenerateInputError",
    "DriftScenario",
    "MetricReport",
    "NetGradients",
    "NodeVector",
    "RunReport",
    "SeriesTensor",
    "SgdState",
    "ShapeError",
    "StreamEntry",
    "__version__",
    "adapt",
    "adam_step",
    "add",
    "backward",
    "broadcast_scale",
    "compute_metrics",
    "decompose",
    "forward",
    "gelu",
    "generate",
    "grad_check",
    "init_net",
    "init_state",
    "layer_norm",
    "masked_mse",
    "param_count",
    "predict",
    "residual_witness",
    "run_stream",
    "sgd_step",
    "skip_connection_losses",
]
