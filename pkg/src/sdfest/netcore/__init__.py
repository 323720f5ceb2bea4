"""Minimal differentiable-computation layer: FFN stacks, LSTM cells,
reverse-mode gradients and Adam."""

from .adam import AdamState, adam_update
from .ffn import (
    FeedforwardSpec,
    NetworkDimensionError,
    dropout_mask,
    ffn_apply,
    ffn_forward,
)
from .lstm import LstmSpec, lstm_encode, lstm_encode_apply, lstm_step, lstm_step_apply
from .params import (
    LayoutError,
    NetworkParams,
    ParamBinding,
    init_params,
)
from .tape import GradientStateError, Tensor, as_tensor, concat, stack_rows

__all__ = [
    "AdamState",
    "adam_update",
    "FeedforwardSpec",
    "NetworkDimensionError",
    "dropout_mask",
    "ffn_apply",
    "ffn_forward",
    "LstmSpec",
    "lstm_encode",
    "lstm_encode_apply",
    "lstm_step",
    "lstm_step_apply",
    "LayoutError",
    "NetworkParams",
    "ParamBinding",
    "init_params",
    "GradientStateError",
    "Tensor",
    "as_tensor",
    "concat",
    "stack_rows",
]
