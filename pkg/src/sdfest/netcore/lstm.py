"""LSTM cell and sequence encoder.

One step, for input x_t, previous state h and previous cell c:

    candidate = tanh(Wh_c h + Wx_c x + b_c)
    input_g   = sigmoid(Wh_i h + Wx_i x + b_i)
    forget_g  = sigmoid(Wh_f h + Wx_f x + b_f)
    out_g     = sigmoid(Wh_o h + Wx_o x + b_o)
    c_t       = forget_g * c + input_g * candidate
    h_t       = out_g * tanh(c_t)

The encoder starts from h_0 = c_0 = 0 and is causal by construction:
h_t depends only on inputs up to and including t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ffn import NetworkDimensionError
from .params import NetworkParams, ParamBinding, init_params
from .tape import Tensor, as_tensor, stack_rows

_GATES = ("c", "i", "f", "o")


@dataclass(frozen=True)
class LstmSpec:
    input_dim: int
    state_dim: int

    def __post_init__(self):
        if self.input_dim < 1 or self.state_dim < 1:
            raise NetworkDimensionError("LSTM dims must be >= 1")

    def layout(self) -> dict[str, tuple[int, ...]]:
        out: dict[str, tuple[int, ...]] = {}
        for gate in _GATES:
            out[f"Wh_{gate}"] = (self.state_dim, self.state_dim)
            out[f"Wx_{gate}"] = (self.state_dim, self.input_dim)
            out[f"b_{gate}"] = (self.state_dim,)
        return out

    def init(self, rng) -> NetworkParams:
        return init_params(self.layout(), rng)


def lstm_step_apply(
    spec: LstmSpec,
    binding: ParamBinding,
    x_t: Tensor,
    h_prev: Tensor,
    c_prev: Tensor,
) -> tuple[Tensor, Tensor]:
    """Differentiable single step on 1-d tensors (input_dim,) / (state_dim,)."""
    x_t, h_prev, c_prev = as_tensor(x_t), as_tensor(h_prev), as_tensor(c_prev)
    if x_t.shape != (spec.input_dim,):
        raise NetworkDimensionError(f"x_t has shape {x_t.shape}, expected ({spec.input_dim},)")
    if h_prev.shape != (spec.state_dim,) or c_prev.shape != (spec.state_dim,):
        raise NetworkDimensionError("state vectors must have shape (state_dim,)")

    def gate(name: str) -> Tensor:
        return (
            binding[f"Wh_{name}"] @ h_prev
            + binding[f"Wx_{name}"] @ x_t
            + binding[f"b_{name}"]
        )

    candidate = gate("c").tanh()
    input_g = gate("i").sigmoid()
    forget_g = gate("f").sigmoid()
    out_g = gate("o").sigmoid()
    c_t = forget_g * c_prev + input_g * candidate
    h_t = out_g * c_t.tanh()
    return h_t, c_t


def lstm_encode_apply(
    spec: LstmSpec, binding: ParamBinding, sequence: np.ndarray
) -> Tensor:
    """Differentiable encoding of a (T, input_dim) array into (T, state_dim)."""
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2 or sequence.shape[1] != spec.input_dim:
        raise NetworkDimensionError(
            f"sequence has shape {sequence.shape}, expected (T, {spec.input_dim})"
        )
    if sequence.shape[0] == 0:
        raise ValueError("cannot encode an empty sequence")
    h = Tensor(np.zeros(spec.state_dim))
    c = Tensor(np.zeros(spec.state_dim))
    rows = []
    for t in range(sequence.shape[0]):
        h, c = lstm_step_apply(spec, binding, Tensor(sequence[t]), h, c)
        rows.append(h)
    return stack_rows(rows)


def lstm_step(
    spec: LstmSpec,
    params: NetworkParams,
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Plain-array single step."""
    params.check_finite()
    h, c = lstm_step_apply(
        spec, ParamBinding(params), Tensor(x_t), Tensor(h_prev), Tensor(c_prev)
    )
    return h.data, c.data


def lstm_encode(spec: LstmSpec, params: NetworkParams, sequence: np.ndarray) -> np.ndarray:
    """Plain-array encoding; h_0 = c_0 = 0."""
    return lstm_encode_apply(spec, ParamBinding(params), sequence).data
