"""Dense feedforward stacks: affine + ReLU hidden layers, linear output.

Hidden activations can be masked by inverted dropout during training;
evaluation applies no masking and needs no rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import NetworkParams, ParamBinding, init_params
from .tape import Tensor, affine, as_tensor


class NetworkDimensionError(ValueError):
    """Input or parameter dimensions do not match the network spec."""


@dataclass(frozen=True)
class FeedforwardSpec:
    input_dim: int
    hidden_dims: tuple[int, ...] = ()
    output_dim: int = 1
    keep_prob: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1 or any(d < 1 for d in self.hidden_dims):
            raise NetworkDimensionError("all layer dimensions must be >= 1")
        if not 0.0 < self.keep_prob <= 1.0:
            raise NetworkDimensionError("keep_prob must be in (0, 1]")

    def layout(self) -> dict[str, tuple[int, ...]]:
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        out: dict[str, tuple[int, ...]] = {}
        for layer, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            out[f"W{layer}"] = (d_out, d_in)
            out[f"b{layer}"] = (d_out,)
        return out

    def init(self, rng) -> NetworkParams:
        return init_params(self.layout(), rng)

    @property
    def n_layers(self) -> int:
        return len(self.hidden_dims)


def ffn_apply(
    spec: FeedforwardSpec,
    binding: ParamBinding,
    x: Tensor,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Forward pass on a (n, input_dim) tensor; differentiable.

    In train mode each hidden layer's ReLU output is multiplied by an
    inverted-scaling dropout mask drawn from ``rng``.
    """
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise NetworkDimensionError(
            f"input has shape {x.shape}, expected (n, {spec.input_dim})"
        )
    if train and spec.keep_prob < 1.0 and rng is None:
        raise ValueError("train-mode dropout needs a random generator")

    h = x
    n_hidden = len(spec.hidden_dims)
    for layer in range(n_hidden + 1):
        W = binding[f"W{layer}"]
        b = binding[f"b{layer}"]
        if W.shape[1] != h.shape[1]:
            raise NetworkDimensionError(
                f"layer {layer}: weight expects {W.shape[1]} inputs, got {h.shape[1]}"
            )
        h = affine(h, W, b)
        if layer < n_hidden:
            if train and spec.keep_prob < 1.0:
                h = _relu_dropout(h, spec.keep_prob, rng)
            else:
                h = h.relu()
    return h


def _relu_dropout(h: Tensor, keep_prob: float, rng: np.random.Generator) -> Tensor:
    """Fused ReLU + inverted-dropout node (one coefficient array)."""
    coeff = dropout_mask(rng, h.shape, keep_prob)
    coeff *= h.data > 0.0

    def backward(g):
        if h.requires_grad:
            h._accumulate(g * coeff, own=True)

    return Tensor._node(h.data * coeff, (h,), backward)


def dropout_mask(rng: np.random.Generator, shape, keep_prob: float) -> np.ndarray:
    """Inverted-scaling mask: keep with probability ``keep_prob``, scale 1/keep."""
    keep = rng.random(shape, dtype=np.float32) < keep_prob
    return keep / keep_prob


def ffn_forward(
    spec: FeedforwardSpec,
    params: NetworkParams,
    x: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Plain-array forward pass. ``x`` may be a single vector or (n, d) batch."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    out = ffn_apply(
        spec, ParamBinding(params), Tensor(x), train=(mode == "train"), rng=rng
    ).data
    return out[0] if single else out
