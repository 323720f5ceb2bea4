"""Named network parameters stored in one flat vector.

Every network (feedforward stack, LSTM cell) describes its parameters as
an ordered ``name -> shape`` layout.  ``NetworkParams`` owns a single flat
float64 vector and exposes reshaped views per name, so an optimizer can
treat the whole network as one vector while forward code addresses the
pieces by name.

Checkpoint format (``.npz``): one array per parameter name plus
``__names__`` (layout order) and ``__format_version__``.  Round-trips are
value-exact.
"""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .tape import GradientStateError, Tensor

CHECKPOINT_FORMAT_VERSION = 1


class LayoutError(ValueError):
    """Parameter layout does not match the parameter vector."""


class NetworkParams:
    """Flat parameter vector plus a ``name -> (offset, shape)`` layout map."""

    def __init__(self, layout: Mapping[str, tuple[int, ...]], values: np.ndarray | None = None):
        offsets: dict[str, tuple[int, tuple[int, ...]]] = {}
        pos = 0
        for name, shape in layout.items():
            shape = tuple(int(s) for s in shape)
            offsets[name] = (pos, shape)
            pos += int(np.prod(shape)) if shape else 1
        self.layout = offsets
        if values is None:
            values = np.zeros(pos, dtype=np.float64)
        else:
            values = np.asarray(values, dtype=np.float64)
            if values.shape != (pos,):
                raise LayoutError(
                    f"layout covers {pos} values but vector has shape {values.shape}"
                )
        self.values = values

    @property
    def size(self) -> int:
        return self.values.size

    def view(self, name: str) -> np.ndarray:
        """Reshaped view into the flat vector; writes propagate."""
        offset, shape = self.layout[name]
        n = int(np.prod(shape)) if shape else 1
        return self.values[offset : offset + n].reshape(shape)

    def names(self) -> Iterator[str]:
        return iter(self.layout)

    def copy(self) -> "NetworkParams":
        out = NetworkParams.__new__(NetworkParams)
        out.layout = self.layout
        out.values = self.values.copy()
        return out

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.values)):
            bad = int(np.flatnonzero(~np.isfinite(self.values))[0])
            raise FloatingPointError(f"non-finite parameter at flat index {bad}")

    # -- checkpoint io -------------------------------------------------------
    def save(self, path) -> None:
        arrays = {name: self.view(name).copy() for name in self.layout}
        arrays["__names__"] = np.array(list(self.layout), dtype=str)
        arrays["__format_version__"] = np.array(CHECKPOINT_FORMAT_VERSION)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "NetworkParams":
        with np.load(path) as data:
            version = int(data["__format_version__"])
            if version != CHECKPOINT_FORMAT_VERSION:
                raise LayoutError(f"unsupported checkpoint format version {version}")
            names = [str(n) for n in data["__names__"]]
            layout = {name: data[name].shape for name in names}
            out = cls(layout)
            for name in names:
                out.view(name)[...] = data[name]
        return out


def init_params(
    layout: Mapping[str, tuple[int, ...]], rng: np.random.Generator | int
) -> NetworkParams:
    """Random parameters: weights uniform on +-1/sqrt(fan_in), biases zero.

    Fan-in is the last axis of a weight matrix.  Names starting with ``b``
    are treated as biases and left at zero.  Deterministic given the seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    params = NetworkParams(layout)
    for name in params.names():
        view = params.view(name)
        if name.startswith("b") or view.ndim < 2:
            continue
        fan_in = view.shape[-1]
        scale = 1.0 / np.sqrt(fan_in)
        view[...] = rng.uniform(-scale, scale, size=view.shape)
    return params


class ParamBinding:
    """Tensor leaves over a ``NetworkParams``, one per named parameter.

    The tensor data are *views* into the flat vector, so in-place vector
    updates (e.g. an Adam step) are visible on the next forward pass
    without rebuilding the binding.
    """

    def __init__(self, params: NetworkParams, trainable: bool = False):
        self.params = params
        self.trainable = trainable
        self.tensors: dict[str, Tensor] = {}
        for name in params.names():
            t = Tensor.__new__(Tensor)
            t.data = params.view(name)
            t.grad = None
            t.requires_grad = trainable
            t._backward = None
            t._parents = ()
            self.tensors[name] = t

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def grad_vector(self) -> np.ndarray:
        """Flat gradient in layout order; zero where a parameter is unused."""
        if self.trainable and all(t.grad is None for t in self.tensors.values()):
            raise GradientStateError(
                "gradient requested before a backward pass reached these parameters"
            )
        out = np.zeros(self.params.size)
        for name, t in self.tensors.items():
            if t.grad is None:
                continue
            offset, shape = self.params.layout[name]
            n = int(np.prod(shape)) if shape else 1
            out[offset : offset + n] = t.grad.ravel()
        return out
