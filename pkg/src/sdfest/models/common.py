"""Shared machinery for the panel estimators.

Dense input building (characteristics plus broadcast macro states), the
masked per-month mean-squared-error network trainer used by both the
return forecaster and the risk-loading networks, and small persistence
helpers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data import PanelDataset
from ..netcore import (
    AdamState,
    FeedforwardSpec,
    ParamBinding,
    Tensor,
    adam_update,
    concat,
    ffn_apply,
)


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""


def flat_inputs(
    panel: PanelDataset, states: np.ndarray | None, month_range: tuple[int, int]
) -> np.ndarray:
    """(T*N, p [+ state_dim]) design matrix for FFN evaluation on a range."""
    lo, hi = month_range
    chars = panel.chars[lo:hi]
    T, N, p = chars.shape
    blocks = [chars.reshape(T * N, p)]
    if states is not None:
        rep = np.repeat(states[lo:hi], N, axis=0)
        blocks.append(rep)
    return np.concatenate(blocks, axis=1) if len(blocks) > 1 else blocks[0]


def flat_inputs_tensor(
    panel: PanelDataset, states: Tensor | None, month_range: tuple[int, int]
) -> Tensor:
    """Differentiable version of :func:`flat_inputs` (states carry gradients)."""
    lo, hi = month_range
    chars = panel.chars[lo:hi]
    T, N, p = chars.shape
    chars_flat = Tensor(chars.reshape(T * N, p))
    if states is None:
        return chars_flat
    rows = states[slice(lo, hi)] if (lo, hi) != (0, states.shape[0]) else states
    # broadcast each month's state across that month's assets
    rep = (rows.reshape(T, 1, -1) * Tensor(np.ones((1, N, 1)))).reshape(
        T * N, rows.shape[1]
    )
    return concat([chars_flat, rep], axis=1)


def monthly_weight_matrix(panel: PanelDataset) -> np.ndarray:
    """mask / N_t, the per-observation weight that makes months comparable."""
    return panel.mask / panel.counts()[:, None]


@dataclass
class FitResult:
    params: "object"
    loss_history: list[float]
    stopped_epoch: int | None = None


def _mse_weights(mask: np.ndarray) -> np.ndarray:
    T = mask.shape[0]
    return (mask / np.maximum(mask.sum(axis=1, keepdims=True), 1)).reshape(-1) / T


def fit_masked_mse_ffn(
    spec: FeedforwardSpec,
    inputs: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
    lr: float,
    epochs: int,
    seed,
    keep_best: bool = True,
    validation: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    patience: int = 5,
) -> FitResult:
    """Train an FFN on (1/T) sum_t (1/N_t) sum_i (y - mu)^2 with Adam.

    ``inputs`` is the flat (T*N, k) design matrix; ``targets`` and ``mask``
    are (T, N).  Dropout is active during training; the tracked loss and the
    best-parameter selection use eval-mode forwards.

    With ``validation`` = (inputs, targets, mask) training stops early once
    the validation loss has not improved for ``patience`` consecutive
    epochs, and the parameters with the best validation loss are kept; the
    selection criterion is then the validation rather than training loss.
    """
    weights = _mse_weights(mask)
    y = targets.reshape(-1)

    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_ss, dropout_ss = seq.spawn(2)
    params = spec.init(np.random.default_rng(init_ss))
    rng = np.random.default_rng(dropout_ss)
    adam = AdamState.for_size(params.size, lr=lr)
    binding = ParamBinding(params, trainable=True)
    x_tensor = Tensor(inputs)
    w_tensor = Tensor(weights)
    y_tensor = Tensor(y)

    if validation is not None:
        v_inputs, v_targets, v_mask = validation
        v_weights = _mse_weights(v_mask)
        v_y = v_targets.reshape(-1)
        v_x = Tensor(v_inputs)

    def eval_loss(x, target_vec, weight_vec) -> float:
        mu = ffn_apply(spec, ParamBinding(params), x).data[:, 0]
        return float(np.sum(weight_vec * (target_vec - mu) ** 2))

    def selection_loss() -> float:
        if validation is not None:
            return eval_loss(v_x, v_y, v_weights)
        return eval_loss(x_tensor, y, weights)

    history = [selection_loss()]
    best = (history[0], params.values.copy())
    stopped = None
    stale = 0
    for epoch in range(epochs):
        binding.zero_grad()
        mu = ffn_apply(spec, binding, x_tensor, train=True, rng=rng)
        err = mu.reshape(-1) - y_tensor
        loss = (err.square() * w_tensor).sum()
        if not np.isfinite(loss.data):
            raise TrainingDivergedError("forecaster loss became non-finite")
        loss.backward()
        adam_update(adam, params.values, binding.grad_vector())
        current = selection_loss()
        history.append(current)
        if current < best[0]:
            best = (current, params.values.copy())
            stale = 0
        else:
            stale += 1
            if validation is not None and stale >= patience:
                stopped = epoch + 1
                break
    if keep_best or validation is not None:
        params.values[...] = best[1]
    return FitResult(params=params, loss_history=history, stopped_epoch=stopped)


def write_manifest(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))


def read_manifest(path: Path) -> dict:
    return json.loads(path.read_text())
