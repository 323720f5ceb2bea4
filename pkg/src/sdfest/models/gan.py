"""Adversarial SDF estimation.

The weight network maps firm characteristics (plus LSTM-encoded macro
states) to portfolio weights whose implied discount factor prices every
asset.  An adversarial conditional network proposes the moment conditions
that are hardest to price.  Training runs three phases: minimize the
unconditional pricing error, let the adversary maximize it, then minimize
against the trained adversary.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, asdict

import numpy as np
from sklearn.base import BaseEstimator

from ..data import PanelDataset
from ..evaluation import DegenerateSeriesError, sharpe
from ..netcore import (
    AdamState,
    FeedforwardSpec,
    LstmSpec,
    NetworkParams,
    ParamBinding,
    Tensor,
    adam_update,
    ffn_apply,
    lstm_encode,
    lstm_encode_apply,
)
from .common import (
    TrainingDivergedError,
    flat_inputs,
    flat_inputs_tensor,
    monthly_weight_matrix,
)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# pricing-error loss
# ---------------------------------------------------------------------------


def _loss_weights(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-asset (1/T_i, T_i/T) weights and the count of priced assets."""
    t_counts = mask.sum(axis=0).astype(np.float64)
    present = t_counts > 0
    inv_t = np.where(present, 1.0 / np.maximum(t_counts, 1.0), 0.0)
    share = t_counts / mask.shape[0]
    return inv_t, share * present, int(present.sum())


def gan_loss(omega: np.ndarray, g: np.ndarray, panel: PanelDataset) -> float:
    """Weighted mean squared pricing error over assets and moment columns.

    ``omega`` is (T, N) and already carries any per-month scaling; ``g`` is
    (T, N) or (T, N, d).  Asset i contributes (T_i/T) times the squared
    Euclidean norm of its time-averaged moment vector, averaged over assets
    with at least one observation.
    """
    omega = np.asarray(omega, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if g.ndim == 2:
        g = g[:, :, None]
    if omega.shape != panel.returns.shape or g.shape[:2] != panel.returns.shape:
        raise ValueError("omega/g not aligned with the panel")
    r = panel.returns * panel.mask
    inv_t, share, n_eff = _loss_weights(panel.mask)
    m = 1.0 - np.sum(omega * r, axis=1)
    pricing = m[:, None] * r
    moments = np.einsum("ti,tid->id", pricing, g) * inv_t[:, None]
    return float(np.sum(share * np.sum(moments**2, axis=1)) / n_eff)


class _LossBuilder:
    """Tensor-mode pricing loss over a fixed training range."""

    def __init__(self, panel: PanelDataset, month_range: tuple[int, int]):
        lo, hi = month_range
        self.range = month_range
        mask = panel.mask[lo:hi]
        self.returns = Tensor(panel.returns[lo:hi] * mask)
        self.scale = Tensor(monthly_weight_matrix(panel)[lo:hi])
        inv_t, share, n_eff = _loss_weights(mask)
        self.inv_t = Tensor(inv_t[:, None])
        self.share = Tensor(share)
        self.n_eff = n_eff
        self.shape = mask.shape

    def scaled_omega(self, raw: Tensor) -> Tensor:
        T, N = self.shape
        return raw.reshape(T, N) * self.scale

    def __call__(self, omega: Tensor, g: Tensor) -> Tensor:
        T, N = self.shape
        factor = (omega * self.returns).sum(axis=1)
        discount = (1.0 - factor).reshape(T, 1)
        pricing = discount * self.returns
        moments = (pricing.reshape(T, N, 1) * g).sum(axis=0) * self.inv_t
        per_asset = moments.square().sum(axis=1) * self.share
        return per_asset.sum() * (1.0 / self.n_eff)


# ---------------------------------------------------------------------------
# fitted model containers
# ---------------------------------------------------------------------------


@dataclass
class SdfModel:
    """Frozen weight network plus its macro encoder."""

    ffn_spec: FeedforwardSpec
    ffn_params: NetworkParams
    lstm_spec: LstmSpec | None
    lstm_params: NetworkParams | None
    char_names: list[str] = field(default_factory=list)
    macro_names: list[str] = field(default_factory=list)

    def _check(self, panel: PanelDataset) -> None:
        expected = panel.n_chars + (self.lstm_spec.state_dim if self.lstm_spec else 0)
        if self.ffn_spec.input_dim != expected:
            raise ValueError(
                f"panel with {panel.n_chars} characteristics and "
                f"{panel.n_macro} macro series does not match this model"
            )
        if self.lstm_spec is not None and panel.n_macro != self.lstm_spec.input_dim:
            raise ValueError("macro column count does not match the fitted encoder")

    def state_series(self, panel: PanelDataset) -> np.ndarray | None:
        """Causal macro states for every panel month (None without macro)."""
        if self.lstm_spec is None:
            return None
        self._check(panel)
        return lstm_encode(self.lstm_spec, self.lstm_params, panel.macro)

    def raw_weight_outputs(self, panel: PanelDataset) -> np.ndarray:
        """Network output per (month, asset) before the 1/N_t scaling."""
        self._check(panel)
        states = self.state_series(panel)
        x = flat_inputs(panel, states, (0, panel.n_months))
        out = ffn_apply(self.ffn_spec, ParamBinding(self.ffn_params), Tensor(x)).data
        return out[:, 0].reshape(panel.n_months, panel.n_assets)

    def weights(self, panel: PanelDataset) -> np.ndarray:
        """SDF portfolio weights: (1/N_t) x network output, masked."""
        return self.raw_weight_outputs(panel) * monthly_weight_matrix(panel)

    def factor_series(
        self, panel: PanelDataset, l1_normalize: bool = False
    ) -> tuple[np.ndarray, np.ndarray]:
        """(F_t, M_t) per month; optionally on l1-normalized weights."""
        return factor_from_weights(self.weights(panel), panel, l1_normalize)


def factor_from_weights(
    weights: np.ndarray, panel: PanelDataset, l1_normalize: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate per-asset weights into the factor F and discount series M = 1 - F."""
    w = weights * panel.mask
    if l1_normalize:
        norms = np.abs(w).sum(axis=1)
        if (norms == 0.0).any():
            t = int(np.flatnonzero(norms == 0.0)[0])
            raise DegenerateSeriesError(
                f"cannot l1-normalize zero weights in month {panel.months[t]}"
            )
        w = w / norms[:, None]
    factor = np.sum(w * panel.returns * panel.mask, axis=1)
    return factor, 1.0 - factor


@dataclass
class ConditionalModel:
    """Frozen adversary: moment-generating network plus its macro encoder."""

    ffn_spec: FeedforwardSpec
    ffn_params: NetworkParams
    lstm_spec: LstmSpec | None
    lstm_params: NetworkParams | None

    def state_series(self, panel: PanelDataset) -> np.ndarray | None:
        if self.lstm_spec is None:
            return None
        return lstm_encode(self.lstm_spec, self.lstm_params, panel.macro)

    def moments(self, panel: PanelDataset) -> np.ndarray:
        """(T, N, d) conditioning outputs."""
        states = self.state_series(panel)
        x = flat_inputs(panel, states, (0, panel.n_months))
        out = ffn_apply(self.ffn_spec, ParamBinding(self.ffn_params), Tensor(x)).data
        return out.reshape(panel.n_months, panel.n_assets, -1)


class EnsembleModel:
    """Average of identically configured models trained from different seeds."""

    def __init__(self, members: list):
        if not members:
            raise ValueError("ensemble needs at least one member")
        specs = {getattr(m, "ffn_spec", None) for m in members}
        if len(specs) > 1:
            raise ValueError("ensemble members must share hyperparameters")
        self.members = list(members)

    def weights(self, panel: PanelDataset) -> np.ndarray:
        stacked = np.stack([m.weights(panel) for m in self.members])
        return stacked.mean(axis=0)

    def factor_series(
        self, panel: PanelDataset, l1_normalize: bool = False
    ) -> tuple[np.ndarray, np.ndarray]:
        return factor_from_weights(self.weights(panel), panel, l1_normalize)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class _Side:
    """One player's parameters: FFN plus optional LSTM encoder."""

    def __init__(
        self,
        ffn_spec: FeedforwardSpec,
        lstm_spec: LstmSpec | None,
        init_seqs,
    ):
        self.ffn_spec = ffn_spec
        self.lstm_spec = lstm_spec
        self.ffn_params = ffn_spec.init(np.random.default_rng(init_seqs[0]))
        self.lstm_params = (
            lstm_spec.init(np.random.default_rng(init_seqs[1])) if lstm_spec else None
        )

    def param_sets(self) -> list[NetworkParams]:
        out = [self.ffn_params]
        if self.lstm_params is not None:
            out.append(self.lstm_params)
        return out

    def forward(
        self,
        panel: PanelDataset,
        month_range: tuple[int, int],
        trainable: bool,
        rng: np.random.Generator | None,
    ) -> tuple[Tensor, list[ParamBinding]]:
        """Flat network output over the range; bindings returned for gradients."""
        bindings = []
        ffn_binding = ParamBinding(self.ffn_params, trainable=trainable)
        bindings.append(ffn_binding)
        states = None
        if self.lstm_spec is not None:
            lstm_binding = ParamBinding(self.lstm_params, trainable=trainable)
            bindings.append(lstm_binding)
            states = lstm_encode_apply(
                self.lstm_spec, lstm_binding, panel.macro[: month_range[1]]
            )
        x = flat_inputs_tensor(panel, states, month_range)
        out = ffn_apply(self.ffn_spec, ffn_binding, x, train=trainable, rng=rng)
        return out, bindings


def _run_phase(
    name: str,
    train_forward,
    eval_forward,
    side: _Side,
    lr: float,
    epochs: int,
    sign: float,
    keep_best: bool,
    eval_every: int = 1,
) -> list[float]:
    """Adam loop over one side's parameters; returns the eval-loss history.

    ``sign`` is +1 to minimize and -1 to maximize.  With ``keep_best`` the
    parameters achieving the best eval-mode objective among the evaluated
    epochs (every ``eval_every``-th, plus the last) are restored at the end.
    """
    params_list = side.param_sets()
    adams = [AdamState.for_size(p.size, lr=lr) for p in params_list]
    history = [eval_forward()]
    best_loss = history[0]
    best_values = [p.values.copy() for p in params_list]
    for epoch in range(epochs):
        loss_tensor, bindings = train_forward()
        if not np.isfinite(loss_tensor.data):
            raise TrainingDivergedError(f"{name}: non-finite loss at epoch {epoch}")
        loss_tensor.backward()
        for params, binding, adam in zip(params_list, bindings, adams):
            adam_update(adam, params.values, sign * binding.grad_vector())
        if epoch % eval_every == 0 or epoch == epochs - 1:
            current = eval_forward()
            history.append(current)
            if keep_best and (current < best_loss if sign > 0 else current > best_loss):
                best_loss = current
                best_values = [p.values.copy() for p in params_list]
    if keep_best:
        for params, values in zip(params_list, best_values):
            params.values[...] = values
    return history


class SdfGan(BaseEstimator):
    """Adversarially trained SDF weight network with macro state encoding.

    Parameters mirror the tuning grid: the weight network has
    ``hidden_layers`` layers of ``hidden_units``, its macro encoder produces
    ``state_dim`` states; the adversary generates ``cond_moments`` moment
    columns from ``cond_hidden_layers`` layers and ``cond_state_dim`` macro
    states.  ``unconditional=True`` stops after the first training phase
    (moment conditions fixed at 1) but keeps the macro states in the weight
    network.
    """

    def __init__(
        self,
        hidden_layers: int = 2,
        hidden_units: int = 64,
        state_dim: int = 4,
        cond_state_dim: int = 32,
        cond_hidden_layers: int = 0,
        cond_moments: int = 8,
        learning_rate: float = 0.001,
        keep_prob: float = 0.95,
        epochs_unconditional: int = 256,
        epochs_adversary: int = 256,
        epochs_final: int = 256,
        unconditional: bool = False,
        keep_best: bool = True,
        eval_every: int = 1,
        seed: int = 0,
    ):
        self.hidden_layers = hidden_layers
        self.hidden_units = hidden_units
        self.state_dim = state_dim
        self.cond_state_dim = cond_state_dim
        self.cond_hidden_layers = cond_hidden_layers
        self.cond_moments = cond_moments
        self.learning_rate = learning_rate
        self.keep_prob = keep_prob
        self.epochs_unconditional = epochs_unconditional
        self.epochs_adversary = epochs_adversary
        self.epochs_final = epochs_final
        self.unconditional = unconditional
        self.keep_best = keep_best
        self.eval_every = eval_every
        self.seed = seed

    # -- fitting -----------------------------------------------------------
    def fit(self, panel: PanelDataset, train_range: tuple[int, int] | None = None):
        if train_range is None:
            train_range = (0, panel.n_months)
        lo, hi = train_range
        has_macro = panel.n_macro > 0

        seq = np.random.SeedSequence(self.seed)
        sdf_seqs, cond_seqs, dropout_seq = seq.spawn(3)
        sdf_side = _Side(
            FeedforwardSpec(
                input_dim=panel.n_chars + (self.state_dim if has_macro else 0),
                hidden_dims=(self.hidden_units,) * self.hidden_layers,
                output_dim=1,
                keep_prob=self.keep_prob,
            ),
            LstmSpec(panel.n_macro, self.state_dim) if has_macro else None,
            sdf_seqs.spawn(2),
        )
        cond_side = _Side(
            FeedforwardSpec(
                input_dim=panel.n_chars + (self.cond_state_dim if has_macro else 0),
                hidden_dims=(self.hidden_units,) * self.cond_hidden_layers,
                output_dim=self.cond_moments,
                keep_prob=self.keep_prob,
            ),
            LstmSpec(panel.n_macro, self.cond_state_dim) if has_macro else None,
            cond_seqs.spawn(2),
        )
        dropout_rng = np.random.default_rng(dropout_seq)

        builder = _LossBuilder(panel, train_range)
        T, N = builder.shape
        ones = Tensor(np.ones((T, N, 1)))

        def sdf_loss(trainable: bool, g: Tensor):
            out, bindings = sdf_side.forward(panel, train_range, trainable, dropout_rng)
            loss = builder(builder.scaled_omega(out), g)
            return (loss, bindings) if trainable else float(loss.data)

        # phase 1: unconditional moments
        history_a = _run_phase(
            "unconditional phase",
            lambda: sdf_loss(True, ones),
            lambda: sdf_loss(False, ones),
            sdf_side,
            self.learning_rate,
            self.epochs_unconditional,
            sign=1.0,
            keep_best=self.keep_best,
            eval_every=self.eval_every,
        )
        self.history_ = {"unconditional": history_a}

        if not self.unconditional:
            # phase 2: adversary maximizes against the frozen weight network
            omega_frozen = Tensor(
                builder.scaled_omega(
                    sdf_side.forward(panel, train_range, False, None)[0]
                ).data
            )

            def cond_loss(trainable: bool):
                out, bindings = cond_side.forward(
                    panel, train_range, trainable, dropout_rng
                )
                g = out.reshape(T, N, self.cond_moments)
                loss = builder(omega_frozen, g)
                return (loss, bindings) if trainable else float(loss.data)

            self.history_["adversary"] = _run_phase(
                "adversary phase",
                lambda: cond_loss(True),
                lambda: cond_loss(False),
                cond_side,
                self.learning_rate,
                self.epochs_adversary,
                sign=-1.0,
                keep_best=self.keep_best,
                eval_every=self.eval_every,
            )

            # phase 3: weight network minimizes against the frozen adversary
            g_frozen = Tensor(
                cond_side.forward(panel, train_range, False, None)[0]
                .data.reshape(T, N, self.cond_moments)
            )
            self.history_["final"] = _run_phase(
                "final phase",
                lambda: sdf_loss(True, g_frozen),
                lambda: sdf_loss(False, g_frozen),
                sdf_side,
                self.learning_rate,
                self.epochs_final,
                sign=1.0,
                keep_best=self.keep_best,
                eval_every=self.eval_every,
            )

        self.model_ = SdfModel(
            ffn_spec=sdf_side.ffn_spec,
            ffn_params=sdf_side.ffn_params,
            lstm_spec=sdf_side.lstm_spec,
            lstm_params=sdf_side.lstm_params,
            char_names=list(panel.char_names),
            macro_names=list(panel.macro_names),
        )
        self.adversary_ = ConditionalModel(
            ffn_spec=cond_side.ffn_spec,
            ffn_params=cond_side.ffn_params,
            lstm_spec=cond_side.lstm_spec,
            lstm_params=cond_side.lstm_params,
        )
        self.train_range_ = train_range
        return self

    # -- fitted accessors -----------------------------------------------------
    def sdf_weights(self, panel: PanelDataset) -> np.ndarray:
        return self.model_.weights(panel)

    def sdf_factor(
        self, panel: PanelDataset, l1_normalize: bool = False
    ) -> tuple[np.ndarray, np.ndarray]:
        return self.model_.factor_series(panel, l1_normalize)


# ---------------------------------------------------------------------------
# variable importance
# ---------------------------------------------------------------------------


def _char_state_gradients(
    model: SdfModel, panel: PanelDataset
) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-observation gradients of the raw weight output.

    Returns (d_out/d_chars (T*N, p), d_out/d_states (T*N, S) or None).
    Rows of the flat design matrix are independent, so the gradient of the
    summed output recovers each observation's own gradient.
    """
    states = model.state_series(panel)
    x = Tensor(flat_inputs(panel, states, (0, panel.n_months)), requires_grad=True)
    out = ffn_apply(model.ffn_spec, ParamBinding(model.ffn_params), x)
    out.sum().backward()
    grads = x.grad
    p = panel.n_chars
    if states is None:
        return grads[:, :p], None
    return grads[:, :p], grads[:, p:]


def _lstm_input_jacobians(model: SdfModel, panel: PanelDataset) -> np.ndarray:
    """(T, S, q) Jacobians of each month's state wrt that month's macro input."""
    spec = model.lstm_spec
    params = model.lstm_params
    seq = panel.macro
    T = seq.shape[0]
    S = spec.state_dim

    def sig(z):
        return 1.0 / (1.0 + np.exp(-z))

    Wx = {g: params.view(f"Wx_{g}") for g in "cifo"}
    Wh = {g: params.view(f"Wh_{g}") for g in "cifo"}
    b = {g: params.view(f"b_{g}") for g in "cifo"}

    jac = np.empty((T, S, spec.input_dim))
    h = np.zeros(S)
    c = np.zeros(S)
    for t in range(T):
        x = seq[t]
        pre = {g: Wh[g] @ h + Wx[g] @ x + b[g] for g in "cifo"}
        cand = np.tanh(pre["c"])
        gate_i, gate_f, gate_o = sig(pre["i"]), sig(pre["f"]), sig(pre["o"])
        c_new = gate_f * c + gate_i * cand
        tanh_c = np.tanh(c_new)
        dc_dx = (
            (gate_f * (1 - gate_f) * c)[:, None] * Wx["f"]
            + (gate_i * (1 - gate_i) * cand)[:, None] * Wx["i"]
            + (gate_i * (1 - cand**2))[:, None] * Wx["c"]
        )
        jac[t] = (gate_o * (1 - gate_o) * tanh_c)[:, None] * Wx["o"] + (
            gate_o * (1 - tanh_c**2)
        )[:, None] * dc_dx
        h = gate_o * tanh_c
        c = c_new
    return jac


def variable_importance(model, panel: PanelDataset, month_range: tuple[int, int]):
    """Average absolute weight-output derivative per input, normalized to sum 1.

    Characteristics are differentiated directly through the weight network;
    macro inputs are differentiated through the final step of the state
    encoder, i.e. the effect of the current month's (transformed) macro
    observation on the current states.  The per-month 1/N_t scaling is a
    constant and is left out.  Ensembles average member gradients
    observation by observation before taking absolute values.
    """
    members = model.members if isinstance(model, EnsembleModel) else [model]
    members = [m.model_ if isinstance(m, SdfGan) else m for m in members]
    lo, hi = month_range
    N = panel.n_assets
    rows = np.zeros(panel.n_months * N, dtype=bool)
    rows.reshape(panel.n_months, N)[lo:hi] = panel.mask[lo:hi]

    char_grad_sum = None
    macro_grad_sum = None
    for member in members:
        char_grads, state_grads = _char_state_gradients(member, panel)
        if char_grad_sum is None:
            char_grad_sum = char_grads
        else:
            char_grad_sum = char_grad_sum + char_grads
        if state_grads is not None:
            jac = _lstm_input_jacobians(member, panel)  # (T, S, q)
            jac_rows = np.repeat(jac, N, axis=0)  # (T*N, S, q)
            macro_grads = np.einsum("ns,nsq->nq", state_grads, jac_rows)
            macro_grad_sum = (
                macro_grads if macro_grad_sum is None else macro_grad_sum + macro_grads
            )

    k = len(members)
    sens = list(np.abs(char_grad_sum[rows] / k).mean(axis=0))
    names = list(panel.char_names)
    if macro_grad_sum is not None:
        sens += list(np.abs(macro_grad_sum[rows] / k).mean(axis=0))
        names += list(panel.macro_names)
    total = float(np.sum(sens))
    if total == 0.0:
        raise DegenerateSeriesError("all sensitivities are zero; normalization undefined")
    return names, np.asarray(sens) / total


# ---------------------------------------------------------------------------
# hyperparameter search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GanHyperParams:
    hidden_layers: int = 2
    hidden_units: int = 64
    state_dim: int = 4
    cond_state_dim: int = 32
    cond_hidden_layers: int = 0
    cond_moments: int = 8
    learning_rate: float = 0.001
    keep_prob: float = 0.95

    @staticmethod
    def paper_grid() -> list["GanHyperParams"]:
        """The full tuning grid: 3*1*2*2*2*4*4*1 = 384 configurations."""
        combos = itertools.product(
            (2, 3, 4),  # hidden layers
            (64,),  # hidden units
            (4, 8),  # weight-network macro states
            (16, 32),  # adversary macro states
            (0, 1),  # adversary hidden layers
            (4, 8, 16, 32),  # adversary moment columns
            (0.001, 0.0005, 0.0002, 0.0001),  # learning rate
            (0.95,),  # keep probability
        )
        return [GanHyperParams(*combo) for combo in combos]


class SearchBudgetError(RuntimeError):
    """Training budget ran out mid-search; carries the partial log."""

    def __init__(self, message: str, search_log: list[dict]):
        super().__init__(message)
        self.search_log = search_log


def _safe_sharpe(series: np.ndarray) -> float:
    try:
        return sharpe(series)
    except DegenerateSeriesError:
        return -np.inf


def hyperparameter_search(
    panel: PanelDataset,
    split_spec,
    grid: list[GanHyperParams],
    *,
    trainer=None,
    ensemble_size: int = 9,
    n_top: int = 4,
    budget: int | None = None,
    base_seed: int = 0,
    **fit_options,
) -> tuple[EnsembleModel, list[dict]]:
    """Grid stage, ensemble stage, final pick by validation Sharpe ratio.

    One model is trained per grid point and ranked by the validation Sharpe
    ratio of its factor; the top ``n_top`` configurations are re-trained
    from ``ensemble_size`` seeds each and the best ensemble (again by
    validation Sharpe ratio) is returned together with the full search log.
    ``trainer(hp, seed) -> model`` may be injected; the default trains a
    :class:`SdfGan` on the training range.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    train_range = split_spec.range_of("train")
    valid_range = split_spec.range_of("valid")

    if trainer is None:

        def trainer(hp: GanHyperParams, seed: int):
            est = SdfGan(**asdict(hp), seed=seed, **fit_options)
            return est.fit(panel, train_range).model_

    fits_used = 0
    search_log: list[dict] = []

    def spend(n: int, stage: str):
        nonlocal fits_used
        fits_used += n
        if budget is not None and fits_used > budget:
            raise SearchBudgetError(
                f"budget of {budget} fits exhausted during the {stage} stage",
                search_log,
            )

    def split_sharpes(model) -> tuple[float, float]:
        factor, _ = model.factor_series(panel)
        return (
            _safe_sharpe(factor[slice(*train_range)]),
            _safe_sharpe(factor[slice(*valid_range)]),
        )

    stage1: list[tuple[float, int, GanHyperParams]] = []
    for config_id, hp in enumerate(grid):
        spend(1, "grid")
        model = trainer(hp, base_seed)
        sr_train, sr_valid = split_sharpes(model)
        search_log.append(
            {
                "config_id": config_id,
                "stage": "grid",
                "seed": base_seed,
                **asdict(hp),
                "train_sr": sr_train,
                "valid_sr": sr_valid,
            }
        )
        stage1.append((sr_valid, config_id, hp))

    stage1.sort(key=lambda item: item[0], reverse=True)
    finalists = stage1[:n_top]

    best: tuple[float, EnsembleModel] | None = None
    for sr_grid, config_id, hp in finalists:
        spend(ensemble_size, "ensemble")
        members = [trainer(hp, base_seed + j) for j in range(ensemble_size)]
        ensemble = EnsembleModel(members)
        sr_train, sr_valid = split_sharpes(ensemble)
        search_log.append(
            {
                "config_id": config_id,
                "stage": "ensemble",
                "seed": base_seed,
                **asdict(hp),
                "train_sr": sr_train,
                "valid_sr": sr_valid,
            }
        )
        if best is None or sr_valid > best[0]:
            best = (sr_valid, ensemble)

    return best[1], search_log
