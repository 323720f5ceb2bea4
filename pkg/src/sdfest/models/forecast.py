"""Return-forecasting feedforward baseline.

Predicts next-month excess returns from characteristics by minimizing the
per-month average squared error.  The prediction doubles as the SDF weight
(scaled 1/N_t) and as the risk loading.  Trained as an ensemble over
random initializations whose predictions are averaged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ..data import PanelDataset
from ..netcore import FeedforwardSpec, NetworkParams, ParamBinding, Tensor, ffn_apply
from .common import fit_masked_mse_ffn, flat_inputs, monthly_weight_matrix


def forecaster_inputs(panel: PanelDataset, include_macro: bool) -> np.ndarray:
    """(T*N, k) design matrix: characteristics, optionally raw macro columns."""
    x = flat_inputs(panel, None, (0, panel.n_months))
    if include_macro and panel.n_macro:
        rep = np.repeat(panel.macro, panel.n_assets, axis=0)
        x = np.concatenate([x, rep], axis=1)
    return x


@dataclass
class ForecastModel:
    spec: FeedforwardSpec
    member_params: list[NetworkParams]
    include_macro: bool
    char_names: list[str]

    def predictions(self, panel: PanelDataset) -> np.ndarray:
        """(T, N) ensemble-averaged conditional mean estimates."""
        x = Tensor(forecaster_inputs(panel, self.include_macro))
        outputs = [
            ffn_apply(self.spec, ParamBinding(p), x).data[:, 0]
            for p in self.member_params
        ]
        mu = np.mean(outputs, axis=0)
        return mu.reshape(panel.n_months, panel.n_assets)

    def weights(self, panel: PanelDataset) -> np.ndarray:
        return self.predictions(panel) * monthly_weight_matrix(panel)

    def factor_series(self, panel: PanelDataset, l1_normalize: bool = False):
        from .gan import factor_from_weights

        return factor_from_weights(self.weights(panel), panel, l1_normalize)


class FfnForecaster(BaseEstimator):
    """Feedforward return forecaster ([32, 16, 8] by default, no macro)."""

    def __init__(
        self,
        hidden_dims: tuple[int, ...] = (32, 16, 8),
        keep_prob: float = 0.95,
        learning_rate: float = 0.001,
        epochs: int = 256,
        ensemble_size: int = 9,
        include_macro: bool = False,
        keep_best: bool = True,
        patience: int = 5,
        seed: int = 0,
    ):
        self.hidden_dims = hidden_dims
        self.keep_prob = keep_prob
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.ensemble_size = ensemble_size
        self.include_macro = include_macro
        self.keep_best = keep_best
        self.patience = patience
        self.seed = seed

    def fit(
        self,
        panel: PanelDataset,
        train_range: tuple[int, int] | None = None,
        valid_range: tuple[int, int] | None = None,
    ):
        """Fit the ensemble on the training months.

        When ``valid_range`` is given each member stops early once its
        validation squared error has not improved for ``patience`` epochs,
        keeping the best-validation parameters.
        """
        if train_range is None:
            train_range = (0, panel.n_months)
        lo, hi = train_range
        n_inputs = panel.n_chars + (panel.n_macro if self.include_macro else 0)
        spec = FeedforwardSpec(
            input_dim=n_inputs,
            hidden_dims=tuple(self.hidden_dims),
            output_dim=1,
            keep_prob=self.keep_prob,
        )
        x_full = forecaster_inputs(panel, self.include_macro)
        N = panel.n_assets
        x_train = x_full[lo * N : hi * N]
        validation = None
        if valid_range is not None:
            v_lo, v_hi = valid_range
            validation = (
                x_full[v_lo * N : v_hi * N],
                panel.returns[v_lo:v_hi] * panel.mask[v_lo:v_hi],
                panel.mask[v_lo:v_hi],
            )
        member_seeds = np.random.SeedSequence(self.seed).spawn(self.ensemble_size)
        members = []
        histories = []
        for member_seq in member_seeds:
            result = fit_masked_mse_ffn(
                spec,
                x_train,
                panel.returns[lo:hi] * panel.mask[lo:hi],
                panel.mask[lo:hi],
                lr=self.learning_rate,
                epochs=self.epochs,
                seed=member_seq,
                keep_best=self.keep_best,
                validation=validation,
                patience=self.patience,
            )
            members.append(result.params)
            histories.append(result.loss_history)
        self.model_ = ForecastModel(
            spec=spec,
            member_params=members,
            include_macro=self.include_macro,
            char_names=list(panel.char_names),
        )
        self.history_ = histories
        self.train_range_ = train_range
        return self

    def predict_mu(self, panel: PanelDataset) -> np.ndarray:
        return self.model_.predictions(panel)

    def sdf_weights(self, panel: PanelDataset) -> np.ndarray:
        return self.model_.weights(panel)

    def sdf_factor(self, panel: PanelDataset, l1_normalize: bool = False):
        return self.model_.factor_series(panel, l1_normalize)
