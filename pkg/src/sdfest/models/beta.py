"""Risk-loading estimation for each model family.

Loadings are proportional to the conditional co-moment of returns with the
SDF factor, so they are estimated by predicting R * F: with a feedforward
network on [characteristics; macro states] for the adversarial model, by
the forecaster's own conditional mean, or by a pooled linear regression
for the linear models.  Coefficients come from the training range and are
applied to every month.
"""

from __future__ import annotations

import numpy as np

from ..data import PanelDataset
from ..evaluation import BetaPanel
from ..netcore import FeedforwardSpec, ParamBinding, Tensor, ffn_apply
from .common import fit_masked_mse_ffn, flat_inputs
from .forecast import ForecastModel
from .gan import EnsembleModel, SdfModel, factor_from_weights
from .linear import LinearSdfModel


def beta_from_network(
    panel: PanelDataset,
    train_range: tuple[int, int],
    factor: np.ndarray,
    states: np.ndarray | None,
    hidden_dims: tuple[int, ...],
    learning_rate: float = 0.001,
    epochs: int = 256,
    seed: int = 0,
    keep_prob: float = 1.0,
) -> BetaPanel:
    """Fit a network to R*F on the training range; predict loadings everywhere."""
    lo, hi = train_range
    N = panel.n_assets
    x_full = flat_inputs(panel, states, (0, panel.n_months))
    spec = FeedforwardSpec(
        input_dim=x_full.shape[1],
        hidden_dims=tuple(hidden_dims),
        output_dim=1,
        keep_prob=keep_prob,
    )
    targets = panel.returns[lo:hi] * panel.mask[lo:hi] * factor[lo:hi, None]
    result = fit_masked_mse_ffn(
        spec,
        x_full[lo * N : hi * N],
        targets,
        panel.mask[lo:hi],
        lr=learning_rate,
        epochs=epochs,
        seed=seed,
    )
    out = ffn_apply(spec, ParamBinding(result.params), Tensor(x_full)).data[:, 0]
    return BetaPanel(out.reshape(panel.n_months, N), provenance="comoment network")


def beta_from_linear(
    panel: PanelDataset, train_range: tuple[int, int], factor: np.ndarray
) -> BetaPanel:
    """Pooled no-intercept regression of R*F on the characteristics."""
    lo, hi = train_range
    rows = panel.mask[lo:hi].reshape(-1)
    x = panel.chars[lo:hi].reshape(-1, panel.n_chars)[rows]
    y = (panel.returns[lo:hi] * factor[lo:hi, None]).reshape(-1)[rows]
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    values = panel.chars.reshape(-1, panel.n_chars) @ coef
    return BetaPanel(
        values.reshape(panel.n_months, panel.n_assets), provenance="linear regression"
    )


def estimate_beta(
    model,
    panel: PanelDataset,
    train_range: tuple[int, int],
    epochs: int = 256,
    learning_rate: float = 0.001,
    seed: int = 0,
) -> BetaPanel:
    """Dispatch loading estimation on the fitted model family.

    For ensembles the conditioning states are averaged over members and a
    single network is fit to the ensemble factor.
    """
    if isinstance(model, ForecastModel):
        return BetaPanel(model.predictions(panel), provenance="forecast mean")

    if isinstance(model, LinearSdfModel):
        factor, _ = model.factor_series(panel)
        return beta_from_linear(panel, train_range, factor)

    if isinstance(model, EnsembleModel):
        factor, _ = model.factor_series(panel)
        member_states = [m.state_series(panel) for m in model.members]
        states = (
            None if member_states[0] is None else np.mean(member_states, axis=0)
        )
        hidden = model.members[0].ffn_spec.hidden_dims
        return beta_from_network(
            panel, train_range, factor, states, hidden,
            learning_rate=learning_rate, epochs=epochs, seed=seed,
        )

    if isinstance(model, SdfModel):
        factor, _ = model.factor_series(panel)
        return beta_from_network(
            panel,
            train_range,
            factor,
            model.state_series(panel),
            model.ffn_spec.hidden_dims,
            learning_rate=learning_rate,
            epochs=epochs,
            seed=seed,
        )

    raise TypeError(f"no loading estimator for {type(model).__name__}")
