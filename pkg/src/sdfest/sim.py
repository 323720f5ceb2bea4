"""Synthetic one-factor panels and the matching population oracle.

Two designs are supported.  In the first, risk loadings are the product of
two iid standard-normal characteristics redrawn every month.  In the
second, a single characteristic is scaled by the sign of a noisy sinusoidal
state process; only a trending transformation of that state is observable.
Returns follow R = beta * F + eps with an iid normal factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import PanelDataset, SplitSpec
from .evaluation import explained_variation, residual_projection, sharpe, xs_r2


@dataclass(frozen=True)
class SimConfig:
    setup: int = 1
    n_assets: int = 500
    n_months: int = 600
    split: tuple[int, int, int] = (250, 100, 250)
    mu_factor: float | None = None  # derived from target_sharpe when None
    sigma_factor2: float = 0.1
    target_sharpe: float = 1.0
    sigma_eps2: float = 1.0
    state_drift: float = 0.05
    state_noise_var: float = 0.25
    state_period: float = 24.0
    seed: int = 0

    def __post_init__(self):
        if self.setup not in (1, 2):
            raise ValueError(f"setup must be 1 or 2, got {self.setup}")
        if self.sigma_factor2 <= 0 or self.sigma_eps2 < 0 or self.state_noise_var < 0:
            raise ValueError("variances must be positive (factor) / non-negative (noise)")
        if sum(self.split) != self.n_months:
            raise ValueError("split lengths must sum to the number of months")

    @property
    def factor_mean(self) -> float:
        if self.mu_factor is not None:
            return self.mu_factor
        return np.sqrt(self.sigma_factor2) * self.target_sharpe

    def split_spec(self) -> SplitSpec:
        return SplitSpec.from_lengths(*self.split)


@dataclass
class PopulationTruth:
    beta: np.ndarray  # (T, N)
    factor: np.ndarray  # (T,) F realized over month t -> t+1
    state: np.ndarray | None  # (T,) h_t (setup 2 only)
    eps: np.ndarray  # (T, N)


@dataclass
class SimulatedPanel:
    panel: PanelDataset  # raw characteristics; quantile-transform before estimation
    truth: PopulationTruth
    config: SimConfig


def _month_labels(n: int) -> np.ndarray:
    return np.array([f"{2000 + k // 12:04d}-{k % 12 + 1:02d}" for k in range(n)])


def simulate(config: SimConfig) -> SimulatedPanel:
    """Draw a panel; deterministic given the config seed.

    Characteristics are emitted raw.  For the second design the observable
    macro series is the drifting state level, and its first difference is
    emitted as a second column so estimators can also be fed the
    conventionally differenced variant.
    """
    rng = np.random.default_rng(config.seed)
    T, N = config.n_months, config.n_assets

    factor = rng.normal(config.factor_mean, np.sqrt(config.sigma_factor2), size=T)
    eps = rng.normal(0.0, np.sqrt(config.sigma_eps2), size=(T, N))

    if config.setup == 1:
        chars = rng.standard_normal(size=(T, N, 2))
        beta = chars[:, :, 0] * chars[:, :, 1]
        state = None
        macro = np.zeros((T, 0))
        macro_names: list[str] = []
        char_names = ["char_a", "char_b"]
    else:
        chars = rng.standard_normal(size=(T, N, 1))
        t_grid = np.arange(1, T + 1, dtype=np.float64)  # 1-based month index
        state = np.sin(np.pi * t_grid / config.state_period) + rng.normal(
            0.0, np.sqrt(config.state_noise_var), size=T
        )
        beta = chars[:, :, 0] * np.where(state > 0.0, 1.0, -1.0)[:, None]
        level = config.state_drift * t_grid + state
        diff = np.concatenate([[0.0], np.diff(level)])
        macro = np.column_stack([level, diff])
        macro_names = ["state_level", "state_level_diff"]
        char_names = ["char_a"]

    returns = beta * factor[:, None] + eps
    panel = PanelDataset(
        months=_month_labels(T),
        asset_ids=np.array([f"s{i:04d}" for i in range(N)]),
        returns=returns,
        chars=chars,
        mask=np.ones((T, N), dtype=bool),
        macro=macro,
        char_names=char_names,
        macro_names=macro_names,
    )
    truth = PopulationTruth(beta=beta, factor=factor, state=state, eps=eps)
    return SimulatedPanel(panel=panel, truth=truth, config=config)


def population_sdf_weights(sim: SimulatedPanel) -> np.ndarray:
    """Population-efficient portfolio weights, one row per month.

    For the one-factor data-generating process the inverse-second-moment
    weights point in the direction of beta (rank-one covariance identity),
    so the oracle returns beta normalized to unit l1 norm per month.
    """
    beta = sim.truth.beta
    norms = np.abs(beta).sum(axis=1)
    if (norms == 0.0).any():
        t = int(np.flatnonzero(norms == 0.0)[0])
        raise ValueError(f"all-zero loadings in month {sim.panel.months[t]}: direction undefined")
    return beta / norms[:, None]


def population_metrics(
    sim: SimulatedPanel, month_range: tuple[int, int]
) -> dict[str, float]:
    """SR / EV / XS-R2 on a month range using the true loadings and factor."""
    lo, hi = month_range
    panel_view = sim.panel.view(lo, hi)
    beta = sim.truth.beta[lo:hi]
    residuals = residual_projection(panel_view, beta)
    return {
        "SR": sharpe(sim.truth.factor[lo:hi]),
        "EV": explained_variation(panel_view, residuals),
        "XS_R2": xs_r2(panel_view, residuals),
    }


def truth_table(sim: SimulatedPanel) -> "np.ndarray":
    """Rows (month, asset_id, beta, F, h) for the truth CSV."""
    import pandas as pd

    T, N = sim.truth.beta.shape
    months = np.repeat(sim.panel.months, N)
    assets = np.tile(sim.panel.asset_ids, T)
    state = (
        np.repeat(sim.truth.state, N)
        if sim.truth.state is not None
        else np.full(T * N, np.nan)
    )
    return pd.DataFrame(
        {
            "month": months,
            "asset_id": assets,
            "beta": sim.truth.beta.ravel(),
            "F": np.repeat(sim.truth.factor, N),
            "h": state,
        }
    )
