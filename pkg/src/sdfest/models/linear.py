"""Linear SDF baselines on characteristic-managed factors.

The unregularized model solves the tangency-portfolio linear system on the
managed factors in closed form; the regularized variant adds an elastic
net penalty solved by coordinate descent with the penalty pair selected on
validation Sharpe ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ..data import ManagedFactorSet, PanelDataset, SplitSpec, build_managed_factors
from ..evaluation import DegenerateSeriesError, sharpe
from .common import monthly_weight_matrix


class SingularMomentMatrixError(np.linalg.LinAlgError):
    """The factor second-moment matrix is not invertible."""


class ConvergenceError(RuntimeError):
    """Coordinate descent did not converge within the iteration limit."""


@dataclass
class ElasticNetConfig:
    l1: float = 0.0
    l2: float = 0.0
    tol: float = 1e-8
    max_iter: int = 100_000
    l1_grid: tuple[float, ...] = tuple(np.logspace(-5, -1, 5))
    l2_grid: tuple[float, ...] = tuple(np.logspace(-5, -1, 5))

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0 or any(v < 0 for v in self.l1_grid + self.l2_grid):
            raise ValueError("penalties must be non-negative")


def _moment_system(factors: ManagedFactorSet, month_range: tuple[int, int]):
    rows = factors.returns[slice(*month_range)]
    T = rows.shape[0]
    return rows.T @ rows / T, rows.mean(axis=0)


def fit_ls(factors: ManagedFactorSet, month_range: tuple[int, int]) -> np.ndarray:
    """Closed-form coefficients: (second moment)^-1 (mean)."""
    second, mean = _moment_system(factors, month_range)
    if second.size and np.linalg.cond(second) > 1e12:
        raise SingularMomentMatrixError(
            "factor second-moment matrix is singular; use the elastic net variant"
        )
    return np.linalg.solve(second, mean)


def elastic_net_objective(
    second: np.ndarray, mean: np.ndarray, theta: np.ndarray, l1: float, l2: float
) -> float:
    resid = mean - second @ theta
    return float(resid @ resid + l2 * theta @ theta + l1 * np.abs(theta).sum())


def _soft_threshold(z: float, gamma: float) -> float:
    return np.sign(z) * max(abs(z) - gamma, 0.0)


def solve_elastic_net(
    second: np.ndarray,
    mean: np.ndarray,
    l1: float,
    l2: float,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    theta0: np.ndarray | None = None,
) -> np.ndarray:
    """Coordinate descent on ||mean - second @ theta||^2 + penalties.

    Each coordinate has the closed-form soft-threshold update; iteration
    stops when the largest coordinate change falls below ``tol``.
    """
    d = mean.size
    theta = np.zeros(d) if theta0 is None else theta0.copy()
    col_sq = np.einsum("ij,ij->j", second, second)
    resid = mean - second @ theta
    for _ in range(max_iter):
        delta = 0.0
        for j in range(d):
            old = theta[j]
            # partial residual: add coordinate j's contribution back
            z = second[:, j] @ resid + col_sq[j] * old
            new = _soft_threshold(z, l1 / 2.0) / (col_sq[j] + l2)
            if new != old:
                resid -= second[:, j] * (new - old)
                theta[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            return theta
    raise ConvergenceError(f"coordinate descent did not reach {tol} in {max_iter} sweeps")


def fit_en(
    factors: ManagedFactorSet,
    config: ElasticNetConfig,
    train_range: tuple[int, int],
    valid_range: tuple[int, int],
) -> tuple[np.ndarray, tuple[float, float]]:
    """Elastic-net coefficients with (l1, l2) picked by validation Sharpe ratio."""
    if not config.l1_grid or not config.l2_grid:
        raise ValueError("empty penalty grid")
    second, mean = _moment_system(factors, train_range)
    valid_rows = factors.returns[slice(*valid_range)]
    best: tuple[float, np.ndarray, tuple[float, float]] | None = None
    for l2 in config.l2_grid:
        theta = None
        for l1 in sorted(config.l1_grid, reverse=True):
            theta = solve_elastic_net(
                second, mean, l1, l2, config.tol, config.max_iter, theta0=theta
            )
            factor = valid_rows @ theta
            try:
                score = sharpe(factor)
            except DegenerateSeriesError:
                score = -np.inf
            if best is None or score > best[0]:
                best = (score, theta.copy(), (l1, l2))
    _, theta, penalties = best
    return theta, penalties


@dataclass
class LinearSdfModel:
    """Fitted linear SDF: coefficients over managed-factor columns."""

    coef: np.ndarray
    factor_names: list[str]
    legs: list[str]
    split_legs: bool
    include_macro: bool

    def _leg_weights(self, panel: PanelDataset) -> np.ndarray:
        """Per-observation weight theta' I_leg(t, i), before 1/N_t."""
        blocks = [panel.chars]
        if self.include_macro and panel.n_macro:
            macro_block = np.repeat(panel.macro[:, None, :], panel.n_assets, axis=1)
            blocks.append(macro_block * panel.mask[:, :, None])
        raw = np.concatenate(blocks, axis=2) if len(blocks) > 1 else blocks[0]
        if self.split_legs:
            legs = np.empty(raw.shape[:2] + (2 * raw.shape[2],))
            legs[:, :, 0::2] = np.maximum(raw, 0.0)
            legs[:, :, 1::2] = np.minimum(raw, 0.0)
            raw = legs
        if raw.shape[2] != self.coef.size:
            raise ValueError("panel characteristics do not match the fitted coefficients")
        return raw @ self.coef

    def weights(self, panel: PanelDataset) -> np.ndarray:
        return self._leg_weights(panel) * monthly_weight_matrix(panel)

    def factor_series(self, panel: PanelDataset, l1_normalize: bool = False):
        from .gan import factor_from_weights

        if l1_normalize:
            return factor_from_weights(self.weights(panel), panel, l1_normalize=True)
        factors = build_managed_factors(
            panel, split_legs=self.split_legs, include_macro=self.include_macro
        )
        factor = factors.returns @ self.coef
        return factor, 1.0 - factor


class LinearSdf(BaseEstimator):
    """Linear SDF on managed factors; ``method`` picks plain or elastic net.

    Long and short legs of every characteristic enter separately by default
    so their coefficients can differ.  Macro series are excluded unless
    ``include_macro`` is set, in which case they enter as market-timing
    columns.
    """

    def __init__(
        self,
        method: str = "ls",
        split_legs: bool = True,
        include_macro: bool = False,
        l1_grid: tuple[float, ...] = tuple(np.logspace(-5, -1, 5)),
        l2_grid: tuple[float, ...] = tuple(np.logspace(-5, -1, 5)),
        tol: float = 1e-8,
        max_iter: int = 100_000,
    ):
        self.method = method
        self.split_legs = split_legs
        self.include_macro = include_macro
        self.l1_grid = l1_grid
        self.l2_grid = l2_grid
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, panel: PanelDataset, split_spec: SplitSpec):
        if self.method not in ("ls", "en"):
            raise ValueError(f"method must be 'ls' or 'en', got {self.method!r}")
        factors = build_managed_factors(
            panel, split_legs=self.split_legs, include_macro=self.include_macro
        )
        if self.method == "ls":
            coef = fit_ls(factors, split_spec.train)
            self.penalties_ = None
        else:
            config = ElasticNetConfig(
                tol=self.tol,
                max_iter=self.max_iter,
                l1_grid=tuple(self.l1_grid),
                l2_grid=tuple(self.l2_grid),
            )
            coef, self.penalties_ = fit_en(
                factors, config, split_spec.train, split_spec.valid
            )
        self.coef_ = coef
        self.model_ = LinearSdfModel(
            coef=coef,
            factor_names=list(factors.names),
            legs=list(factors.legs),
            split_legs=self.split_legs,
            include_macro=self.include_macro,
        )
        return self

    def sdf_weights(self, panel: PanelDataset) -> np.ndarray:
        return self.model_.weights(panel)

    def sdf_factor(self, panel: PanelDataset, l1_normalize: bool = False):
        return self.model_.factor_series(panel, l1_normalize)

    def coefficient_table(self) -> list[tuple[str, float]]:
        """(leg name, coefficient) rows for CSV export."""
        return list(zip(self.model_.factor_names, self.model_.coef))
