"""Model evaluation: headline metrics, portfolio sorts and pricing tests.

All operations are pure functions over frozen inputs.  Unless noted, a
"month range" means rows of a panel view and every per-month statistic
respects the presence mask.  Variance estimates use the 1/T moment
convention throughout so that Sharpe ratios and loss normalizations are
mutually consistent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import f as f_dist

from .data import PanelDataset

log = logging.getLogger(__name__)


class DegenerateSeriesError(ValueError):
    """A statistic is undefined (zero variance, zero denominator, ...)."""


@dataclass
class BetaPanel:
    """Per-(month, asset) risk-loading estimates for one model."""

    values: np.ndarray  # (T, N)
    provenance: str = ""

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("risk loadings must be finite")


@dataclass
class SplitMetrics:
    sharpe: float
    explained_variation: float
    xs_r2: float
    max_loss: float | None = None
    max_drawdown: int | None = None
    turnover_long: float | None = None
    turnover_short: float | None = None
    sharpe_l1_normalized: float | None = None
    degenerate: bool = False


@dataclass
class EvaluationReport:
    model: str
    splits: dict[str, SplitMetrics] = field(default_factory=dict)


@dataclass
class PortfolioReport:
    sort_name: str
    weighting: str
    bucket_mean_returns: np.ndarray  # (B,)
    bucket_explained_variation: np.ndarray  # (B,)
    bucket_alphas: np.ndarray  # (B,) normalized pricing errors
    explained_variation: float
    xs_r2: float
    cumulative_returns: np.ndarray | None = None  # (T, B) for plot emission


# ---------------------------------------------------------------------------
# headline metrics
# ---------------------------------------------------------------------------


def sharpe(series: np.ndarray) -> float:
    """Mean over standard deviation (1/T variance), monthly units."""
    series = np.asarray(series, dtype=np.float64)
    if series.size < 2:
        raise DegenerateSeriesError("Sharpe ratio needs at least two observations")
    if np.ptp(series) == 0.0:
        raise DegenerateSeriesError("Sharpe ratio undefined for a zero-variance series")
    return float(series.mean() / series.std())


def annualized_sharpe(series: np.ndarray) -> float:
    return sharpe(series) * np.sqrt(12.0)


def residual_projection(panel: PanelDataset, beta: np.ndarray) -> np.ndarray:
    """Month-by-month projection of returns off the loading direction.

    With a single factor the residual is R - beta (beta'R / beta'beta).
    Months with beta'beta = 0 keep the full return as residual and are
    logged.  Masked-out cells stay zero.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != panel.returns.shape:
        raise ValueError(f"beta shape {beta.shape} does not match panel {panel.returns.shape}")
    b = beta * panel.mask
    r = panel.returns * panel.mask
    bb = np.sum(b * b, axis=1)
    br = np.sum(b * r, axis=1)
    degenerate = bb == 0.0
    if degenerate.any():
        log.warning(
            "residual projection skipped for %d month(s) with zero loadings", degenerate.sum()
        )
    scale = np.where(degenerate, 0.0, br / np.where(degenerate, 1.0, bb))
    return r - b * scale[:, None]


def explained_variation(panel: PanelDataset, residuals: np.ndarray) -> float:
    """Time-series R^2 without demeaning: second moments of residual vs return."""
    counts = panel.counts().astype(np.float64)
    res2 = np.sum((residuals * panel.mask) ** 2, axis=1) / counts
    ret2 = np.sum((panel.returns * panel.mask) ** 2, axis=1) / counts
    denom = ret2.mean()
    if denom == 0.0:
        raise DegenerateSeriesError("explained variation undefined: zero return second moment")
    return float(1.0 - res2.mean() / denom)


def xs_r2(panel: PanelDataset, residuals: np.ndarray) -> float:
    """Cross-sectional R^2 of time-averaged pricing errors.

    Per-asset means enter weighted by T_i/T, the rate at which they are
    estimated; assets without observations in the range are excluded.
    """
    mask = panel.mask
    t_i = mask.sum(axis=0).astype(np.float64)
    present = t_i > 0
    T = float(panel.n_months)
    res_mean = np.where(present, (residuals * mask).sum(axis=0) / np.maximum(t_i, 1.0), 0.0)
    ret_mean = np.where(present, (panel.returns * mask).sum(axis=0) / np.maximum(t_i, 1.0), 0.0)
    w = t_i / T
    denom = np.sum(w * ret_mean**2)
    if denom == 0.0:
        raise DegenerateSeriesError("cross-sectional R^2 undefined: zero mean returns")
    return float(1.0 - np.sum(w * res_mean**2) / denom)


def risk_stats(series: np.ndarray) -> tuple[float, int]:
    """(max loss, max drawdown).

    Max loss is the worst single months return divided by the series
    standard deviation; max drawdown counts the longest run of strictly
    negative months.
    """
    series = np.asarray(series, dtype=np.float64)
    if np.ptp(series) == 0.0:
        raise DegenerateSeriesError("risk statistics undefined for a zero-variance series")
    max_loss = float(series.min() / series.std())
    run = longest = 0
    for value in series:
        run = run + 1 if value < 0.0 else 0
        longest = max(longest, run)
    return max_loss, longest


def turnover(
    weights: np.ndarray, returns: np.ndarray, mask: np.ndarray | None = None
) -> tuple[float, float]:
    """Average one-month rebalancing volume of the l1-normalized portfolio.

    For each transition t -> t+1 the traded amount in asset i is
    |(1 + R_P) w_{t+1,i} - (1 + R_i) w_{t,i}| where R_P is the portfolio
    return over the month and R_i the asset return.  Sides are split by the
    sign of the position (weight at t, or at t+1 for new positions); a
    self-financing buy-and-hold drift produces zero on both sides.
    """
    weights = np.asarray(weights, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    if mask is None:
        mask = np.ones_like(weights, dtype=bool)
    w = weights * mask
    norms = np.abs(w).sum(axis=1)
    if (norms == 0.0).any():
        t = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateSeriesError(f"zero-norm weights in month index {t}")
    w = w / norms[:, None]
    T = w.shape[0]
    if T < 2:
        raise DegenerateSeriesError("turnover needs at least two months")
    long_total = short_total = 0.0
    for t in range(T - 1):
        r = returns[t] * mask[t]
        r_p = float(np.sum(w[t] * r))
        trade = (1.0 + r_p) * w[t + 1] - (1.0 + r) * w[t]
        side = np.where(w[t] != 0.0, np.sign(w[t]), np.sign(w[t + 1]))
        long_total += np.abs(trade[side > 0]).sum()
        short_total += np.abs(trade[side < 0]).sum()
    n = T - 1
    return long_total / n, short_total / n


# ---------------------------------------------------------------------------
# portfolio sorts
# ---------------------------------------------------------------------------


def _bucket_assignments(values: np.ndarray, present: np.ndarray, n_buckets: int) -> np.ndarray:
    """Deterministic quantile buckets for one month; ties broken by index."""
    idx = np.flatnonzero(present)
    order = np.lexsort((idx, values[idx]))
    n = idx.size
    buckets = np.full(values.shape, -1, dtype=np.int64)
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    buckets[idx] = np.minimum(ranks * n_buckets // n, n_buckets - 1)
    return buckets


def _portfolio_returns(
    panel: PanelDataset, values: np.ndarray, n_buckets: int, weighting: str
) -> tuple[np.ndarray, np.ndarray]:
    """(T, B) bucket returns and the (T, N) bucket membership matrix."""
    if weighting not in ("equal", "value"):
        raise ValueError(f"weighting must be 'equal' or 'value', got {weighting!r}")
    if weighting == "value" and panel.cap_weights is None:
        raise ValueError("value weighting requested but the panel has no market caps")
    T = panel.n_months
    out = np.zeros((T, n_buckets))
    membership = np.empty((T, panel.n_assets), dtype=np.int64)
    for t in range(T):
        buckets = _bucket_assignments(values[t], panel.mask[t], n_buckets)
        membership[t] = buckets
        for b in range(n_buckets):
            members = buckets == b
            if not members.any():
                raise ValueError(f"empty bucket {b} in month {panel.months[t]}")
            if weighting == "equal":
                out[t, b] = panel.returns[t, members].mean()
            else:
                caps = panel.cap_weights[t, members]
                total = caps.sum()
                if total <= 0:
                    raise ValueError(f"non-positive total market cap in bucket {b}")
                out[t, b] = np.sum(panel.returns[t, members] * caps) / total
    return out, membership


def beta_decile_sort(
    betas: BetaPanel, panel: PanelDataset, weighting: str = "equal"
) -> dict:
    """Decile portfolios sorted on risk loadings, plus the 10-1 spread.

    Bucket membership is recomputed every month from that month's loading
    cross-section; returns are the next-month (stored) returns of the
    members.  Requires at least ten assets per month.
    """
    if (panel.counts() < 10).any():
        raise ValueError("decile sort needs at least 10 assets every month")
    returns, membership = _portfolio_returns(panel, betas.values, 10, weighting)
    spread = returns[:, 9] - returns[:, 0]
    return {
        "decile_returns": returns,
        "spread": spread,
        "mean_returns": returns.mean(axis=0),
        "spread_mean": float(spread.mean()),
        "cumulative_returns": np.cumsum(returns, axis=0),
        "membership": membership,
    }


def alpha_regression(
    portfolio: np.ndarray, factors: np.ndarray
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """OLS time-series regression with intercept.

    Returns (alpha, t-stat, slope coefficients, residuals).  The t-stat
    uses homoskedastic OLS standard errors.
    """
    portfolio = np.asarray(portfolio, dtype=np.float64)
    factors = np.asarray(factors, dtype=np.float64)
    if factors.ndim == 1:
        factors = factors[:, None]
    T, K = factors.shape
    if portfolio.shape != (T,):
        raise ValueError("portfolio and factor series are misaligned")
    if T <= K + 1:
        raise ValueError(f"need T > K+1 observations, got T={T}, K={K}")
    X = np.column_stack([np.ones(T), factors])
    gram = X.T @ X
    if np.linalg.matrix_rank(gram) < K + 1:
        raise np.linalg.LinAlgError("rank-deficient regressor matrix")
    coef = np.linalg.solve(gram, X.T @ portfolio)
    resid = portfolio - X @ coef
    dof = T - K - 1
    sigma2 = resid @ resid / dof
    se_alpha = np.sqrt(sigma2 * np.linalg.inv(gram)[0, 0])
    t_stat = coef[0] / se_alpha if se_alpha > 0 else np.inf
    return float(coef[0]), float(t_stat), coef[1:], resid


def grs_test(
    alphas: np.ndarray,
    resid_cov: np.ndarray,
    factor_means: np.ndarray,
    factor_cov: np.ndarray,
    T: int,
    N: int,
    K: int,
) -> tuple[float, float]:
    """Joint test of zero pricing errors across N portfolios.

    statistic = (T-N-K)/N * (1 + mu' Omega^-1 mu)^-1 * alpha' Sigma^-1 alpha
    with 1/T (maximum-likelihood) covariance estimates, distributed
    F(N, T-N-K) under the null.
    """
    if T <= N + K + 1:
        raise ValueError(f"GRS needs T > N+K+1 (T={T}, N={N}, K={K})")
    alphas = np.asarray(alphas, dtype=np.float64)
    factor_means = np.atleast_1d(np.asarray(factor_means, dtype=np.float64))
    resid_cov = np.atleast_2d(resid_cov)
    factor_cov = np.atleast_2d(factor_cov)
    try:
        quad_alpha = alphas @ np.linalg.solve(resid_cov, alphas)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("singular residual covariance in GRS test") from None
    quad_factor = factor_means @ np.linalg.solve(factor_cov, factor_means)
    stat = (T - N - K) / N * quad_alpha / (1.0 + quad_factor)
    p_value = float(f_dist.sf(stat, N, T - N - K))
    return float(stat), p_value


def grs_from_returns(portfolios: np.ndarray, factors: np.ndarray) -> tuple[float, float]:
    """Run the joint pricing-error test from raw portfolio and factor series."""
    portfolios = np.asarray(portfolios, dtype=np.float64)
    factors = np.asarray(factors, dtype=np.float64)
    if factors.ndim == 1:
        factors = factors[:, None]
    T, N = portfolios.shape
    K = factors.shape[1]
    alphas = np.empty(N)
    residuals = np.empty((T, N))
    for j in range(N):
        alphas[j], _, _, residuals[:, j] = alpha_regression(portfolios[:, j], factors)
    resid_cov = residuals.T @ residuals / T
    mu = factors.mean(axis=0)
    centered = factors - mu
    factor_cov = centered.T @ centered / T
    return grs_test(alphas, resid_cov, mu, factor_cov, T, N, K)


def characteristic_sort_report(
    betas: BetaPanel,
    panel: PanelDataset,
    characteristics: str | tuple[str, str],
    weighting: str = "equal",
    sort_name: str | None = None,
) -> PortfolioReport:
    """Explained variation and pricing errors on characteristic-sorted portfolios.

    Stocks are bucketed by one characteristic's deciles or by independent
    quintiles of two characteristics (5x5).  Portfolio loadings aggregate
    the member loadings with the same weights as the returns; a monthly
    cross-sectional regression through the origin on those loadings splits
    portfolio returns into systematic and residual parts.  Per-bucket
    pricing errors are normalized by the root-mean-squared average return
    of all buckets, which makes 1 - sum(alpha^2) the cross-sectional R^2.
    """
    if isinstance(characteristics, str):
        col = panel.char_names.index(characteristics)
        values = panel.chars[:, :, col]
        returns, membership = _portfolio_returns(panel, values, 10, weighting)
        n_buckets = 10
    else:
        c1 = panel.char_names.index(characteristics[0])
        c2 = panel.char_names.index(characteristics[1])
        T = panel.n_months
        returns = np.zeros((T, 25))
        membership = np.empty((T, panel.n_assets), dtype=np.int64)
        for t in range(T):
            q1 = _bucket_assignments(panel.chars[t, :, c1], panel.mask[t], 5)
            q2 = _bucket_assignments(panel.chars[t, :, c2], panel.mask[t], 5)
            joint = np.where(panel.mask[t], q1 * 5 + q2, -1)
            membership[t] = joint
            for b in range(25):
                members = joint == b
                if not members.any():
                    raise ValueError(
                        f"empty 5x5 bucket {b} in month {panel.months[t]}"
                    )
                if weighting == "equal":
                    returns[t, b] = panel.returns[t, members].mean()
                else:
                    caps = panel.cap_weights[t, members]
                    returns[t, b] = np.sum(panel.returns[t, members] * caps) / caps.sum()
        n_buckets = 25

    # aggregate member loadings into portfolio loadings with the same weights
    T = panel.n_months
    port_beta = np.zeros((T, n_buckets))
    for t in range(T):
        for b in range(n_buckets):
            members = membership[t] == b
            if weighting == "equal":
                port_beta[t, b] = betas.values[t, members].mean()
            else:
                caps = panel.cap_weights[t, members]
                port_beta[t, b] = np.sum(betas.values[t, members] * caps) / caps.sum()

    bb = np.sum(port_beta**2, axis=1)
    scale = np.where(bb > 0, np.sum(port_beta * returns, axis=1) / np.where(bb > 0, bb, 1.0), 0.0)
    residual = returns - port_beta * scale[:, None]

    ret2 = np.sum(returns**2, axis=0)
    res2 = np.sum(residual**2, axis=0)
    bucket_ev = 1.0 - res2 / ret2
    rms_mean = np.sqrt(np.mean(returns.mean(axis=0) ** 2))
    alphas = residual.mean(axis=0) / rms_mean
    return PortfolioReport(
        sort_name=sort_name or str(characteristics),
        weighting=weighting,
        bucket_mean_returns=returns.mean(axis=0),
        bucket_explained_variation=bucket_ev,
        bucket_alphas=alphas,
        explained_variation=float(1.0 - res2.sum() / ret2.sum()),
        xs_r2=float(1.0 - np.sum(alphas**2)),
        cumulative_returns=np.cumsum(returns, axis=0),
    )


def factor_correlations(series: dict[str, "object"]) -> tuple[np.ndarray, list[str]]:
    """Pearson correlations of factor series on their common months.

    ``series`` maps a name to a pandas Series indexed by month label.
    """
    import pandas as pd

    frame = pd.DataFrame(series).dropna()
    if len(frame) < 2:
        raise DegenerateSeriesError("fewer than two overlapping months")
    values = frame.to_numpy(dtype=np.float64)
    if (values.std(axis=0) == 0.0).any():
        raise DegenerateSeriesError("zero-variance series in correlation matrix")
    return np.corrcoef(values, rowvar=False), list(frame.columns)
