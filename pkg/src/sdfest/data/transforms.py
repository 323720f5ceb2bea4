"""Deterministic data transformations.

Characteristics are mapped to centered cross-sectional rank quantiles,
macro series are made stationary by integer-coded transformations, and
macro columns are centered on training-sample means only.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .panel import PanelDataset, SplitSpec


def rank_quantile_transform(values: np.ndarray) -> np.ndarray:
    """Centered rank quantiles: rank r of N maps to (r - 0.5)/N - 0.5.

    Ties share the average rank, so the cross-sectional mean is exactly
    zero and the output is invariant to strictly monotone transformations
    of the raw values.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0 or not np.isfinite(values).any():
        raise ValueError("rank transform needs at least one finite value")
    ranks = rankdata(values, method="average")
    return (ranks - 0.5) / values.size - 0.5


def quantile_transform_panel(panel: PanelDataset) -> PanelDataset:
    """Apply the rank-quantile map to every (month, characteristic) column."""
    out = panel.chars.copy()
    for t in range(panel.n_months):
        present = panel.mask[t]
        if not present.any():
            continue
        for j in range(panel.n_chars):
            out[t, present, j] = rank_quantile_transform(panel.chars[t, present, j])
    transformed = PanelDataset(
        months=panel.months,
        asset_ids=panel.asset_ids,
        returns=panel.returns,
        chars=out,
        mask=panel.mask,
        macro=panel.macro,
        char_names=panel.char_names,
        macro_names=panel.macro_names,
        cap_weights=panel.cap_weights,
    )
    return transformed


def macro_transform(series: np.ndarray, tcode: int) -> tuple[np.ndarray, int]:
    """Stationarity transformation for one macro series.

    Codes: 1 identity; 2 first difference; 3 second difference; 4 log;
    5 difference of logs; 6 second difference of logs; 7 difference of the
    simple growth rate.  Returns the transformed series and the number of
    leading observations consumed.
    """
    x = np.asarray(series, dtype=np.float64)
    if tcode not in range(1, 8):
        raise ValueError(f"unknown tCode {tcode}")
    depth = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2, 7: 2}[tcode]
    if x.size <= depth:
        raise ValueError(f"series of length {x.size} too short for tCode {tcode}")
    if tcode in (4, 5, 6) and np.any(x <= 0.0):
        raise ValueError(f"tCode {tcode} requires a strictly positive series")

    if tcode == 1:
        return x.copy(), 0
    if tcode == 2:
        return np.diff(x), 1
    if tcode == 3:
        return np.diff(x, n=2), 2
    if tcode == 4:
        return np.log(x), 0
    if tcode == 5:
        return np.diff(np.log(x)), 1
    if tcode == 6:
        return np.diff(np.log(x), n=2), 2
    growth = x[1:] / x[:-1] - 1.0
    return np.diff(growth), 2


def macro_transform_table(
    series: dict[str, np.ndarray], tcodes: dict[str, int]
) -> tuple[dict[str, np.ndarray], int]:
    """Transform a set of macro series and align them to a common start.

    Leading observations consumed by differencing are dropped, never
    zero-filled; every series is trimmed to the maximal offset so that all
    columns cover the same months.  Returns the aligned table and that
    common offset.
    """
    transformed: dict[str, np.ndarray] = {}
    offsets: dict[str, int] = {}
    for name, values in series.items():
        transformed[name], offsets[name] = macro_transform(values, tcodes[name])
    common = max(offsets.values(), default=0)
    aligned = {
        name: values[common - offsets[name] :] for name, values in transformed.items()
    }
    return aligned, common


def center_features(panel: PanelDataset, split_spec: SplitSpec) -> PanelDataset:
    """Subtract the training-split mean from every macro column.

    Means are estimated on the training range only and applied to the whole
    panel, so no validation or test observation leaks into the statistic.
    Characteristic quantiles are already centered by construction and are
    left untouched.  Idempotent once the training mean is zero.
    """
    if panel.n_macro == 0:
        return panel
    lo, hi = split_spec.train
    means = panel.macro[lo:hi].mean(axis=0)
    return PanelDataset(
        months=panel.months,
        asset_ids=panel.asset_ids,
        returns=panel.returns,
        chars=panel.chars,
        mask=panel.mask,
        macro=panel.macro - means,
        char_names=panel.char_names,
        macro_names=panel.macro_names,
        cap_weights=panel.cap_weights,
    )
