"""Shared builders for small synthetic panels used across the test modules."""

from __future__ import annotations

import numpy as np

from sdfest.data import PanelDataset


def month_labels(n: int, start_year: int = 2000) -> np.ndarray:
    return np.array(
        [f"{start_year + k // 12:04d}-{k % 12 + 1:02d}" for k in range(n)]
    )


def make_panel(
    n_months: int = 12,
    n_assets: int = 6,
    n_chars: int = 2,
    n_macro: int = 0,
    seed: int = 0,
    unbalanced: bool = False,
) -> PanelDataset:
    rng = np.random.default_rng(seed)
    mask = np.ones((n_months, n_assets), dtype=bool)
    if unbalanced:
        holes = rng.random((n_months, n_assets)) < 0.2
        holes[:, 0] = False  # keep every month populated
        mask &= ~holes
    returns = rng.normal(0.01, 0.05, size=(n_months, n_assets)) * mask
    chars = rng.normal(size=(n_months, n_assets, n_chars)) * mask[:, :, None]
    macro = rng.normal(size=(n_months, n_macro))
    return PanelDataset(
        months=month_labels(n_months),
        asset_ids=np.array([f"a{i:03d}" for i in range(n_assets)]),
        returns=returns,
        chars=chars,
        mask=mask,
        macro=macro,
        char_names=[f"c{j}" for j in range(n_chars)],
        macro_names=[f"m{j}" for j in range(n_macro)],
    )
