"""Characteristic-managed factor construction.

Each characteristic column defines a zero-cost portfolio whose month-t
return is the cross-sectional average of characteristic-weighted excess
returns.  With leg splitting, above-zero and below-zero weights form
separate long and short columns whose sum reproduces the combined factor
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import PanelDataset


@dataclass
class ManagedFactorSet:
    """Factor return matrix (months x d) with per-column leg metadata."""

    returns: np.ndarray
    names: list[str]
    legs: list[str]  # "long" | "short" | "combined"

    @property
    def n_factors(self) -> int:
        return self.returns.shape[1]


def build_managed_factors(
    panel: PanelDataset, split_legs: bool = True, include_macro: bool = False
) -> ManagedFactorSet:
    """Weight next-month returns by (already transformed) characteristics.

    Column j at month t is (1/N_t) sum_i w_{t,i,j} R_{t,i} with w the
    quantile value (combined), its positive part (long leg) or negative
    part (short leg).  ``include_macro`` appends the shared macro series as
    additional conditioning columns, broadcast across assets, which yields
    market-timing factors for the linear models.
    """
    counts = panel.counts().astype(np.float64)
    if (counts == 0).any():
        raise ValueError("managed factors undefined for a month with no assets")
    masked_returns = panel.returns * panel.mask

    blocks: list[np.ndarray] = [panel.chars]
    names = list(panel.char_names)
    if include_macro and panel.n_macro:
        macro_block = np.repeat(panel.macro[:, None, :], panel.n_assets, axis=1)
        blocks.append(macro_block * panel.mask[:, :, None])
        names += list(panel.macro_names)
    weights = np.concatenate(blocks, axis=2) if len(blocks) > 1 else blocks[0]

    def average(w):
        return np.einsum("tij,ti->tj", w, masked_returns) / counts[:, None]

    # the combined column is formed as long + short so the leg decomposition
    # holds exactly, not just up to summation order
    long_part = average(np.maximum(weights, 0.0))
    short_part = average(np.minimum(weights, 0.0))
    if not split_legs:
        return ManagedFactorSet(long_part + short_part, names, ["combined"] * len(names))
    columns = np.empty((panel.n_months, 2 * len(names)))
    columns[:, 0::2] = long_part
    columns[:, 1::2] = short_part
    out_names = [f"{n}_{leg}" for n in names for leg in ("long", "short")]
    legs = ["long", "short"] * len(names)
    return ManagedFactorSet(columns, out_names, legs)
