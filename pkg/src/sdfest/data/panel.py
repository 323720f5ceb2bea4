"""Panel container, CSV ingestion and time splits.

A panel is stored dense: months on the first axis, assets on the second,
with a boolean presence mask for the unbalanced cross-section.  All
month-level quantities follow one timing convention, documented in the
repo README: row t carries the information known at month t (characteristics,
macro values) together with the excess return realized over the following
month.  Splits are contiguous, ordered views that share storage.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)


class SchemaError(ValueError):
    """An input file violates the documented CSV schema."""


class SplitError(ValueError):
    """Split ranges overlap, are unordered, or fall outside the panel."""


@dataclass(frozen=True)
class SplitSpec:
    """Contiguous (start, stop) month-index ranges; stop is exclusive."""

    train: tuple[int, int]
    valid: tuple[int, int]
    test: tuple[int, int]

    def __post_init__(self):
        ranges = (self.train, self.valid, self.test)
        for lo, hi in ranges:
            if lo < 0 or hi <= lo:
                raise SplitError(f"invalid range ({lo}, {hi})")
        for (_, prev_hi), (lo, _) in zip(ranges[:-1], ranges[1:]):
            if lo < prev_hi:
                raise SplitError("split ranges must be ordered and non-overlapping")

    @classmethod
    def from_lengths(cls, n_train: int, n_valid: int, n_test: int) -> "SplitSpec":
        a, b = n_train, n_train + n_valid
        return cls((0, a), (a, b), (b, b + n_test))

    def range_of(self, name: str) -> tuple[int, int]:
        return getattr(self, name)

    @property
    def names(self) -> tuple[str, str, str]:
        return ("train", "valid", "test")


@dataclass
class PanelDataset:
    """Dense unbalanced panel of excess returns, characteristics and macro data.

    returns[t, i] is the excess return paired with the information row t;
    chars[t, i, :] the transformed characteristics; mask[t, i] presence.
    macro[t, :] holds the shared macro series (may have zero columns).
    """

    months: np.ndarray  # (T,) str labels, ordered
    asset_ids: np.ndarray  # (N,) str labels, ordered
    returns: np.ndarray  # (T, N) float, 0 where absent
    chars: np.ndarray  # (T, N, p) float, 0 where absent
    mask: np.ndarray  # (T, N) bool
    macro: np.ndarray  # (T, q) float
    char_names: list[str]
    macro_names: list[str]
    cap_weights: np.ndarray | None = None  # (T, N) market caps, optional

    def __post_init__(self):
        T, N = self.returns.shape
        if self.mask.shape != (T, N) or self.chars.shape[:2] != (T, N):
            raise SchemaError("panel arrays are misaligned")
        if self.macro.shape[0] != T:
            raise SchemaError("macro series not aligned to panel months")
        if not np.all(np.isfinite(self.returns[self.mask])):
            raise SchemaError("non-finite returns among observed cells")
        if not self.mask.any(axis=1).all():
            t = int(np.flatnonzero(~self.mask.any(axis=1))[0])
            raise SchemaError(f"month {self.months[t]} has no observations")

    @property
    def n_months(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    @property
    def n_chars(self) -> int:
        return self.chars.shape[2]

    @property
    def n_macro(self) -> int:
        return self.macro.shape[1]

    def counts(self) -> np.ndarray:
        """Assets present per month, N_t."""
        return self.mask.sum(axis=1)

    def view(self, start: int, stop: int) -> "PanelDataset":
        """Month-range view sharing underlying storage."""
        if not (0 <= start < stop <= self.n_months):
            raise SplitError(f"range ({start}, {stop}) outside panel of {self.n_months} months")
        return PanelDataset(
            months=self.months[start:stop],
            asset_ids=self.asset_ids,
            returns=self.returns[start:stop],
            chars=self.chars[start:stop],
            mask=self.mask[start:stop],
            macro=self.macro[start:stop],
            char_names=self.char_names,
            macro_names=self.macro_names,
            cap_weights=None if self.cap_weights is None else self.cap_weights[start:stop],
        )

    def month_index(self, label: str) -> int:
        hits = np.flatnonzero(self.months == label)
        if hits.size == 0:
            raise SplitError(f"month {label!r} not in panel")
        return int(hits[0])


def split(panel: PanelDataset, spec: SplitSpec) -> tuple[PanelDataset, PanelDataset, PanelDataset]:
    """Train/validation/test views of the panel."""
    if spec.test[1] > panel.n_months:
        raise SplitError("split extends beyond the panel")
    return tuple(panel.view(*spec.range_of(name)) for name in spec.names)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


@dataclass
class ExclusionReport:
    """Complete-case filtering outcome of a load."""

    n_rows_seen: int = 0
    n_rows_kept: int = 0
    dropped: list[tuple[str, str, str]] = field(default_factory=list)  # (month, asset, reason)

    @property
    def n_rows_dropped(self) -> int:
        return self.n_rows_seen - self.n_rows_kept


def _read_csv(path, required: list[str], label: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype={"month": str, "asset_id": str})
    except FileNotFoundError:
        raise SchemaError(f"{label} file not found: {path}") from None
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(f"{label} file {path} lacks required columns {missing}")
    return frame


def load_panel(
    returns_path,
    characteristics_path,
    macro_path=None,
    weights_path=None,
) -> tuple[PanelDataset, ExclusionReport]:
    """Load the documented CSV schemas into a dense panel.

    Complete-case rule: a (month, asset) pair enters only if its return and
    every characteristic are present and finite.  Ordering is deterministic
    by (month, asset id).  Macro files are required to cover every panel
    month exactly once.
    """
    returns = _read_csv(returns_path, ["month", "asset_id", "excess_return"], "returns")
    chars = _read_csv(characteristics_path, ["month", "asset_id"], "characteristics")
    char_names = [c for c in chars.columns if c not in ("month", "asset_id")]
    if not char_names:
        raise SchemaError(f"characteristics file {characteristics_path} has no characteristic columns")

    merged = returns.merge(chars, on=["month", "asset_id"], how="outer", indicator=True)
    report = ExclusionReport(n_rows_seen=len(merged))

    value_cols = ["excess_return"] + char_names
    bad = merged["_merge"] != "both"
    for col in value_cols:
        bad |= ~np.isfinite(pd.to_numeric(merged[col], errors="coerce"))
    for _, row in merged[bad].iterrows():
        reason = "unmatched row" if row["_merge"] != "both" else "missing value"
        report.dropped.append((str(row["month"]), str(row["asset_id"]), reason))
    kept = merged[~bad]
    report.n_rows_kept = len(kept)
    if kept.empty:
        raise SchemaError("no complete observations after filtering")

    months = np.array(sorted(kept["month"].unique()))
    asset_ids = np.array(sorted(kept["asset_id"].unique()))
    t_index = {m: t for t, m in enumerate(months)}
    i_index = {a: i for i, a in enumerate(asset_ids)}

    T, N, p = len(months), len(asset_ids), len(char_names)
    ret = np.zeros((T, N))
    char_arr = np.zeros((T, N, p))
    mask = np.zeros((T, N), dtype=bool)
    rows_t = kept["month"].map(t_index).to_numpy()
    rows_i = kept["asset_id"].map(i_index).to_numpy()
    ret[rows_t, rows_i] = kept["excess_return"].to_numpy(dtype=np.float64)
    char_arr[rows_t, rows_i] = kept[char_names].to_numpy(dtype=np.float64)
    mask[rows_t, rows_i] = True

    macro_arr = np.zeros((T, 0))
    macro_names: list[str] = []
    if macro_path is not None:
        macro_arr, macro_names = _load_macro(macro_path, months)

    cap = None
    if weights_path is not None:
        wf = _read_csv(weights_path, ["month", "asset_id", "market_cap"], "weights")
        cap = np.zeros((T, N))
        ok = wf["month"].isin(t_index) & wf["asset_id"].isin(i_index)
        wf = wf[ok]
        cap[wf["month"].map(t_index), wf["asset_id"].map(i_index)] = wf[
            "market_cap"
        ].to_numpy(dtype=np.float64)

    panel = PanelDataset(
        months=months,
        asset_ids=asset_ids,
        returns=ret,
        chars=char_arr,
        mask=mask,
        macro=macro_arr,
        char_names=char_names,
        macro_names=macro_names,
        cap_weights=cap,
    )
    if report.n_rows_dropped:
        log.info(
            "load_panel: kept %d of %d rows (%d excluded)",
            report.n_rows_kept,
            report.n_rows_seen,
            report.n_rows_dropped,
        )
    return panel, report


def _load_macro(path, months: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """macro.csv: header names, a tCode row, then month rows.

    Transformation (by tCode) and start alignment happen here, so the
    returned matrix is aligned to the panel months.
    """
    from .transforms import macro_transform_table

    raw = pd.read_csv(path, dtype={"month": str})
    if "month" not in raw.columns:
        raise SchemaError(f"macro file {path} lacks a month column")
    names = [c for c in raw.columns if c != "month"]
    if raw.empty:
        raise SchemaError(f"macro file {path} has no tCode row")
    tcode_row = raw.iloc[0]
    if str(tcode_row["month"]).lower() != "tcode":
        raise SchemaError("macro file second line must be the tCode row (month column = 'tcode')")
    tcodes = {name: int(tcode_row[name]) for name in names}
    body = raw.iloc[1:].reset_index(drop=True)

    series = {name: body[name].to_numpy(dtype=np.float64) for name in names}
    transformed, offset = macro_transform_table(series, tcodes)
    macro_months = body["month"].to_numpy(dtype=str)[offset:]

    month_pos = {m: j for j, m in enumerate(macro_months)}
    missing = [m for m in months if m not in month_pos]
    if missing:
        raise SchemaError(
            f"macro series do not cover panel months (first missing: {missing[0]}); "
            "note that differencing consumes leading months"
        )
    rows = np.array([month_pos[m] for m in months])
    matrix = np.column_stack([transformed[name] for name in names])[rows]
    return matrix, names


def write_panel_csvs(
    panel: PanelDataset,
    returns_path,
    characteristics_path,
    macro_path=None,
    tcodes: dict[str, int] | None = None,
) -> None:
    """Emit a panel back to the documented CSV schemas (used by the simulator)."""
    t_idx, i_idx = np.nonzero(panel.mask)
    ret = pd.DataFrame(
        {
            "month": panel.months[t_idx],
            "asset_id": panel.asset_ids[i_idx],
            "excess_return": panel.returns[t_idx, i_idx],
        }
    )
    ret.to_csv(returns_path, index=False)

    chars = pd.DataFrame(panel.chars[t_idx, i_idx], columns=panel.char_names)
    chars.insert(0, "asset_id", panel.asset_ids[i_idx])
    chars.insert(0, "month", panel.months[t_idx])
    chars.to_csv(characteristics_path, index=False)

    if macro_path is not None and panel.n_macro:
        tcodes = tcodes or {name: 1 for name in panel.macro_names}
        header = pd.DataFrame(
            [["tcode"] + [tcodes[name] for name in panel.macro_names]],
            columns=["month"] + panel.macro_names,
        )
        body = pd.DataFrame(panel.macro, columns=panel.macro_names)
        body.insert(0, "month", panel.months)
        pd.concat([header, body]).to_csv(macro_path, index=False)
