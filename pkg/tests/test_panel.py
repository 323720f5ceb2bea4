import numpy as np
import pytest

from sdfest.data import (
    PanelDataset,
    SchemaError,
    SplitError,
    SplitSpec,
    load_panel,
    quantile_transform_panel,
    split,
    write_panel_csvs,
)

from helpers import make_panel, month_labels


@pytest.fixture
def csv_paths(tmp_path):
    return {
        "returns": tmp_path / "returns.csv",
        "chars": tmp_path / "characteristics.csv",
        "macro": tmp_path / "macro.csv",
    }


def test_round_trip_preserves_values(csv_paths):
    panel = make_panel(n_months=6, n_assets=4, n_chars=3, n_macro=2, seed=1, unbalanced=True)
    write_panel_csvs(panel, csv_paths["returns"], csv_paths["chars"], csv_paths["macro"])
    loaded, report = load_panel(csv_paths["returns"], csv_paths["chars"], csv_paths["macro"])
    assert report.n_rows_dropped == 0
    np.testing.assert_array_equal(loaded.mask, panel.mask)
    np.testing.assert_allclose(loaded.returns, panel.returns)
    np.testing.assert_allclose(loaded.chars, panel.chars)
    np.testing.assert_allclose(loaded.macro, panel.macro)
    assert loaded.char_names == panel.char_names


def test_missing_characteristic_excludes_row_and_reports(csv_paths):
    panel = make_panel(n_months=4, n_assets=3, n_chars=2, seed=2)
    write_panel_csvs(panel, csv_paths["returns"], csv_paths["chars"])
    import pandas as pd

    chars = pd.read_csv(csv_paths["chars"])
    chars.loc[2, "c1"] = np.nan
    dropped_key = (str(chars.loc[2, "month"]), str(chars.loc[2, "asset_id"]))
    chars.to_csv(csv_paths["chars"], index=False)

    loaded, report = load_panel(csv_paths["returns"], csv_paths["chars"])
    assert report.n_rows_dropped == 1
    assert (dropped_key[0], dropped_key[1], "missing value") in report.dropped
    t = loaded.month_index(dropped_key[0])
    i = int(np.flatnonzero(loaded.asset_ids == dropped_key[1])[0])
    assert not loaded.mask[t, i]


def test_schema_violation_names_columns(csv_paths):
    csv_paths["returns"].write_text("month,asset_id,ret\n2000-01,a,0.1\n")
    make_panel(n_months=2, n_assets=2).chars  # noqa: B018 - just building files below
    csv_paths["chars"].write_text("month,asset_id,c0\n2000-01,a,0.5\n")
    with pytest.raises(SchemaError, match="excess_return"):
        load_panel(csv_paths["returns"], csv_paths["chars"])


def test_split_view_lengths_and_disjointness():
    panel = make_panel(n_months=600, n_assets=3, seed=4)
    spec = SplitSpec.from_lengths(250, 100, 250)
    train, valid, test = split(panel, spec)
    assert (train.n_months, valid.n_months, test.n_months) == (250, 100, 250)
    all_months = np.concatenate([train.months, valid.months, test.months])
    np.testing.assert_array_equal(all_months, panel.months)
    assert len(set(all_months)) == 600


def test_split_views_share_storage():
    panel = make_panel(n_months=10, n_assets=3, seed=5)
    train, _, _ = split(panel, SplitSpec.from_lengths(6, 2, 2))
    panel.returns[0, 0] = 123.0
    assert train.returns[0, 0] == 123.0


def test_overlapping_split_rejected():
    with pytest.raises(SplitError):
        SplitSpec((0, 6), (5, 8), (8, 10))


def test_split_beyond_panel_rejected():
    panel = make_panel(n_months=10, n_assets=3)
    with pytest.raises(SplitError):
        split(panel, SplitSpec.from_lengths(6, 2, 4))


def test_empty_month_rejected():
    mask = np.ones((3, 2), dtype=bool)
    mask[1] = False
    with pytest.raises(SchemaError, match="no observations"):
        PanelDataset(
            months=month_labels(3),
            asset_ids=np.array(["a", "b"]),
            returns=np.zeros((3, 2)),
            chars=np.zeros((3, 2, 1)),
            mask=mask,
            macro=np.zeros((3, 0)),
            char_names=["c0"],
            macro_names=[],
        )


def test_macro_tcode_consumes_leading_months(csv_paths, tmp_path):
    # a differenced macro series starts one month late; panel months starting
    # at the first data month can then not be covered
    panel = make_panel(n_months=5, n_assets=3, n_macro=1, seed=6)
    write_panel_csvs(panel, csv_paths["returns"], csv_paths["chars"], csv_paths["macro"], tcodes={"m0": 2})
    with pytest.raises(SchemaError, match="leading months"):
        load_panel(csv_paths["returns"], csv_paths["chars"], csv_paths["macro"])


def test_quantile_transform_panel_centers_every_month():
    panel = make_panel(n_months=6, n_assets=9, n_chars=2, seed=8, unbalanced=True)
    q = quantile_transform_panel(panel)
    for t in range(q.n_months):
        present = q.mask[t]
        for j in range(q.n_chars):
            assert q.chars[t, present, j].mean() == pytest.approx(0.0, abs=1e-12)
    # masked-out cells stay zero so downstream dense math is unaffected
    np.testing.assert_array_equal(q.chars[~q.mask], 0.0)
