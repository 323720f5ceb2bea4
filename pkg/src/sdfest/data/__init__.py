"""Panel ingestion, deterministic transformations and time splits."""

from .factors import ManagedFactorSet, build_managed_factors
from .panel import (
    ExclusionReport,
    PanelDataset,
    SchemaError,
    SplitError,
    SplitSpec,
    load_panel,
    split,
    write_panel_csvs,
)
from .transforms import (
    center_features,
    macro_transform,
    macro_transform_table,
    quantile_transform_panel,
    rank_quantile_transform,
)

__all__ = [
    "ManagedFactorSet",
    "build_managed_factors",
    "ExclusionReport",
    "PanelDataset",
    "SchemaError",
    "SplitError",
    "SplitSpec",
    "load_panel",
    "split",
    "write_panel_csvs",
    "center_features",
    "macro_transform",
    "macro_transform_table",
    "quantile_transform_panel",
    "rank_quantile_transform",
]
