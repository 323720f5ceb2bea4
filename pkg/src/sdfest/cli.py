"""Command-line front end.

Subcommands: ``simulate`` writes synthetic data files, ``train`` fits the
selected models and saves checkpoints, ``evaluate`` produces metric and
portfolio reports, ``importance`` emits input sensitivities, and ``report``
consolidates previously written evaluation artifacts into one comparison
table (it never retrains or re-evaluates).

Configs are INI files with one section per concern; every run is
reproducible from (config, seed).  Exit codes: 0 success, 1 usage or
config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .data import (
    PanelDataset,
    SchemaError,
    SplitError,
    SplitSpec,
    center_features,
    load_panel,
    quantile_transform_panel,
    write_panel_csvs,
)
from .evaluation import (
    BetaPanel,
    DegenerateSeriesError,
    EvaluationReport,
    SplitMetrics,
    beta_decile_sort,
    explained_variation,
    factor_correlations,
    residual_projection,
    risk_stats,
    sharpe,
    turnover,
    xs_r2,
)
from .models import (
    FfnForecaster,
    GanHyperParams,
    LinearSdf,
    SdfGan,
    TrainingDivergedError,
    estimate_beta,
    hyperparameter_search,
    load_model,
    save_model,
    variable_importance,
)
from .models.gan import EnsembleModel, SdfModel
from .models.forecast import ForecastModel
from .models.linear import LinearSdfModel, SingularMomentMatrixError
from .sim import SimConfig, population_metrics, simulate, truth_table

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

MODEL_NAMES = ("gan", "unc", "ls", "en", "ffn")


class ConfigError(ValueError):
    """The run configuration is missing or inconsistent."""


@dataclass
class RunConfig:
    """Parsed INI configuration."""

    parser: configparser.ConfigParser
    path: Path

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        return cls(parser=parser, path=Path(path))

    def get(self, section: str, key: str, fallback=None, required: bool = False):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key)
        if required:
            raise ConfigError(f"missing [{section}] {key} in {self.path}")
        return fallback

    def getint(self, section, key, fallback=None):
        value = self.get(section, key)
        try:
            return fallback if value is None else int(value)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}") from None

    def getfloat(self, section, key, fallback=None):
        value = self.get(section, key)
        try:
            return fallback if value is None else float(value)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {value!r}") from None

    def getbool(self, section, key, fallback=False):
        value = self.get(section, key)
        if value is None:
            return fallback
        return value.strip().lower() in ("1", "true", "yes", "on")


def _parse_split(config: RunConfig, panel: PanelDataset) -> SplitSpec:
    """[split] train/valid/test: either month counts or label ranges a:b."""
    values = []
    for name in ("train", "valid", "test"):
        raw = config.get("split", name, required=True)
        if ":" in raw:
            start, end = raw.split(":", 1)
            lo = panel.month_index(start.strip())
            hi = panel.month_index(end.strip()) + 1
            values.append((lo, hi))
        else:
            values.append(int(raw))
    if all(isinstance(v, int) for v in values):
        return SplitSpec.from_lengths(*values)
    if not all(isinstance(v, tuple) for v in values):
        raise ConfigError("[split] entries must be all counts or all label ranges")
    return SplitSpec(*values)


def _load_config_panel(config: RunConfig) -> tuple[PanelDataset, SplitSpec]:
    data_dir = Path(config.get("data", "directory", fallback="."))
    if not config.parser.has_section("data"):
        raise ConfigError("config needs a [data] section")
    weights = config.get("data", "weights")
    macro = config.get("data", "macro")
    panel, report = load_panel(
        data_dir / config.get("data", "returns", fallback="returns.csv"),
        data_dir / config.get("data", "characteristics", fallback="characteristics.csv"),
        None if macro in (None, "") else data_dir / macro,
        None if weights in (None, "") else data_dir / weights,
    )
    if report.n_rows_dropped:
        log.info("excluded %d incomplete rows during load", report.n_rows_dropped)
    split_spec = _parse_split(config, panel)
    if config.getbool("data", "quantile_transform", fallback=True):
        panel = quantile_transform_panel(panel)
    panel = center_features(panel, split_spec)
    return panel, split_spec


def _selected_models(config: RunConfig, override: str | None) -> list[str]:
    raw = override or config.get("train", "models", fallback="all")
    if raw == "all":
        return list(MODEL_NAMES)
    names = [m.strip() for m in raw.split(",") if m.strip()]
    bad = [m for m in names if m not in MODEL_NAMES]
    if bad:
        raise ConfigError(f"unknown model name(s) {bad}; choose from {MODEL_NAMES}")
    return names


# ---------------------------------------------------------------------------
# training helpers
# ---------------------------------------------------------------------------


def _gan_fit_options(config: RunConfig) -> dict:
    return {
        "epochs_unconditional": config.getint("train", "epochs_unconditional", 256),
        "epochs_adversary": config.getint("train", "epochs_adversary", 256),
        "epochs_final": config.getint("train", "epochs_final", 256),
        "eval_every": config.getint("train", "eval_every", 8),
    }


def _fit_one_gan(args):
    panel, train_range, options, seed, unconditional = args
    est = SdfGan(**options, unconditional=unconditional, seed=seed)
    return est.fit(panel, train_range).model_


def train_model(
    name: str,
    panel: PanelDataset,
    split_spec: SplitSpec,
    config: RunConfig,
    seed: int,
    workers: int = 1,
):
    """Fit one model family and return its frozen model object."""
    train_range = split_spec.train
    if name in ("gan", "unc"):
        options = _gan_fit_options(config)
        fixed = {
            "hidden_layers": config.getint("train", "hidden_layers", 2),
            "hidden_units": config.getint("train", "hidden_units", 64),
            "state_dim": config.getint("train", "state_dim", 4),
            "cond_state_dim": config.getint("train", "cond_state_dim", 32),
            "cond_hidden_layers": config.getint("train", "cond_hidden_layers", 0),
            "cond_moments": config.getint("train", "cond_moments", 8),
            "learning_rate": config.getfloat("train", "learning_rate", 0.001),
            "keep_prob": config.getfloat("train", "keep_prob", 0.95),
        }
        n_members = config.getint("train", "ensemble_size", 1)
        jobs = [
            (panel, train_range, {**options, **fixed}, seed + j, name == "unc")
            for j in range(n_members)
        ]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                members = list(pool.map(_fit_one_gan, jobs))
        else:
            members = [_fit_one_gan(job) for job in jobs]
        return members[0] if len(members) == 1 else EnsembleModel(members)
    if name == "ls":
        return LinearSdf(method="ls").fit(panel, split_spec).model_
    if name == "en":
        return LinearSdf(method="en").fit(panel, split_spec).model_
    if name == "ffn":
        est = FfnForecaster(
            epochs=config.getint("train", "ffn_epochs", 256),
            ensemble_size=config.getint("train", "ffn_ensemble_size", 9),
            include_macro=config.getbool("train", "ffn_include_macro", False),
            seed=seed,
        )
        return est.fit(panel, train_range).model_
    raise ConfigError(f"unknown model {name!r}")


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------


def _size_filter_mask(panel: PanelDataset, threshold: float) -> np.ndarray:
    """Presence mask restricted to stocks above a fraction of total market cap."""
    if panel.cap_weights is None:
        raise ConfigError("size filtering needs a weights file with market caps")
    totals = (panel.cap_weights * panel.mask).sum(axis=1, keepdims=True)
    return panel.mask & (panel.cap_weights >= threshold * totals)


def _filtered_view(panel: PanelDataset, threshold: float | None) -> PanelDataset:
    if not threshold:
        return panel
    mask = _size_filter_mask(panel, threshold)
    return PanelDataset(
        months=panel.months,
        asset_ids=panel.asset_ids,
        returns=panel.returns * mask,
        chars=panel.chars,
        mask=mask,
        macro=panel.macro,
        char_names=panel.char_names,
        macro_names=panel.macro_names,
        cap_weights=panel.cap_weights,
    )


def evaluate_model(
    model,
    panel: PanelDataset,
    split_spec: SplitSpec,
    model_name: str,
    l1_normalize: bool = False,
    size_filter: float | None = None,
    beta_epochs: int = 256,
    seed: int = 0,
) -> tuple[EvaluationReport, BetaPanel, np.ndarray]:
    """Headline metrics per split; estimation on all stocks, optional
    evaluation restricted to the large-cap subset."""
    weights = model.weights(panel)
    factor = np.sum(weights * panel.returns * panel.mask, axis=1)
    beta = estimate_beta(model, panel, split_spec.train, epochs=beta_epochs, seed=seed)
    eval_panel = _filtered_view(panel, size_filter)

    report = EvaluationReport(model=model_name)
    for split_name in split_spec.names:
        lo, hi = split_spec.range_of(split_name)
        view = eval_panel.view(lo, hi)
        try:
            sr = sharpe(factor[lo:hi])
        except DegenerateSeriesError:
            report.splits[split_name] = SplitMetrics(
                sharpe=np.nan, explained_variation=np.nan, xs_r2=np.nan, degenerate=True
            )
            continue
        resid = residual_projection(view, beta.values[lo:hi])
        max_loss, drawdown = risk_stats(factor[lo:hi])
        try:
            turn_long, turn_short = turnover(
                weights[lo:hi], eval_panel.returns[lo:hi], view.mask
            )
        except DegenerateSeriesError:
            turn_long = turn_short = None
        sr_l1 = None
        if l1_normalize:
            f_l1, _ = model.factor_series(panel, l1_normalize=True)
            sr_l1 = sharpe(f_l1[lo:hi])
        report.splits[split_name] = SplitMetrics(
            sharpe=sr,
            explained_variation=explained_variation(view, resid),
            xs_r2=xs_r2(view, resid),
            max_loss=max_loss,
            max_drawdown=drawdown,
            turnover_long=turn_long,
            turnover_short=turn_short,
            sharpe_l1_normalized=sr_l1,
        )
    return report, beta, factor


def _report_rows(report: EvaluationReport) -> list[dict]:
    rows = []
    for split_name, metrics in report.splits.items():
        rows.append(
            {
                "model": report.model,
                "split": split_name,
                "SR": metrics.sharpe,
                "EV": metrics.explained_variation,
                "XS_R2": metrics.xs_r2,
                "max_loss": metrics.max_loss,
                "max_drawdown": metrics.max_drawdown,
                "turnover_long": metrics.turnover_long,
                "turnover_short": metrics.turnover_short,
                "SR_l1_normalized": metrics.sharpe_l1_normalized,
                "degenerate": metrics.degenerate,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = RunConfig.load(args.config)
    sim_config = SimConfig(
        setup=config.getint("sim", "setup", 1),
        n_assets=config.getint("sim", "n_assets", 500),
        n_months=config.getint("sim", "n_months", 600),
        split=(
            config.getint("sim", "n_train", 250),
            config.getint("sim", "n_valid", 100),
            config.getint("sim", "n_test", 250),
        ),
        sigma_factor2=config.getfloat("sim", "sigma_factor2", 0.1),
        target_sharpe=config.getfloat("sim", "target_sharpe", 1.0),
        sigma_eps2=config.getfloat("sim", "sigma_eps2", 1.0),
        seed=args.seed if args.seed is not None else config.getint("sim", "seed", 0),
    )
    sim = simulate(sim_config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tcodes = {name: 1 for name in sim.panel.macro_names}
    write_panel_csvs(
        sim.panel,
        out / "returns.csv",
        out / "characteristics.csv",
        (out / "macro.csv") if sim.panel.n_macro else None,
        tcodes=tcodes,
    )
    truth_table(sim).to_csv(out / "truth.csv", index=False)

    split_spec = sim_config.split_spec()
    print(f"simulated setup {sim_config.setup}: {sim_config.n_assets} assets x "
          f"{sim_config.n_months} months (seed {sim_config.seed})")
    for name in split_spec.names:
        metrics = population_metrics(sim, split_spec.range_of(name))
        print(
            f"population {name:5s}  SR {metrics['SR']:6.3f}  "
            f"EV {metrics['EV']:6.3f}  XS-R2 {metrics['XS_R2']:6.3f}"
        )
    return EXIT_OK


def cmd_train(args) -> int:
    config = RunConfig.load(args.config)
    panel, split_spec = _load_config_panel(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else config.getint("train", "seed", 0)

    names = _selected_models(config, args.models)
    if config.getbool("train", "grid_search", fallback=False) and "gan" in names:
        grid = GanHyperParams.paper_grid()
        limit = config.getint("train", "grid_limit", None)
        if limit:
            grid = grid[:limit]
        ensemble, search_log = hyperparameter_search(
            panel,
            split_spec,
            grid,
            ensemble_size=config.getint("train", "ensemble_size", 9),
            budget=config.getint("train", "budget", None),
            base_seed=seed,
            **_gan_fit_options(config),
        )
        save_model(ensemble, out / "gan")
        with open(out / "search_log.csv", "w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(search_log[0]))
            writer.writeheader()
            writer.writerows(search_log)
        names = [n for n in names if n != "gan"]

    for name in names:
        log.info("training %s", name)
        model = train_model(name, panel, split_spec, config, seed, workers=args.workers)
        save_model(model, out / name)
        print(f"saved {name} checkpoint to {out / name}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = RunConfig.load(args.config)
    panel, split_spec = _load_config_panel(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint_root = Path(config.get("evaluate", "checkpoints", fallback=args.out))
    seed = args.seed if args.seed is not None else 0

    all_rows = []
    factors: dict[str, pd.Series] = {}
    for name in _selected_models(config, args.models):
        directory = checkpoint_root / name
        if not directory.exists():
            raise ConfigError(f"missing checkpoint for {name!r} at {directory}")
        model = load_model(directory)
        report, beta, factor = evaluate_model(
            model,
            panel,
            split_spec,
            name,
            l1_normalize=args.l1_normalize,
            size_filter=args.size_filter,
            beta_epochs=config.getint("evaluate", "beta_epochs", 256),
            seed=seed,
        )
        rows = _report_rows(report)
        all_rows.extend(rows)
        factors[name] = pd.Series(factor, index=panel.months)

        lo, hi = split_spec.test
        test_view = panel.view(lo, hi)
        if (test_view.counts() >= 10).all():
            sort = beta_decile_sort(
                BetaPanel(beta.values[lo:hi]), test_view, weighting=args.weighting
            )
            decile_frame = pd.DataFrame(
                sort["decile_returns"],
                index=test_view.months,
                columns=[f"decile_{k+1}" for k in range(10)],
            )
            decile_frame["spread_10_1"] = sort["spread"]
            decile_frame.to_csv(out / f"deciles_{name}.csv")
            cumulative = pd.DataFrame(
                sort["cumulative_returns"],
                index=test_view.months,
                columns=[f"decile_{k+1}" for k in range(10)],
            )
            cumulative.to_csv(out / f"cumulative_{name}.csv")
        for split_name, metrics in report.splits.items():
            flag = " [degenerate factor]" if metrics.degenerate else ""
            print(
                f"{name:4s} {split_name:5s}  SR {metrics.sharpe:7.3f}  "
                f"EV {metrics.explained_variation:7.3f}  "
                f"XS-R2 {metrics.xs_r2:7.3f}{flag}"
            )

    frame = pd.DataFrame(all_rows)
    frame.to_csv(out / "metrics.csv", index=False)
    if len(factors) >= 2:
        corr, names = factor_correlations(factors)
        pd.DataFrame(corr, index=names, columns=names).to_csv(out / "factor_correlations.csv")
    pd.DataFrame({name: series for name, series in factors.items()}).to_csv(
        out / "factor_series.csv", index_label="month"
    )
    return EXIT_OK


def cmd_importance(args) -> int:
    config = RunConfig.load(args.config)
    panel, split_spec = _load_config_panel(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint_root = Path(config.get("evaluate", "checkpoints", fallback=args.out))
    wrote = 0
    for name in _selected_models(config, args.models):
        directory = checkpoint_root / name
        if not directory.exists():
            raise ConfigError(f"missing checkpoint for {name!r} at {directory}")
        model = load_model(directory)
        if isinstance(model, (SdfModel, EnsembleModel)):
            input_names, sens = variable_importance(model, panel, split_spec.test)
        elif isinstance(model, LinearSdfModel):
            totals = np.abs(model.coef)
            if totals.sum() == 0:
                raise DegenerateSeriesError("all coefficients are zero")
            input_names, sens = model.factor_names, totals / totals.sum()
        elif isinstance(model, ForecastModel):
            input_names, sens = _forecast_importance(model, panel, split_spec.test)
        else:
            continue
        with open(out / f"importance_{name}.csv", "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["input", "sensitivity"])
            order = np.argsort(sens)[::-1]
            writer.writerows((input_names[i], sens[i]) for i in order)
        wrote += 1
        print(f"wrote importance ranking for {name}")
    if not wrote:
        raise ConfigError("no differentiable model selected for importance")
    return EXIT_OK


def _forecast_importance(model: ForecastModel, panel, month_range):
    from .models.gan import SdfModel as _S

    proxy = _S(
        ffn_spec=model.spec,
        ffn_params=model.member_params[0],
        lstm_spec=None,
        lstm_params=None,
        char_names=model.char_names,
        macro_names=[],
    )
    names, sens_sum = None, None
    for params in model.member_params:
        proxy.ffn_params = params
        names, sens = variable_importance(proxy, panel, month_range)
        sens_sum = sens if sens_sum is None else sens_sum + sens
    return names, sens_sum / len(model.member_params)


def cmd_report(args) -> int:
    out = Path(args.out)
    metrics_path = out / "metrics.csv"
    if not metrics_path.exists():
        raise ConfigError(
            f"no evaluation artifacts at {metrics_path}; run the evaluate command first"
        )
    frame = pd.read_csv(metrics_path)
    table = frame.pivot_table(
        index="model", columns="split", values=["SR", "EV", "XS_R2"], sort=False
    )
    table = table.reindex(columns=["train", "valid", "test"], level=1)
    table.to_csv(out / "comparison.csv")
    print(table.round(3).to_string())
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdfest", description="SDF estimation engine for panels of excess returns"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler in (
        ("simulate", cmd_simulate),
        ("train", cmd_train),
        ("evaluate", cmd_evaluate),
        ("importance", cmd_importance),
        ("report", cmd_report),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "report"), help="INI config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--size-filter", type=float, default=None, dest="size_filter",
                       help="evaluate only stocks above this fraction of total market cap")
        p.add_argument("--weighting", choices=("equal", "value"), default="equal")
        p.add_argument("--l1-normalize", action="store_true", dest="l1_normalize")
        p.add_argument("--models", default=None,
                       help="comma-separated subset of gan,unc,ls,en,ffn")
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.handler(args)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (
        TrainingDivergedError,
        SingularMomentMatrixError,
        np.linalg.LinAlgError,
        FloatingPointError,
        DegenerateSeriesError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, SplitError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
