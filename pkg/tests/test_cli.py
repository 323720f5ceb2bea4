import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from sdfest.cli import main
from sdfest.models import save_model
from sdfest.models.gan import SdfModel
from sdfest.netcore import FeedforwardSpec, NetworkParams


def write_config(path: Path, body: str) -> Path:
    path.write_text(body)
    return path


@pytest.fixture
def sim_config(tmp_path):
    return write_config(
        tmp_path / "sim.ini",
        "[sim]\nsetup = 1\nn_assets = 25\nn_months = 60\n"
        "n_train = 30\nn_valid = 10\nn_test = 20\nseed = 7\n",
    )


@pytest.fixture
def pipeline_config(tmp_path):
    return write_config(
        tmp_path / "run.ini",
        f"""
[data]
directory = {tmp_path / 'data'}

[split]
train = 30
valid = 10
test = 20

[train]
models = ls
seed = 1

[evaluate]
checkpoints = {tmp_path / 'out'}
beta_epochs = 16
""".strip(),
    )


def test_simulate_writes_expected_files(sim_config, tmp_path, capsys):
    out = tmp_path / "data"
    code = main(["simulate", "--config", str(sim_config), "--out", str(out)])
    assert code == 0
    returns = pd.read_csv(out / "returns.csv")
    assert len(returns) == 25 * 60
    assert set(returns.columns) == {"month", "asset_id", "excess_return"}
    chars = pd.read_csv(out / "characteristics.csv")
    assert list(chars.columns) == ["month", "asset_id", "char_a", "char_b"]
    truth = pd.read_csv(out / "truth.csv")
    assert set(truth.columns) == {"month", "asset_id", "beta", "F", "h"}
    assert "population" in capsys.readouterr().out


def test_simulate_same_seed_identical_files(sim_config, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(sim_config), "--out", str(out_a)]) == 0
    assert main(["simulate", "--config", str(sim_config), "--out", str(out_b)]) == 0
    for name in ("returns.csv", "characteristics.csv", "truth.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_simulate_invalid_setup_usage_error(tmp_path, capsys):
    config = write_config(tmp_path / "bad.ini", "[sim]\nsetup = 9\n")
    code = main(["simulate", "--config", str(config), "--out", str(tmp_path / "x")])
    assert code == 1
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_usage_error(tmp_path):
    code = main(["simulate", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)])
    assert code == 1


def test_train_evaluate_report_round_trip(sim_config, pipeline_config, tmp_path, capsys):
    data_dir, out = tmp_path / "data", tmp_path / "out"
    assert main(["simulate", "--config", str(sim_config), "--out", str(data_dir)]) == 0
    assert main(["train", "--config", str(pipeline_config), "--out", str(out)]) == 0
    assert (out / "ls" / "manifest.json").exists()
    assert main(["evaluate", "--config", str(pipeline_config), "--out", str(out)]) == 0
    metrics = pd.read_csv(out / "metrics.csv")
    assert set(metrics["split"]) == {"train", "valid", "test"}
    assert (out / "deciles_ls.csv").exists()
    assert (out / "factor_series.csv").exists()

    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "ls" in printed
    comparison = pd.read_csv(out / "comparison.csv", header=[0, 1], index_col=0)
    assert comparison.shape == (1, 9)


def test_evaluate_missing_checkpoint_is_usage_error(sim_config, pipeline_config, tmp_path, capsys):
    data_dir = tmp_path / "data"
    assert main(["simulate", "--config", str(sim_config), "--out", str(data_dir)]) == 0
    code = main(["evaluate", "--config", str(pipeline_config), "--out", str(tmp_path / "out")])
    assert code == 1
    assert "missing checkpoint" in capsys.readouterr().err


def test_evaluate_zero_weight_checkpoint_flags_degenerate_row(
    sim_config, pipeline_config, tmp_path, capsys
):
    data_dir, out = tmp_path / "data", tmp_path / "out"
    assert main(["simulate", "--config", str(sim_config), "--out", str(data_dir)]) == 0
    # a stub checkpoint whose network outputs zero weights everywhere
    spec = FeedforwardSpec(input_dim=2, hidden_dims=(4,), output_dim=1)
    stub = SdfModel(spec, NetworkParams(spec.layout()), None, None, ["char_a", "char_b"], [])
    save_model(stub, out / "ls")
    code = main(["evaluate", "--config", str(pipeline_config), "--out", str(out)])
    assert code == 0
    assert "degenerate factor" in capsys.readouterr().out
    metrics = pd.read_csv(out / "metrics.csv")
    assert metrics["degenerate"].all()


def test_report_without_artifacts_is_usage_error(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 1
    assert "evaluate" in capsys.readouterr().err


def test_three_model_report_layout(sim_config, tmp_path, capsys):
    # gan (tiny), ffn and ls on a small panel: 3 rows x 9 metric columns
    data_dir, out = tmp_path / "data", tmp_path / "out"
    assert main(["simulate", "--config", str(sim_config), "--out", str(data_dir)]) == 0
    config = write_config(
        tmp_path / "three.ini",
        f"""
[data]
directory = {data_dir}

[split]
train = 30
valid = 10
test = 20

[train]
models = gan,ffn,ls
seed = 2
epochs_unconditional = 6
epochs_adversary = 3
epochs_final = 3
hidden_layers = 1
hidden_units = 8
ffn_epochs = 6
ffn_ensemble_size = 1

[evaluate]
checkpoints = {out}
beta_epochs = 8
""".strip(),
    )
    assert main(["train", "--config", str(config), "--out", str(out)]) == 0
    assert main(["evaluate", "--config", str(config), "--out", str(out)]) == 0
    assert main(["report", "--out", str(out)]) == 0
    comparison = pd.read_csv(out / "comparison.csv", header=[0, 1], index_col=0)
    assert comparison.shape == (3, 9)
    assert set(comparison.index) == {"gan", "ffn", "ls"}
    assert (out / "factor_correlations.csv").exists()
    assert (out / "importance.csv").exists() is False  # importance is its own command
    assert main(["importance", "--config", str(config), "--out", str(out)]) == 0
    importance = pd.read_csv(out / "importance_gan.csv")
    assert list(importance.columns) == ["input", "sensitivity"]
    assert importance["sensitivity"].sum() == pytest.approx(1.0)
