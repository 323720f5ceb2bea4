import numpy as np
import pytest

from sdfest.data import quantile_transform_panel
from sdfest.evaluation import residual_projection
from sdfest.models import (
    beta_from_linear,
    beta_from_network,
    estimate_beta,
)
from sdfest.sim import SimConfig, simulate

from test_eval import panel_from_returns


def test_network_beta_recovers_direction_on_noiseless_factor_data():
    # R = beta * F exactly, beta = product of two characteristics
    sim = simulate(SimConfig(setup=1, n_assets=150, n_months=75, split=(60, 5, 10),
                             sigma_eps2=0.0, seed=0))
    panel = quantile_transform_panel(sim.panel)
    beta = beta_from_network(
        panel, (0, 60), sim.truth.factor, None, hidden_dims=(32, 32),
        learning_rate=0.005, epochs=800, seed=0,
    )
    for t in range(60, 75):
        corr = np.corrcoef(beta.values[t], sim.truth.beta[t])[0, 1]
        assert corr > 0.95, f"month {t}: correlation {corr:.3f}"


def test_linear_beta_zero_factor_gives_zero_loadings():
    rng = np.random.default_rng(1)
    panel = panel_from_returns(
        rng.normal(size=(12, 8)), chars=rng.normal(size=(12, 8, 2))
    )
    beta = beta_from_linear(panel, (0, 12), np.zeros(12))
    np.testing.assert_allclose(beta.values, np.zeros((12, 8)), atol=1e-12)


def test_linear_beta_scales_with_factor_residuals_unchanged():
    rng = np.random.default_rng(2)
    panel = panel_from_returns(
        rng.normal(0.01, 0.05, size=(18, 10)), chars=rng.normal(size=(18, 10, 2))
    )
    factor = rng.normal(0.02, 0.1, size=18)
    b1 = beta_from_linear(panel, (0, 18), factor)
    b2 = beta_from_linear(panel, (0, 18), 3.0 * factor)
    np.testing.assert_allclose(b2.values, 3.0 * b1.values, atol=1e-10)
    r1 = residual_projection(panel, b1.values)
    r2 = residual_projection(panel, b2.values)
    np.testing.assert_allclose(r1, r2, atol=1e-12)


def test_estimate_beta_rejects_unknown_model():
    panel = panel_from_returns(np.zeros((3, 2)) + 0.01)
    with pytest.raises(TypeError):
        estimate_beta(object(), panel, (0, 3))
