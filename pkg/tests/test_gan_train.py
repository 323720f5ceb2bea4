import numpy as np
import pytest

from sdfest.data import PanelDataset, SplitSpec, quantile_transform_panel
from sdfest.models import (
    EnsembleModel,
    SdfGan,
    gan_loss,
    variable_importance,
)
from sdfest.netcore import FeedforwardSpec, NetworkParams
from sdfest.models.gan import SdfModel, factor_from_weights
from sdfest.sim import SimConfig, simulate

from helpers import make_panel, month_labels
from test_eval import panel_from_returns


def single_asset_panel(returns):
    return panel_from_returns(np.asarray(returns)[:, None], chars=np.ones((len(returns), 1, 1)))


def small_sim_panel(setup=2, seed=0, n_assets=30, n_months=48, split=(24, 12, 12)):
    sim = simulate(
        SimConfig(setup=setup, n_assets=n_assets, n_months=n_months, split=split, seed=seed)
    )
    return quantile_transform_panel(sim.panel), sim


def tiny_gan(**kwargs):
    defaults = dict(
        hidden_layers=1,
        hidden_units=8,
        state_dim=2,
        cond_state_dim=2,
        cond_moments=2,
        learning_rate=0.01,
        epochs_unconditional=30,
        epochs_adversary=30,
        epochs_final=30,
        seed=0,
    )
    defaults.update(kwargs)
    return SdfGan(**defaults)


# -- fitted model mechanics -----------------------------------------------------


def test_zero_parameter_network_prices_nothing():
    panel = make_panel(n_months=6, n_assets=4, seed=0)
    spec = FeedforwardSpec(input_dim=2, hidden_dims=(4,), output_dim=1)
    model = SdfModel(spec, NetworkParams(spec.layout()), None, None, ["c0", "c1"], [])
    weights = model.weights(panel)
    np.testing.assert_array_equal(weights, np.zeros((6, 4)))
    factor, discount = model.factor_series(panel)
    np.testing.assert_array_equal(factor, np.zeros(6))
    np.testing.assert_array_equal(discount, np.ones(6))


def test_duplicating_assets_halves_weights_keeps_factor():
    panel = make_panel(n_months=5, n_assets=3, seed=1)
    doubled = PanelDataset(
        months=panel.months,
        asset_ids=np.array([f"a{i}" for i in range(6)]),
        returns=np.tile(panel.returns, (1, 2)),
        chars=np.tile(panel.chars, (1, 2, 1)),
        mask=np.tile(panel.mask, (1, 2)),
        macro=panel.macro,
        char_names=panel.char_names,
        macro_names=panel.macro_names,
    )
    spec = FeedforwardSpec(input_dim=2, hidden_dims=(4,), output_dim=1)
    params = spec.init(3)
    model = SdfModel(spec, params, None, None, ["c0", "c1"], [])
    w1 = model.weights(panel)
    w2 = model.weights(doubled)
    np.testing.assert_allclose(w2[:, :3], w1 / 2.0)
    f1, _ = model.factor_series(panel)
    f2, _ = model.factor_series(doubled)
    np.testing.assert_allclose(f1, f2)


def test_single_asset_constant_output_factor():
    panel = single_asset_panel([0.1, 0.2])
    spec = FeedforwardSpec(input_dim=1, hidden_dims=(), output_dim=1)
    params = NetworkParams(spec.layout())
    params.view("b0")[...] = [7.0]
    model = SdfModel(spec, params, None, None, ["c0"], [])
    factor, _ = model.factor_series(panel)
    np.testing.assert_allclose(factor, [0.7, 1.4])


def test_l1_normalized_factor_same_signs():
    panel = make_panel(n_months=6, n_assets=5, seed=2)
    spec = FeedforwardSpec(input_dim=2, hidden_dims=(4,), output_dim=1)
    model = SdfModel(spec, spec.init(4), None, None, ["c0", "c1"], [])
    raw, _ = model.factor_series(panel)
    normalized, _ = model.factor_series(panel, l1_normalize=True)
    assert np.all(np.sign(raw) == np.sign(normalized))


def test_l1_normalize_zero_weights_rejected():
    panel = make_panel(n_months=3, n_assets=3, seed=3)
    spec = FeedforwardSpec(input_dim=2, hidden_dims=(), output_dim=1)
    model = SdfModel(spec, NetworkParams(spec.layout()), None, None, ["c0", "c1"], [])
    with pytest.raises(Exception, match="normalize"):
        model.factor_series(panel, l1_normalize=True)


# -- training ---------------------------------------------------------------------


def test_phase_one_solves_single_asset_moment():
    # constant returns 0.1: the unconditional moment E[(1 - w r) r] = 0 has
    # the analytic solution w = E[r] / E[r^2] = 10
    panel = single_asset_panel([0.1] * 20)
    est = SdfGan(
        hidden_layers=0,
        hidden_units=1,
        learning_rate=0.05,
        epochs_unconditional=2000,
        unconditional=True,
        keep_prob=1.0,
        seed=0,
    )
    est.fit(panel, (0, 20))
    omega = est.sdf_weights(panel)
    assert abs(omega[0, 0] - 10.0) < 0.5


def test_unconditional_equals_first_phase_bit_identical():
    panel, _ = small_sim_panel()
    full = tiny_gan().fit(panel, (0, 24))
    unc = tiny_gan(unconditional=True).fit(panel, (0, 24))
    # the adversarial phases touch different parameters; the first-phase
    # trajectory must be byte-identical
    np.testing.assert_array_equal(
        np.asarray(full.history_["unconditional"]),
        np.asarray(unc.history_["unconditional"]),
    )


def test_adversary_increases_loss_and_final_phase_decreases_it():
    panel, _ = small_sim_panel(seed=1)
    est = tiny_gan(seed=1).fit(panel, (0, 24))
    adversary = est.history_["adversary"]
    assert adversary[-1] >= adversary[0]
    final = est.history_["final"]
    assert final[-1] <= final[0]


def test_training_loss_not_increased_by_phase_one():
    panel, _ = small_sim_panel(seed=2)
    est = tiny_gan(seed=2, unconditional=True).fit(panel, (0, 24))
    history = est.history_["unconditional"]
    assert history[-1] <= history[0]


def test_no_lookahead_in_test_weights():
    panel, _ = small_sim_panel(seed=3)
    est = tiny_gan(seed=3, epochs_unconditional=10, epochs_adversary=5, epochs_final=5)
    est.fit(panel, (0, 24))
    w_base = est.sdf_weights(panel)
    bumped = PanelDataset(
        months=panel.months,
        asset_ids=panel.asset_ids,
        returns=panel.returns,
        chars=panel.chars,
        mask=panel.mask,
        macro=panel.macro.copy(),
        char_names=panel.char_names,
        macro_names=panel.macro_names,
    )
    cutoff = 30
    bumped.macro[cutoff:] += 5.0
    w_bumped = est.sdf_weights(bumped)
    np.testing.assert_array_equal(w_base[:cutoff], w_bumped[:cutoff])
    assert not np.array_equal(w_base[cutoff:], w_bumped[cutoff:])


def test_same_seed_reproducible_fit():
    panel, _ = small_sim_panel(seed=4)
    a = tiny_gan(seed=9, epochs_unconditional=8, epochs_adversary=4, epochs_final=4).fit(panel, (0, 24))
    b = tiny_gan(seed=9, epochs_unconditional=8, epochs_adversary=4, epochs_final=4).fit(panel, (0, 24))
    np.testing.assert_array_equal(
        a.model_.ffn_params.values, b.model_.ffn_params.values
    )
    np.testing.assert_array_equal(
        a.model_.lstm_params.values, b.model_.lstm_params.values
    )


# -- ensembles -----------------------------------------------------------------------


def test_ensemble_of_one_equals_member():
    panel, _ = small_sim_panel(seed=5)
    est = tiny_gan(seed=5, epochs_unconditional=8, epochs_adversary=4, epochs_final=4)
    est.fit(panel, (0, 24))
    ensemble = EnsembleModel([est.model_])
    np.testing.assert_array_equal(ensemble.weights(panel), est.model_.weights(panel))


def test_ensemble_of_copies_equals_member():
    panel, _ = small_sim_panel(seed=6)
    est = tiny_gan(seed=6, epochs_unconditional=8, epochs_adversary=4, epochs_final=4)
    est.fit(panel, (0, 24))
    ensemble = EnsembleModel([est.model_, est.model_, est.model_])
    np.testing.assert_allclose(ensemble.weights(panel), est.model_.weights(panel))


def test_ensemble_weights_are_member_mean():
    panel, _ = small_sim_panel(seed=7)
    members = []
    for seed in (1, 2, 3):
        est = tiny_gan(seed=seed, epochs_unconditional=6, epochs_adversary=3, epochs_final=3)
        members.append(est.fit(panel, (0, 24)).model_)
    ensemble = EnsembleModel(members)
    expected = np.mean([m.weights(panel) for m in members], axis=0)
    np.testing.assert_array_equal(ensemble.weights(panel), expected)


def test_ensemble_requires_members_and_matching_specs():
    with pytest.raises(ValueError):
        EnsembleModel([])
    panel, _ = small_sim_panel(seed=8)
    a = tiny_gan(seed=1, epochs_unconditional=4, epochs_adversary=2, epochs_final=2)
    b = tiny_gan(seed=2, hidden_units=4, epochs_unconditional=4, epochs_adversary=2, epochs_final=2)
    with pytest.raises(ValueError, match="hyperparameters"):
        EnsembleModel([a.fit(panel, (0, 24)).model_, b.fit(panel, (0, 24)).model_])


# -- variable importance -------------------------------------------------------------


def test_importance_linear_model():
    # affine weight network w = 2 x1 + 3 x2: sensitivities 0.4 / 0.6
    panel = make_panel(n_months=8, n_assets=5, seed=9)
    spec = FeedforwardSpec(input_dim=2, hidden_dims=(), output_dim=1)
    params = NetworkParams(spec.layout())
    params.view("W0")[...] = [[2.0, 3.0]]
    model = SdfModel(spec, params, None, None, ["c0", "c1"], [])
    names, sens = variable_importance(model, panel, (0, 8))
    assert names == ["c0", "c1"]
    np.testing.assert_allclose(sens, [0.4, 0.6])


def test_importance_disconnected_input_is_zero():
    panel = make_panel(n_months=6, n_assets=4, seed=10)
    spec = FeedforwardSpec(input_dim=2, hidden_dims=(3,), output_dim=1)
    params = spec.init(11)
    params.view("W0")[:, 1] = 0.0  # cut input 1 from every hidden unit
    model = SdfModel(spec, params, None, None, ["c0", "c1"], [])
    _, sens = variable_importance(model, panel, (0, 6))
    assert sens[1] == 0.0
    assert sens[0] == pytest.approx(1.0)


def test_importance_matches_finite_differences():
    panel = make_panel(n_months=5, n_assets=6, seed=12)
    spec = FeedforwardSpec(input_dim=2, hidden_dims=(6, 4), output_dim=1)
    params = spec.init(13)
    model = SdfModel(spec, params, None, None, ["c0", "c1"], [])
    names, sens = variable_importance(model, panel, (0, 5))

    step = 1e-6
    raw = model.raw_weight_outputs(panel)
    fd = []
    for j in range(2):
        shifted = PanelDataset(
            months=panel.months,
            asset_ids=panel.asset_ids,
            returns=panel.returns,
            chars=panel.chars.copy(),
            mask=panel.mask,
            macro=panel.macro,
            char_names=panel.char_names,
            macro_names=panel.macro_names,
        )
        shifted.chars[:, :, j] += step
        fd.append(np.abs((model.raw_weight_outputs(shifted) - raw) / step).mean())
    fd = np.asarray(fd) / np.sum(fd)
    np.testing.assert_allclose(sens, fd, atol=1e-3)


def test_importance_with_macro_states_covers_macro_inputs():
    panel, _ = small_sim_panel(seed=13)
    est = tiny_gan(seed=14, epochs_unconditional=6, epochs_adversary=3, epochs_final=3)
    est.fit(panel, (0, 24))
    names, sens = variable_importance(est.model_, panel, (24, 36))
    assert names == panel.char_names + panel.macro_names
    assert sens.sum() == pytest.approx(1.0)
    assert np.all(sens >= 0.0)


def test_importance_macro_gradient_matches_finite_differences():
    # perturb the final month's macro observation: only that month's states
    # move, and only through the last encoder step
    panel, _ = small_sim_panel(seed=15)
    est = tiny_gan(seed=16, epochs_unconditional=6, epochs_adversary=3, epochs_final=3)
    est.fit(panel, (0, 24))
    model = est.model_
    from sdfest.models.gan import _char_state_gradients, _lstm_input_jacobians

    _, state_grads = _char_state_gradients(model, panel)
    jac = _lstm_input_jacobians(model, panel)
    t = panel.n_months - 1
    rows = slice(t * panel.n_assets, (t + 1) * panel.n_assets)
    analytic = state_grads[rows] @ jac[t]  # (N, q)

    step = 1e-6
    raw = model.raw_weight_outputs(panel)
    for j in range(panel.n_macro):
        bumped = PanelDataset(
            months=panel.months,
            asset_ids=panel.asset_ids,
            returns=panel.returns,
            chars=panel.chars,
            mask=panel.mask,
            macro=panel.macro.copy(),
            char_names=panel.char_names,
            macro_names=panel.macro_names,
        )
        bumped.macro[t, j] += step
        fd = (model.raw_weight_outputs(bumped)[t] - raw[t]) / step
        np.testing.assert_allclose(analytic[:, j], fd, atol=1e-4)


def test_importance_all_zero_rejected():
    panel = make_panel(n_months=4, n_assets=3, seed=17)
    spec = FeedforwardSpec(input_dim=2, hidden_dims=(), output_dim=1)
    model = SdfModel(spec, NetworkParams(spec.layout()), None, None, ["c0", "c1"], [])
    with pytest.raises(Exception, match="zero"):
        variable_importance(model, panel, (0, 4))
