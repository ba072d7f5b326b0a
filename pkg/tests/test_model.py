import numpy as np
import pytest

from dyntmoe.config import Config
from dyntmoe.errors import ContractError
from dyntmoe.gradcheck import check_gradients, projected_loss
from dyntmoe.model import ForecastModel
from dyntmoe.nn import param_digest
from dyntmoe.tensor import Tensor
from helpers import micro_config, random_windows


def test_etth1_shape():
    cfg = Config(seq_len=96, pred_len=96, n_vars=7, patch_len=48, stride=12, d_model=8)
    out = ForecastModel(cfg)(np.zeros((1, 96, 7)))
    assert out.shape == (1, 96, 7)


def test_zero_parameters_give_head_bias():
    cfg = micro_config()
    model = ForecastModel(cfg)
    for p in model.parameters():
        p.data[...] = 0.0
    model.head.bias.data[...] = np.arange(cfg.pred_len, dtype=float)
    xs, _, os = random_windows(cfg, n=3)
    out = model.predict(xs, os)
    np.testing.assert_array_equal(out, np.broadcast_to(np.arange(cfg.pred_len)[None, :, None], out.shape))


def test_deterministic_construction_and_forward():
    cfg = micro_config(seed=7)
    a, b = ForecastModel(cfg), ForecastModel(cfg)
    assert param_digest(a.named_parameters()) == param_digest(b.named_parameters())
    xs, _, os = random_windows(cfg)
    np.testing.assert_array_equal(a.predict(xs, os), b.predict(xs, os))


def test_samples_are_independent():
    cfg = micro_config()
    model = ForecastModel(cfg)
    xs, _, os = random_windows(cfg, n=4)
    full = model.predict(xs, os)
    np.testing.assert_allclose(model.predict(xs[2:3], os[2:3]), full[2:3], atol=1e-13)


def test_wrong_window_shape():
    model = ForecastModel(micro_config())
    with pytest.raises(ContractError):
        model(np.zeros((1, 9, 2)))


def test_layer_count_and_relation_switch():
    cfg = micro_config(n_layers=2, use_relation=False)
    model = ForecastModel(cfg)
    assert len(model.layers) == 2 and all(l.relation is None for l in model.layers)
    xs, _, os = random_windows(cfg)
    assert model.predict(xs, os).shape == (6, cfg.pred_len, cfg.n_vars)


def test_add_expert_shared_id_across_layers():
    model = ForecastModel(micro_config(n_layers=2))
    eid = model.add_expert("seasonality", 0)
    assert all(eid in l.experts and eid in l.router.head for l in model.layers)
    assert model.drift_count() == 1
    model.remove_expert(1, eid)
    assert model.pool_sizes() == [5, 4]
    with pytest.raises(ContractError):
        model.remove_expert(0, "b0-identity")
    with pytest.raises(ContractError):
        model.remove_expert(1, eid)


def test_growth_leaves_predictions_unchanged_when_new_gate_is_zero():
    # a new zero head row gets logit 0; with every base logit far above it the
    # new expert is never selected and the forecasts do not move
    cfg = micro_config(top_k=1)
    model = ForecastModel(cfg)
    for l in model.layers:
        for p in l.router.head.values():
            p.data[...] = 0.0
        l.router.head["b0-identity"].data[...] = 50.0
        l.router.fusion.bias.data[...] = 0.0
    xs, _, os = random_windows(cfg)
    xs = np.abs(xs)
    before = model.predict(xs, os)
    model.add_expert("trend", 0)
    after = model.predict(xs, os)
    np.testing.assert_array_equal(after, before)


def test_last_hidden_and_archive():
    cfg = micro_config()
    model = ForecastModel(cfg)
    xs, _, os = random_windows(cfg, n=1)
    model.predict(xs, os)
    states = model.last_hidden()
    assert len(states) == 1 and states[0].shape == (cfg.d_hidden,)
    model.archive(states, 3)
    assert model.layers[0].router.repository.event_ids == [3]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_end_to_end_gradcheck(seed):
    # V=2, N=3, D=4, one layer, one expert of each kind, memory and relation on
    cfg = micro_config(seed=seed)
    assert (cfg.n_vars, cfg.n_patches, cfg.d_model, cfg.n_layers) == (2, 3, 4, 1)
    model = ForecastModel(cfg)
    rng = np.random.default_rng(seed)
    model.layers[0].router.archive_state(rng.standard_normal(cfg.d_hidden), 0)
    model.layers[0].relation.cycle.data[...] = rng.standard_normal(model.layers[0].relation.cycle.shape)
    xs, _, os = random_windows(cfg, n=2, seed=seed)
    x = Tensor(xs, requires_grad=True)
    fn = lambda: projected_loss(model(x, os), seed)
    assert check_gradients(fn, model.parameters() + [x]) < 1e-3
