import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st
import hypothesis.extra.numpy as hnp

from kno.autodiff import Tensor
from kno.errors import ContractError, NumericError
from kno.datasets import DatasetSpec, generate
from kno.model import ModelConfig, flatten, init_params, kernel_scale_names, layer_groups, load_checkpoint
from kno.normalization import Normalizer
from kno.quadrature import gauss_legendre
from kno.training import (TrainConfig, _Objective, _ensure_normalizer, evaluate, freeze_train, init_model, loss,
                          train)


def _setup(seed=0, M=6):
    rng = np.random.default_rng(seed)
    grid = np.linspace(0, 1, 12)[:, None]
    x = grid[:, 0]
    a = rng.uniform(0.5, 1.5, (M, 1))
    F = (a * np.sin(2 * np.pi * x))[..., None]
    Y = (a**2 * np.cos(2 * np.pi * x) + 2.0)[..., None]
    cfg = ModelConfig(d=1, p=4, q=2, depth=2)
    model = init_model(cfg, gauss_legendre(8, 0, 1), grid, seed=1)
    return model, (F[:4], Y[:4]), (F[4:], Y[4:])


def test_loss_examples():
    rng = np.random.default_rng(0)
    g = rng.normal(size=(3, 5, 1))
    assert float(loss(Tensor(g), g).data) == 0.0
    assert float(loss(Tensor(np.zeros_like(g)), g).data) == pytest.approx(1.0, rel=1e-15)
    assert float(loss(Tensor(1.1 * g), g).data) == pytest.approx(0.01, rel=1e-12)
    with pytest.raises(ContractError):
        loss(Tensor(g), np.zeros_like(g))
    with pytest.raises(ContractError):
        loss(Tensor(g[:2]), g)


@given(raw=hnp.arrays(np.float64, (3,), elements=st.floats(-3, 3)), lam=st.floats(0, 1))
def test_loss_regularizer(raw, lam):
    g = np.ones((2, 4, 1))
    val = float(loss(Tensor(g), g, [Tensor(raw)], lam).data)
    assert val == pytest.approx(lam * np.sum(np.logaddexp(0, raw) ** 2), rel=1e-12, abs=1e-300)


def test_init_is_seeded():
    a, _, _ = _setup()
    b, _, _ = _setup()
    assert flatten(a).tobytes() == flatten(b).tobytes()


def test_init_kernel_parameter_statistics():
    cfg = ModelConfig(d=1, p=100, q=100, depth=100)
    params = init_params(cfg, np.linspace(0, 1, 5)[:, None], np.random.default_rng(0))
    raw = np.concatenate([params[f"block{ell}.raw_eps"] for ell in range(1, 101)])
    assert raw.size == 10_000
    assert 0.99 <= raw.mean() <= 1.01
    assert all(np.all(np.logaddexp(0, params[k]) > 0) for k in kernel_scale_names(cfg))


def test_normalizer_roundtrip():
    rng = np.random.default_rng(2)
    X, Y = rng.normal(3, 2, (7, 5, 2)), rng.normal(-1, 0.5, (7, 5, 1))
    Y[:, 0] = 4.0  # constant column keeps unit scale
    norm = Normalizer.fit(X, Y)
    npt.assert_allclose(norm.outputs.denormalize(norm.outputs.normalize(Y)), Y, atol=1e-12)
    npt.assert_allclose(norm.inputs.denormalize(norm.inputs.normalize(X)), X, atol=1e-12)
    assert norm.outputs.std[0, 0] == 1.0


def test_freeze_zero_epochs_keeps_parameters():
    model, tr, _ = _setup()
    out = freeze_train(model, tr, TrainConfig(epochs_per_layer=0))
    assert flatten(out).tobytes() == flatten(model).tobytes()


def test_freeze_phases_touch_one_layer_each():
    model, tr, _ = _setup()
    cfg = TrainConfig(epochs_per_layer=3)
    losses = []
    out = freeze_train(model, tr, cfg, losses)
    assert [label for label, _, _ in losses] == ["final", "block2", "block1"]
    assert all(after < before for _, before, after in losses)
    trained = {n for names in layer_groups(model.config).values() for n in names}
    for k in model.params:
        changed = not np.array_equal(out.params[k], model.params[k])
        assert changed == (k in trained), k


def test_freeze_improves_on_burgers_toy():
    ds = generate(DatasetSpec("burgers", resolution=32, seed=0), 20, 0)
    model = init_model(ModelConfig(d=1, p=8, q=4, depth=2), gauss_legendre(12, 0, 1), ds.grid, seed=0)
    losses = []
    freeze_train(model, (ds.inputs, ds.outputs), TrainConfig(epochs_per_layer=5, lr_max=5e-3), losses)
    assert len(losses) == 3
    assert any(after < before for _, before, after in losses)


def test_cached_prefix_matches_full_graph():
    model, tr, _ = _setup()
    model = _ensure_normalizer(model, *tr, TrainConfig())
    obj = _Objective(model, *tr, TrainConfig())
    names = set(layer_groups(model.config)["block2"])
    full_val, full_g = obj(model, names)
    cache_val, cache_g = obj(model, names, None, (2, obj.prefix(model, 2)))
    assert cache_val == pytest.approx(full_val, rel=1e-13)
    for k in names:
        npt.assert_allclose(cache_g[k], full_g[k], rtol=1e-10, atol=1e-14)


def test_zero_epochs_returns_initial_model():
    model, tr, te = _setup()
    out, hist = train(model, tr, te, TrainConfig(epochs=0, epochs_per_layer=5))
    assert len(hist) == 0
    assert flatten(out).tobytes() == flatten(model).tobytes()


def test_small_step_is_descent():
    model, tr, _ = _setup()
    model = _ensure_normalizer(model, *tr, TrainConfig())
    obj = _Objective(model, *tr, TrainConfig(reg_lambda=0.0))
    names = set(model.params)
    L0, g = obj(model, names)
    sq = sum(float(np.sum(v * v)) for v in g.values())
    for lr in (1e-5, 1e-6):
        stepped = model.with_params({k: v - lr * g[k] for k, v in model.params.items()})
        dL = obj(stepped, names)[0] - L0
        assert dL == pytest.approx(-lr * sq, rel=1e-2 if lr == 1e-5 else 1e-3)


def test_training_reduces_error_and_is_reproducible(tmp_path):
    model, tr, te = _setup()
    cfg = TrainConfig(epochs=30, epochs_per_layer=2, lr_max=5e-3, seed=4)
    a, hist = train(model, tr, te, cfg, checkpoint_path=tmp_path / "a.ckpt")
    b, _ = train(model, tr, te, cfg, checkpoint_path=tmp_path / "b.ckpt")
    assert len(hist) == 30
    assert flatten(a).tobytes() == flatten(b).tobytes()
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert min(hist.test_rel_l2_pct) == pytest.approx(evaluate(a, *te), rel=1e-12)
    start = evaluate(_ensure_normalizer(model, *tr, cfg), *te)
    assert evaluate(a, *te) < start
    loaded, _ = load_checkpoint(tmp_path / "a.ckpt")
    assert evaluate(loaded, *te) == evaluate(a, *te)


def test_minibatches_cover_every_sample():
    model, tr, te = _setup(M=10)
    cfg = TrainConfig(epochs=3, batch_size=3, seed=1)
    out, hist = train(model, tr, te, cfg)
    assert len(hist) == 3 and np.isfinite(hist.train_loss).all()


def test_nan_loss_aborts_with_checkpoint(tmp_path):
    model, tr, te = _setup()
    cfg = TrainConfig(epochs=5, lr_max=1e6, lr_min=1e5)
    with pytest.raises(NumericError) as info:
        train(model, tr, te, cfg, checkpoint_path=tmp_path / "m.ckpt")
    assert info.value.checkpoint == str(tmp_path / "m.ckpt")
    assert (tmp_path / "m.ckpt").exists()


def test_inputs_must_live_on_grid():
    model, (F, Y), te = _setup()
    with pytest.raises(ContractError):
        train(model, (F[:, :5], Y[:, :5]), te, TrainConfig(epochs=1))


def test_history_csv(tmp_path):
    model, tr, te = _setup()
    _, hist = train(model, tr, te, TrainConfig(epochs=2))
    hist.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,test_rel_l2_pct,lr,seconds" and len(lines) == 3


def test_identity_toy_converges():
    # identity operator on an 8-point grid, 16 affine input functions
    rng = np.random.default_rng(0)
    grid = np.linspace(0, 1, 8)[:, None]
    c = rng.normal(size=(16, 2))
    F = (c[:, :1] + c[:, 1:] * grid[:, 0])[..., None]
    model = init_model(ModelConfig(d=1, p=32, q=8, depth=1), gauss_legendre(8, 0, 1), grid, 0)
    cfg = TrainConfig(epochs=2000, seed=0, lr_max=2e-2, lr_min=2e-4, cycle_length=2000)
    out, hist = train(model, (F, F), (F, F), cfg)
    assert evaluate(out, F, F) < 1.0
    window_min = [min(hist.train_loss[i:i + 500]) for i in range(0, 2000, 500)]
    assert all(b <= a for a, b in zip(window_min, window_min[1:]))
