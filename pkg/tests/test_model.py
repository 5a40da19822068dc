import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st
from scipy.spatial.distance import cdist
from scipy.stats import norm

from kno import autodiff as ad
from kno.autodiff import Tape, Tensor
from kno.config import quadrature_for
from kno.errors import ContractError
from kno.model import (ModelConfig, as_leaves, build_model, count_parameters, final_block_apply, flatten,
                       forward, forward_tensors, integral_block_apply, kernel_scale_names, layer_groups, lift,
                       load_checkpoint, make_index_map, param_shapes, predict, project, save_checkpoint,
                       unflatten)
from kno.normalization import Normalizer
from kno.quadrature import gauss_legendre
from kno.training import loss


def gelu(x):
    return x * norm.cdf(x)


def softplus(x):
    return np.log1p(np.exp(x))


def wendland(r, eps):
    s = eps * r
    return np.clip(1 - s, 0, None) ** 6 * (35 * s * s + 18 * s + 3)


def matern(r, eps):
    s = math.sqrt(5) * eps * r
    return (1 + s + s * s / 3) * np.exp(-s)


def gaussian(r, eps):
    return np.exp(-(eps * r) ** 2)


RADIAL = {"wendland_c4": wendland, "gaussian": gaussian, "matern_c4": matern}


def mixture(tau, lam, mu, nu):
    # tau (A, B, d); lam (2,), mu and nu (2, d)
    out = 0.0
    for r in range(2):
        out = out + lam[r] * np.prod(np.cos(2 * np.pi * tau * mu[r]) * np.exp(-2 * np.pi**2 * tau**2 * nu[r]),
                                     axis=-1)
    return out


def reference_forward(model, F, out_points=None):
    """Row-layout forward pass for one sample, written from the layer definitions."""
    P, cfg, rule = model.params, model.config, model.quad_rule
    XT, XQ, w = model.train_grid, rule.points, rule.weights
    Y = XT if out_points is None else out_points
    I = make_index_map(cfg.p, cfg.q) - 1
    e = softplus(P["interp.raw_eps"][0])
    coeff = np.linalg.solve(wendland(cdist(XT, XT), e), F)
    fq = wendland(cdist(XQ, XT), e) @ coeff
    h = gelu(np.hstack([fq, XQ]) @ P["lift.W"] + P["lift.b"])
    for ell in range(1, cfg.depth + 1):
        eps = softplus(P[f"block{ell}.raw_eps"])
        kern = RADIAL[cfg.block_kernel]
        S = np.column_stack([kern(cdist(XQ, XQ), eps[I[j]]) @ (w * h[:, j]) for j in range(cfg.p)])
        h = gelu(h @ P[f"block{ell}.W"] + P[f"block{ell}.b"] + S)
    tau = Y[:, None, :] - XQ[None, :, :]
    if cfg.final_kernel == "spectral_mixture":
        lam, mu, nu = P["final.lam"], P["final.mu"], softplus(P["final.raw_nu"])
        kern = [mixture(tau, lam[i], mu[i], nu[i]) for i in range(cfg.q)]
    else:
        kern = [RADIAL[cfg.final_kernel](cdist(Y, XQ), softplus(P["final.raw_eps"][i])) for i in range(cfg.q)]
    h = gelu(np.column_stack([kern[I[j]] @ (w * h[:, j]) for j in range(cfg.p)]))
    h = gelu(h @ P["proj.W1"] + P["proj.b1"])
    h = gelu(h @ P["proj.W2"] + P["proj.b2"])
    return h @ P["proj.W3"] + P["proj.b3"]


def _toy(d=1, kernel_config="wendland-sm", p=4, q=4, depth=2, seed=3):
    cfg = ModelConfig(d=d, d_u=1, p=p, q=q, depth=depth, kernel_config=kernel_config)
    if d == 1:
        rule, grid = gauss_legendre(8, 0, 1), np.linspace(0, 1, 10)[:, None]
    else:
        rule = quadrature_for("darcy_cont", 20)
        xs = np.linspace(0, 1, 4)
        grid = np.array([[a, b] for a in xs for b in xs])
    return build_model(cfg, rule, grid, seed)


# -- index map and parameter layout -----------------------------------------------

def test_index_map_examples():
    assert make_index_map(4, 4).tolist() == [1, 2, 3, 4]
    assert make_index_map(4, 2).tolist() == [1, 1, 2, 2]
    assert np.bincount(make_index_map(64, 16))[1:].tolist() == [4] * 16
    with pytest.raises(ContractError):
        make_index_map(2, 3)


@given(p=st.integers(1, 200), data=st.data())
def test_index_map_is_monotone_surjection(p, data):
    q = data.draw(st.integers(1, p))
    I = make_index_map(p, q)
    assert I[0] == 1 and I[-1] == q
    assert np.all(np.diff(I) >= 0) and set(I.tolist()) == set(range(1, q + 1))
    counts = np.bincount(I)[1:]
    assert counts.max() - counts.min() <= 1


def test_parameter_count_formula():
    assert count_parameters(ModelConfig(d=1, d_u=1, d_y=1, p=1, q=1, depth=1)) == 19
    burgers = ModelConfig(d=1, d_u=1, d_y=1, p=64, q=64, depth=6)
    assert count_parameters(burgers) == 34_306
    assert abs(count_parameters(burgers) - 34_307) / 34_307 < 1e-3


@given(p=st.integers(1, 12), data=st.data(), depth=st.integers(0, 4), d=st.integers(1, 2),
       d_u=st.integers(1, 3), d_y=st.integers(1, 2))
def test_parameter_count_closed_form(p, data, depth, d, d_u, d_y):
    q = data.draw(st.integers(1, p))
    cfg = ModelConfig(d=d, d_u=d_u, d_y=d_y, p=p, q=q, depth=depth)
    expected = (d_u + d) * p + p + depth * (q + p * p + p) + q * (2 + 4 * d) + 2 * (p * p + p) + p * d_y + d_y + 1
    assert count_parameters(cfg) == expected


def test_layer_groups_cover_kernel_layers():
    cfg = ModelConfig(p=4, q=2, depth=2)
    groups = layer_groups(cfg)
    assert list(groups) == ["block1", "block2", "final"]
    assert kernel_scale_names(cfg) == ["block1.raw_eps", "block2.raw_eps", "final.raw_nu"]


# -- layers -------------------------------------------------------------------------

def test_lift_examples():
    assert lift(np.array([[0.3]]), np.array([[0.5]]), np.zeros((2, 3)), np.zeros(3)).tolist() == [[0, 0, 0]]
    out = lift(np.array([[1.0]]), np.array([[0.5]]), np.ones((2, 3)), np.zeros(3))
    npt.assert_allclose(out, 1.5 * norm.cdf(1.5), rtol=1e-14)
    assert out[0, 0] == pytest.approx(1.39979, abs=1e-5)
    with pytest.raises(ContractError):
        lift(np.ones((1, 1)), np.ones((1, 1)), np.ones((3, 3)), np.zeros(3))


def test_integral_block_against_loop():
    rng = np.random.default_rng(0)
    rule = gauss_legendre(7, 0, 1)
    p, q = 6, 3
    raw = rng.normal(1, 0.1, q)
    W, b, g = rng.normal(size=(p, p)), rng.normal(size=p), rng.normal(size=(7, p))
    I = make_index_map(p, q) - 1
    X = rule.points
    S = np.column_stack([wendland(cdist(X, X), softplus(raw[I[j]])) @ (rule.weights * g[:, j])
                         for j in range(p)])
    npt.assert_allclose(integral_block_apply(raw, W, b, g, rule, I + 1), g @ W + b + S, rtol=1e-12)
    npt.assert_array_equal(integral_block_apply(raw, np.zeros((p, p)), np.zeros(p), np.zeros((7, p)), rule, I + 1),
                           0.0)


def test_final_block_against_loop():
    rng = np.random.default_rng(1)
    rule = gauss_legendre(6, 0, 1)
    p, q = 4, 2
    lam, mu, nu = rng.normal(size=(q, 2)), rng.normal(size=(q, 2, 1)), rng.uniform(0.1, 1, (q, 2, 1))
    g = rng.normal(size=(6, p))
    out_pts = np.linspace(0, 1, 5)[:, None]
    I = make_index_map(p, q) - 1
    tau = out_pts[:, None, :] - rule.points[None]
    ref = np.column_stack([mixture(tau, lam[I[j]], mu[I[j]], nu[I[j]]) @ (rule.weights * g[:, j])
                           for j in range(p)])
    npt.assert_allclose(final_block_apply(lam, mu, nu, g, rule, out_pts, I + 1), ref, rtol=1e-12)
    npt.assert_array_equal(final_block_apply(lam, mu, nu, np.zeros((6, p)), rule, out_pts, I + 1), 0.0)


def test_projection_examples():
    p = 3
    params = {"proj.W1": np.zeros((p, p)), "proj.b1": np.zeros(p), "proj.W2": np.zeros((p, p)),
              "proj.b2": np.zeros(p), "proj.W3": np.zeros((p, 1)), "proj.b3": np.zeros(1)}
    x = np.random.default_rng(2).normal(size=(5, p))
    npt.assert_array_equal(project(x, params), 0.0)
    params["proj.b3"] = np.array([2.5])
    npt.assert_array_equal(project(x, params), 2.5)
    with pytest.raises(ContractError):
        project(np.ones((5, p + 1)), params)


# -- full forward pass ------------------------------------------------------------------

@pytest.mark.parametrize("d,kernel_config", [(1, "wendland-sm"), (1, "gaussian-all"), (2, "wendland-sm"),
                                             (2, "matern-sm")])
def test_forward_matches_reference(d, kernel_config):
    model = _toy(d=d, kernel_config=kernel_config, p=6, q=3)
    rng = np.random.default_rng(4)
    F = rng.normal(size=(2, model.train_grid.shape[0], 1))
    out = forward(model, F)
    for m in range(2):
        npt.assert_allclose(out[m], reference_forward(model, F[m]), rtol=1e-10, atol=1e-12)


def test_zero_input_with_zero_biases_gives_zero():
    # the coordinates are lifted too, so the lifting weights must vanish as well
    model = _toy()
    params = {k: (np.zeros_like(v) if k.endswith((".b", ".b1", ".b2", ".b3")) or k == "lift.W" else v)
              for k, v in model.params.items()}
    out = forward(model.with_params(params), np.zeros((1, 10, 1)))
    npt.assert_allclose(out, 0.0, atol=1e-15)


def test_forward_at_other_points_and_chunks():
    model = _toy()
    F = np.random.default_rng(5).normal(size=(3, 10, 1))
    Y = np.linspace(0, 1, 23)[:, None]
    full = forward(model, F, Y)
    npt.assert_array_equal(forward(model, F, Y, chunk=4), full)
    npt.assert_allclose(full[1], reference_forward(model, F[1], Y), rtol=1e-10, atol=1e-12)


def test_forward_rejects_bad_inputs():
    model = _toy()
    with pytest.raises(ContractError):
        forward(model, np.zeros((1, 9, 1)))
    with pytest.raises(ContractError):
        forward(model, np.full((1, 10, 1), np.nan))


def test_toy_gradients_match_finite_differences():
    model = _toy(seed=7)
    rng = np.random.default_rng(0)
    F, Y = rng.normal(size=(3, 10, 1)), rng.normal(size=(3, 10, 1))
    names = sorted(model.params)

    def value(params):
        m = model.with_params(params)
        P = {k: Tensor(v) for k, v in params.items()}
        return float(loss(forward_tensors(m, P, F), Y, [P[k] for k in kernel_scale_names(m.config)], 1e-2).data)

    with Tape() as tape:
        P = as_leaves(model.params)
        L = loss(forward_tensors(model, P, F), Y, [P[k] for k in kernel_scale_names(model.config)], 1e-2)
    grads = dict(zip(names, tape.gradient(L, [P[k] for k in names])))
    for name in names:
        fd = np.zeros_like(model.params[name])
        for idx in np.ndindex(fd.shape):
            plus = {k: v.copy() for k, v in model.params.items()}
            minus = {k: v.copy() for k, v in model.params.items()}
            plus[name][idx] += 1e-6
            minus[name][idx] -= 1e-6
            fd[idx] = (value(plus) - value(minus)) / 2e-6
        rel = np.linalg.norm(grads[name] - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-4, name


# -- persistence ------------------------------------------------------------------------

@given(p=st.integers(1, 6), data=st.data(), depth=st.integers(0, 3), d=st.integers(1, 2))
@settings(max_examples=30)
def test_flatten_roundtrip(p, data, depth, d):
    q = data.draw(st.integers(1, p))
    cfg = ModelConfig(d=d, p=p, q=q, depth=depth)
    rng = np.random.default_rng(p + 10 * q)
    params = {k: rng.normal(size=s) for k, s in param_shapes(cfg).items()}
    vec = flatten(cfg, params)
    assert vec.size == count_parameters(cfg)
    back = unflatten(cfg, vec)
    for k in params:
        npt.assert_array_equal(back[k], params[k])
    with pytest.raises(ContractError):
        unflatten(cfg, np.zeros(vec.size + 1))


def test_checkpoint_roundtrip(tmp_path):
    model = _toy(d=2)
    F = np.random.default_rng(6).normal(size=(4, 16, 1))
    model.normalizer = Normalizer.fit(F, F ** 2)
    path = save_checkpoint(model, tmp_path / "m.ckpt", {"note": "x"})
    back, header = load_checkpoint(path)
    assert header["note"] == "x" and header["n_params"] == count_parameters(model)
    assert flatten(back).tobytes() == flatten(model).tobytes()
    npt.assert_array_equal(predict(back, F), predict(model, F))


def test_predict_at_training_grid_points_is_exact_restriction():
    model = _toy()
    F = np.random.default_rng(8).normal(size=(5, 10, 1))
    model.normalizer = Normalizer.fit(F, np.sin(F))
    coarse = predict(model, F)
    fine_pts = np.linspace(0, 1, 19)[:, None]  # contains every training node
    fine = predict(model, F, fine_pts)
    assert np.max(np.abs(fine[:, ::2] - coarse)) < 1e-12


def test_same_seed_same_parameters():
    assert flatten(_toy(seed=11)).tobytes() == flatten(_toy(seed=11)).tobytes()
    assert flatten(_toy(seed=11)).tobytes() != flatten(_toy(seed=12)).tobytes()


def test_config_validation():
    with pytest.raises(ContractError):
        ModelConfig(p=2, q=3)
    with pytest.raises(ContractError):
        ModelConfig(kernel_config="nope")
