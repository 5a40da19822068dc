import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from kno import autodiff as ad
from kno.autodiff import Tape, Tensor
from kno.errors import ContractError
from kno.kernels import (KernelSpec, channel_groups, channel_mix, distance_matrix, gram, kernel_eval,
                         kernel_integral, matern_c4, mixture_gram, radial_gram, radial_profile,
                         spectral_mixture, wendland_c4)
from kno.model import make_index_map


def _wendland_ref(r, eps):
    s = eps * r
    return max(0.0, 1.0 - s) ** 6 * (35 * s * s + 18 * s + 3)


def test_wendland_values():
    assert wendland_c4(0.0, 7.3) == 3.0
    assert wendland_c4(0.5, 1.0) == 0.32421875
    assert wendland_c4(0.6, 2.0) == 0.0
    with pytest.raises(ContractError):
        wendland_c4(-0.1, 1.0)


def test_wendland_vanishes_smoothly_at_support_edge():
    # the profile behaves like C h^6 just inside r = 1/eps
    eps = 2.0
    hs = np.array([1e-2, 5e-3, 2.5e-3])
    vals = wendland_c4(1.0 / eps - hs, eps)
    rates = np.log2(vals[:-1] / vals[1:])
    npt.assert_allclose(rates, 6.0, atol=0.05)
    # first derivative in r also vanishes at the edge
    d = (wendland_c4(0.5 - 1e-7, eps) - wendland_c4(0.5 - 2e-7, eps)) / 1e-7
    assert abs(d) < 1e-20


def test_spectral_mixture_values():
    assert spectral_mixture(np.zeros(1), [0.7, 1.6], [[0.3], [2.0]], [[1.0], [0.5]]) == pytest.approx(2.3)
    v = spectral_mixture(np.array([0.5]), [1.0, 0.0], [[0.0], [0.0]], [[1 / (2 * math.pi**2)], [1.0]])
    assert v == pytest.approx(math.exp(-0.25), abs=1e-12)
    with pytest.raises(ContractError):
        spectral_mixture(np.zeros(1), [1, 1], [[0], [0]], [[0.0], [1.0]])


def test_kernel_eval_cases():
    assert kernel_eval(KernelSpec.radial("gaussian", 3.0, 2), [0.1, 0.2], [0.1, 0.2]) == 1.0
    assert kernel_eval(KernelSpec.radial("matern_c4", 3.0, 1), [0.4], [0.4]) == 1.0
    w = kernel_eval(KernelSpec.radial("wendland_c4", 1.0, 2), [0.0, 0.0], [0.3, 0.4])
    assert w == pytest.approx(0.32421875, rel=1e-14)
    with pytest.raises(ContractError):
        kernel_eval(KernelSpec.radial("gaussian", 1.0, 2), [0.0], [0.0, 1.0])


def test_matern_matches_closed_form():
    r = np.linspace(0, 2, 9)
    s = math.sqrt(5) * 1.7 * r
    npt.assert_allclose(matern_c4(r, 1.7), (1 + s + s * s / 3) * np.exp(-s), rtol=1e-14)


def test_gram_single_point_and_diagonal():
    g = gram(KernelSpec.radial("wendland_c4", 1.0, 1), [[0.3]], [[0.3]])
    assert g.toarray().tolist() == [[3.0]]
    X = np.linspace(0, 1, 11)[:, None]  # spacing 0.1
    g = gram(KernelSpec.radial("wendland_c4", 1 / 0.09, 1), X, X)
    assert g.storage == "compressed-sparse-rows"
    assert g.nnz == 11
    npt.assert_array_equal(g.toarray(), 3.0 * np.eye(11))
    with pytest.raises(ContractError):
        gram(KernelSpec.radial("gaussian", 1.0, 1), np.zeros((0, 1)), X)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), eps=st.floats(0.5, 20.0), dim=st.integers(1, 3))
def test_sparse_gram_matches_dense(seed, eps, dim):
    rng = np.random.default_rng(seed)
    X, Y = rng.random((40, dim)), rng.random((25, dim))
    sparse = gram(KernelSpec.radial("wendland_c4", eps, dim), X, Y).toarray()
    dense = np.vectorize(lambda r: _wendland_ref(r, eps))(distance_matrix(X, Y))
    npt.assert_allclose(sparse, dense, rtol=0, atol=1e-14)


@pytest.mark.parametrize("kind,eps", [("wendland_c4", 3.0), ("gaussian", 4.0), ("matern_c4", 5.0)])
def test_gram_symmetric_positive_definite(kind, eps):
    rng = np.random.default_rng(11)
    X = rng.random((120, 2))
    G = gram(KernelSpec.radial(kind, eps, 2), X, X).toarray()
    npt.assert_array_equal(G, G.T)
    lam = np.linalg.eigvalsh(G)
    assert lam.min() > -1e-10 * lam.max()


def test_gaussian_gram_small_is_pd():
    X = np.random.default_rng(3).random((10, 1))
    assert np.linalg.eigvalsh(gram(KernelSpec.radial("gaussian", 2.0, 1), X, X).toarray()).min() > 0


@pytest.mark.parametrize("kind", ["wendland_c4", "gaussian", "matern_c4"])
def test_radial_gram_gradient(kind):
    rng = np.random.default_rng(4)
    X = rng.random((12, 2))
    D = distance_matrix(X, X)
    raw = rng.normal(1.0, 0.1, size=3)
    W = rng.normal(size=(3, 12, 12))

    def f(r):
        return float(np.sum(W * radial_profile(kind, D[None], ad.softplus_np(r)[:, None, None])))

    x = Tensor(raw, requires_grad=True)
    with Tape() as tape:
        L = ad.sum(radial_gram(kind, ad.softplus(x), D) * W)
    g, = tape.gradient(L, [x])
    fd = np.array([(f(raw + h) - f(raw - h)) / 2e-6 for h in np.eye(3) * 1e-6])
    npt.assert_allclose(g, fd, rtol=1e-5)


def test_mixture_gram_matches_and_differentiates():
    rng = np.random.default_rng(8)
    d, q = 2, 3
    A, B = rng.random((5, d)), rng.random((7, d))
    diff = A[:, None] - B[None]
    lam, mu, nu = rng.normal(1, 0.1, (q, 2)), rng.normal(1, 0.1, (q, 2, d)), rng.uniform(0.1, 1, (q, 2, d))
    G = mixture_gram(Tensor(lam), Tensor(mu), Tensor(nu), diff).data
    for i in range(q):
        npt.assert_allclose(G[i], spectral_mixture(diff, lam[i], mu[i], nu[i]), rtol=1e-13)
    W = rng.normal(size=G.shape)

    def f(a, b, c):
        return float(np.sum(W * mixture_gram(Tensor(a), Tensor(b), Tensor(c), diff).data))

    leaves = [Tensor(v, requires_grad=True) for v in (lam, mu, nu)]
    with Tape() as tape:
        L = ad.sum(mixture_gram(*leaves, diff) * W)
    grads = tape.gradient(L, leaves)
    arrays = [lam, mu, nu]
    for k, g in enumerate(grads):
        fd = np.zeros_like(g)
        for idx in np.ndindex(g.shape):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[k][idx] += 1e-6
            minus[k][idx] -= 1e-6
            fd[idx] = (f(*plus) - f(*minus)) / 2e-6
        npt.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)


def test_channel_groups():
    assert channel_groups(np.array([1, 1, 2, 2])) == [(0, 0, 2), (1, 2, 4)]
    assert channel_groups(np.array([1, 2, 2, 3, 3])) == [(0, 0, 1), (1, 1, 3), (2, 3, 5)]


@settings(max_examples=30, deadline=None)
@given(p=st.integers(1, 9), data=st.data())
def test_kernel_integral_matches_loop(p, data):
    q = data.draw(st.integers(1, p))
    rng = np.random.default_rng(p * 31 + q)
    M, A, B = 2, 4, 5
    imap = make_index_map(p, q)
    G, v = rng.normal(size=(q, A, B)), rng.normal(size=(p, M, B))
    ref = np.stack([np.einsum("ab,mb->ma", G[imap[j] - 1], v[j]) for j in range(p)])
    Gt, vt = Tensor(G, requires_grad=True), Tensor(v, requires_grad=True)
    W = rng.normal(size=(p, M, A))
    with Tape() as tape:
        out = kernel_integral(Gt, vt, imap)
        L = ad.sum(out * W)
    npt.assert_allclose(out.data, ref, rtol=1e-13, atol=1e-13)
    gG, gv = tape.gradient(L, [Gt, vt])
    gG_ref = np.zeros_like(G)
    for j in range(p):
        gG_ref[imap[j] - 1] += W[j].T @ v[j]
    gv_ref = np.stack([W[j] @ G[imap[j] - 1] for j in range(p)])
    npt.assert_allclose(gG, gG_ref, rtol=1e-12, atol=1e-12)
    npt.assert_allclose(gv, gv_ref, rtol=1e-12, atol=1e-12)


def test_channel_mix_is_affine_map():
    rng = np.random.default_rng(2)
    W, x, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 2, 5)), rng.normal(size=4)
    out = channel_mix(Tensor(W), Tensor(x), Tensor(b)).data
    npt.assert_allclose(out, np.einsum("ij,imn->jmn", W, x) + b[:, None, None], rtol=1e-13)
    with pytest.raises(ContractError):
        channel_mix(Tensor(W), Tensor(x[:2]))


def test_kernel_spec_validation():
    with pytest.raises(ContractError):
        KernelSpec("cubic", [1.0])
    with pytest.raises(ContractError):
        KernelSpec("spectral_mixture", np.zeros(5), 1)
    spec = KernelSpec.mixture([1, 2], [[0.1], [0.2]], [[0.3], [0.4]], 1)
    lam, mu, nu = spec.mixture_params()
    npt.assert_allclose(nu.ravel(), [0.3, 0.4], rtol=1e-14)
    assert KernelSpec.radial("wendland_c4", 4.0).support_radius == pytest.approx(0.25)
