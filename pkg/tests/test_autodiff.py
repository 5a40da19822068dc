import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st
import hypothesis.extra.numpy as hnp
from scipy.stats import norm

from kno import autodiff as ad
from kno.autodiff import AdamState, LrSchedule, Tape, Tensor, adam_step, lr_at
from kno.errors import ContractError, NumericError


def _grad(fn, *arrays):
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*leaves)
    return out, tape.gradient(out, leaves)


def _fd(fn, arrays, h=1e-6):
    """Central differences of a scalar numpy function of several arrays."""
    grads = []
    for i, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus = [x.copy() for x in arrays]
            minus = [x.copy() for x in arrays]
            plus[i][idx] += h
            minus[i][idx] -= h
            g[idx] = (fn(*plus) - fn(*minus)) / (2 * h)
        grads.append(g)
    return grads


def test_square():
    _, (g,) = _grad(lambda x: x * x, np.array(3.0))
    assert g == 6.0


def test_softplus_at_zero():
    _, (g,) = _grad(ad.softplus, np.array(0.0))
    assert g == pytest.approx(1.0 / (1.0 + math.exp(0.0)), abs=1e-15)


def test_sum_of_matmul_matches_fd():
    rng = np.random.default_rng(1)
    A, B = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    _, (gA, gB) = _grad(lambda a, b: ad.sum(a @ b), A, B)
    fA, fB = _fd(lambda a, b: float(np.sum(a @ b)), [A, B])
    npt.assert_allclose(gA, fA, rtol=1e-5)
    npt.assert_allclose(gB, fB, rtol=1e-5)


PRIMITIVES = {
    "mul": (lambda a, b: ad.sum(a * b * b), lambda a, b: np.sum(a * b * b)),
    "div": (lambda a, b: ad.sum(a / (b * b + 1.0)), lambda a, b: np.sum(a / (b * b + 1.0))),
    "exp_cos": (lambda a, b: ad.sum(ad.exp(a) * ad.cos(b)), lambda a, b: np.sum(np.exp(a) * np.cos(b))),
    "power": (lambda a, b: ad.sum((a * a + 1.0) ** 1.5 - b), lambda a, b: np.sum((a * a + 1.0) ** 1.5 - b)),
    "gelu": (lambda a, b: ad.sum(ad.gelu(a) * b), lambda a, b: np.sum(ad.gelu_np(a) * b)),
    "softplus": (lambda a, b: ad.sum(ad.softplus(a - b)), lambda a, b: np.sum(np.logaddexp(0, a - b))),
    "concat_t": (lambda a, b: ad.sum(ad.concat([a, b.T], axis=0) ** 2),
                 lambda a, b: np.sum(np.concatenate([a, b.T], axis=0) ** 2)),
    "broadcast": (lambda a, b: ad.sum(a * ad.sum(b, axis=0)), lambda a, b: np.sum(a * b.sum(axis=0))),
    "mean_take": (lambda a, b: ad.mean(a[:, 1:] * b[1:, :].T), lambda a, b: np.mean(a[:, 1:] * b[1:, :].T)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_vs_fd(name):
    taped, ref = PRIMITIVES[name]
    rng = np.random.default_rng(sorted(PRIMITIVES).index(name))
    A, B = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    out, grads = _grad(taped, A, B)
    assert float(out.data) == pytest.approx(float(ref(A, B)), rel=1e-13)
    for g, f in zip(grads, _fd(lambda a, b: float(ref(a, b)), [A, B])):
        npt.assert_allclose(g, f, rtol=1e-5, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(a=hnp.arrays(np.float64, (4,), elements=st.floats(-3, 3)),
       b=hnp.arrays(np.float64, (4,), elements=st.floats(-3, 3)),
       s=st.floats(-2, 2), t=st.floats(-2, 2))
def test_grad_is_linear(a, b, s, t):
    x = Tensor(a, requires_grad=True)
    with Tape() as tape:
        L1 = ad.sum(ad.gelu(x) * b)
        L2 = ad.sum(ad.exp(x * 0.3))
        L = L1 * s + L2 * t
    g, = tape.gradient(L, [x])
    g1, = tape.gradient(L1, [x])
    g2, = tape.gradient(L2, [x])
    npt.assert_allclose(g, s * g1 + t * g2, rtol=1e-12, atol=1e-12)


def test_unreachable_param_gets_zero():
    x, y = Tensor(np.ones(3), requires_grad=True), Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        L = ad.sum(x * 2.0)
    gx, gy = tape.gradient(L, [x, y])
    npt.assert_array_equal(gx, 2.0)
    npt.assert_array_equal(gy, 0.0)


def test_non_scalar_loss_is_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ContractError):
        tape.gradient(y, [x])


@pytest.mark.filterwarnings("ignore:divide by zero")
def test_nan_in_backward_names_node():
    x = Tensor(np.array([0.0, 1.0]), requires_grad=True)
    with Tape() as tape:
        L = ad.sum(x ** 0.5)  # derivative at 0 is inf
    with pytest.raises(NumericError) as info:
        tape.gradient(L, [x])
    assert info.value.node_id is not None


def test_gradients_bitwise_repeatable():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(6, 6))
    runs = [_grad(lambda a: ad.sum(ad.gelu(a @ a) ** 2), A)[1][0] for _ in range(2)]
    assert runs[0].tobytes() == runs[1].tobytes()


def test_gelu_values():
    assert ad.gelu(Tensor(0.0)).data == 0.0
    assert ad.gelu(Tensor(10.0)).data == pytest.approx(10.0, abs=1e-6)
    assert ad.gelu(Tensor(1.0)).data == pytest.approx(norm.cdf(1.0), abs=1e-12)
    x = np.linspace(-6, 6, 101)
    npt.assert_allclose(ad.gelu(Tensor(x)).data, x * norm.cdf(x), rtol=1e-13, atol=1e-300)


# -- Adam ---------------------------------------------------------------------

def _scalar_adam(theta, gs, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(gs, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return theta


def test_adam_first_step():
    new, state = adam_step({"w": np.array([1.0])}, {"w": np.array([2.0])}, AdamState(), 1e-3)
    assert new["w"][0] - 1.0 == pytest.approx(-1e-3, abs=1e-6)
    assert state.t == 1


def test_adam_zero_gradient():
    p = {"w": np.arange(3.0)}
    new, state = adam_step(p, {"w": np.zeros(3)}, AdamState(), 1e-3)
    npt.assert_array_equal(new["w"], p["w"])
    assert state.t == 1


@given(g=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3), theta=st.floats(-3, 3))
def test_adam_matches_scalar_reference(g, theta):
    p, state = {"w": np.array([theta])}, AdamState()
    for _ in range(2):
        p, state = adam_step(p, {"w": np.array([g])}, state, 1e-3)
    assert p["w"][0] == pytest.approx(_scalar_adam(theta, [g, g], 1e-3), abs=1e-12)
    assert np.all(state.v["w"] >= 0)


def test_adam_shape_mismatch():
    with pytest.raises(ContractError):
        adam_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdamState(), 1e-3)


# -- learning-rate schedule -------------------------------------------------------

def test_lr_schedule_points():
    s = LrSchedule(1e-3, 1e-5, 100)
    assert lr_at(s, 0) == 1e-3
    assert lr_at(s, 50) == pytest.approx((1e-3 + 1e-5) / 2, rel=1e-12)
    assert lr_at(s, 100) == 1e-3


@given(epoch=st.integers(0, 10_000), cycle=st.integers(1, 500))
def test_lr_schedule_bounded_and_periodic(epoch, cycle):
    s = LrSchedule(1e-3, 1e-5, cycle)
    lr = lr_at(s, epoch)
    assert 1e-5 - 1e-18 <= lr <= 1e-3 + 1e-18
    assert lr == lr_at(s, epoch + cycle)


def test_lr_schedule_rejects_bad_bounds():
    with pytest.raises(ContractError):
        LrSchedule(1e-5, 1e-3, 10)
    with pytest.raises(ContractError):
        lr_at(LrSchedule(), -1)
