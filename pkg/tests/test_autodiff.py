import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from hermnet import autodiff as ad
from hermnet.exceptions import NumericError, StructuralError
from hermnet.optim import SGD, Adam, make_optimizer


def check_grad(build, leaves, tol=1e-5):
    """Compare backward() against central differences for every leaf."""
    for leaf in leaves:
        leaf.grad = None
    build().backward()
    for leaf in leaves:
        numeric = oracles.numerical_gradient(lambda: build().item(), leaf.data, h=1e-6)
        assert oracles.relative_error(leaf.grad, numeric) < tol, leaf.name


def param(rng, *shape, name=None):
    return ad.Tensor(rng.standard_normal(shape), requires_grad=True, name=name)


def test_matmul_identity():
    a = ad.Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ad.matmul(a, np.eye(2)).data, [[1.0, 2.0], [3.0, 4.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(StructuralError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_broadcast_mismatch():
    with pytest.raises(StructuralError):
        ad.add(np.ones((2, 3)), np.ones((4,)))


def test_square_derivative():
    x = ad.Tensor(3.0, requires_grad=True)
    (x * x).backward()
    assert x.grad == 6.0


def test_backward_needs_scalar():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(StructuralError):
        (x * 2.0).backward()


def test_gradients_accumulate_across_backward_calls():
    rng = np.random.default_rng(1)
    w = param(rng, 3, 2)
    x = rng.standard_normal((4, 3))
    ad.sum(ad.matmul(x, w) * ad.matmul(x, w)).backward()
    first = w.grad.copy()
    ad.sum(ad.matmul(x, w) * ad.matmul(x, w)).backward()
    assert np.array_equal(w.grad, 2 * first)


def test_nan_raises_naming_op():
    x = ad.Tensor(np.array([1.0, -1.0]), requires_grad=True)
    with pytest.raises(NumericError) as info, np.errstate(invalid="ignore"):
        ad.pointwise_unary(x, np.sqrt, lambda v, y: 0.5 / y, "sqrt")
    assert info.value.op == "sqrt"


def test_cross_entropy_uniform():
    loss = ad.softmax_cross_entropy(np.zeros((3, 4)), np.full((3, 4), 0.25))
    assert loss.item() == pytest.approx(math.log(4), abs=1e-12)


def test_cross_entropy_logit_gradient_identity():
    rng = np.random.default_rng(2)
    z = param(rng, 5, 3)
    y = ad.one_hot([0, 2, 1, 1, 0], 3)
    ad.softmax_cross_entropy(z, y).backward()
    assert np.allclose(z.grad, (ad.softmax(z.data) - y) / 5, atol=1e-14)


def test_cross_entropy_rejects_non_distribution():
    with pytest.raises(StructuralError):
        ad.softmax_cross_entropy(np.zeros((2, 3)), np.ones((2, 3)))


def test_mean_entropy_values():
    assert ad.mean_entropy(np.full((1, 10), 0.1)).item() == pytest.approx(math.log(10))
    assert ad.mean_entropy(np.eye(3)).item() == 0.0


# gradient checks over random shapes


SHAPES = [(n, k) for n in (1, 2, 3, 5) for k in (1, 2, 4, 6)][:20]


@pytest.mark.parametrize("n,k", SHAPES)
def test_dense_gradients(n, k):
    rng = np.random.default_rng(n * 10 + k)
    x, w, b = param(rng, n, k, name="x"), param(rng, k, 3, name="w"), param(rng, 3, name="b")
    check_grad(lambda: ad.sum(ad.matmul(x, w) + b) * 1.0 + ad.sum((ad.matmul(x, w) + b) * (ad.matmul(x, w) + b)),
               [x, w, b])


@pytest.mark.parametrize("n,k", [s for s in SHAPES if s[0] > 1])
def test_feature_normalize_gradients(n, k):
    rng = np.random.default_rng(100 + n * 10 + k)
    x = param(rng, n, k, name="x")
    scale = param(rng, k, name="scale")
    shift = param(rng, k, name="shift")
    target = rng.standard_normal((n, k))

    def build():
        y = ad.feature_normalize(x, scale, shift, training=True)
        return ad.sum(y * target) + ad.sum(y * y) * 0.1

    check_grad(build, [x, scale, shift])


def test_feature_normalize_eval_gradient_and_running_stats():
    rng = np.random.default_rng(5)
    x = param(rng, 6, 3, name="x")
    scale, shift = param(rng, 3, name="s"), param(rng, 3, name="t")
    rm, rv = np.zeros(3), np.ones(3)
    ad.feature_normalize(x, scale, shift, rm, rv, training=True)
    assert np.allclose(rm, 0.1 * x.data.mean(axis=0))
    assert np.allclose(rv, 0.9 + 0.1 * x.data.var(axis=0))

    def build():
        y = ad.feature_normalize(x, scale, shift, rm.copy(), rv.copy(), training=False)
        return ad.sum(y * y)

    check_grad(build, [x, scale, shift])


@pytest.mark.parametrize("n,k", SHAPES)
def test_softsign_gradients(n, k):
    rng = np.random.default_rng(200 + n * 10 + k)
    x = param(rng, n, k, name="x")
    check_grad(lambda: ad.sum(ad.softsign(x * 3.0) * np.arange(n * k).reshape(n, k)), [x])


@pytest.mark.parametrize("n,k", SHAPES)
def test_hermite_gradients(n, k):
    rng = np.random.default_rng(300 + n * 10 + k)
    x = param(rng, n, k, name="x")
    c = param(rng, 1 + (n + k) % 6, name="c")
    weights = rng.standard_normal((n, k))
    check_grad(lambda: ad.sum(ad.hermite(x, c) * weights), [x, c])


@pytest.mark.parametrize("n,k", SHAPES)
def test_soft_target_cross_entropy_gradients(n, k):
    rng = np.random.default_rng(400 + n * 10 + k)
    z = param(rng, n, k + 1, name="z")
    raw = rng.uniform(0.1, 1.0, (n, k + 1))
    p = ad.Tensor(raw / raw.sum(axis=1, keepdims=True), requires_grad=True, name="p")
    # finite differences in p leave the simplex; the loss is linear in p so this is still exact
    z.grad = p.grad = None
    ad.softmax_cross_entropy(z, p).backward()
    numeric_z = oracles.numerical_gradient(lambda: ad.softmax_cross_entropy(z.data, p.data).item(), z.data)
    assert oracles.relative_error(z.grad, numeric_z) < 1e-5
    expected_p = -ad.log_softmax(z.data) / n
    assert oracles.relative_error(p.grad, expected_p) < 1e-12


def test_hermite_forward_examples():
    c0 = ad.Tensor(np.array([1.0, 0, 0, 0, 0]))
    assert np.all(ad.hermite(np.array([-3.0, 0.5, 9.0]), c0).data == 1.0)
    ident = ad.hermite(np.array([-2.5]), np.array([0.0, 1.0]))
    assert ident.data[0] == -2.5


def test_hermite_coefficient_gradient_at_zero():
    c = ad.Tensor(np.ones(5), requires_grad=True)
    ad.sum(ad.hermite(np.array([0.0]), c)).backward()
    assert np.allclose(c.grad, [1, 0, -1 / math.sqrt(2), 0, 3 / math.sqrt(24)], atol=1e-15)


def test_hermite_identity_passes_gradient_through():
    x = ad.Tensor(np.array([0.3, -1.2]), requires_grad=True)
    ad.sum(ad.hermite(x, np.array([0.0, 1.0])) * np.array([2.0, 5.0])).backward()
    assert np.array_equal(x.grad, [2.0, 5.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=8))
def test_composite_graph_gradient(values):
    x = ad.Tensor(np.array(values), requires_grad=True)
    c = ad.Tensor(np.array([0.2, -0.4, 0.3]), requires_grad=True)

    def build():
        return ad.mean(ad.softsign(ad.hermite(ad.softsign(x), c)) * ad.softsign(x))

    build().backward()
    numeric = oracles.numerical_gradient(lambda: build().item(), x.data)
    assert np.allclose(x.grad, numeric, atol=1e-7)


def test_l2_norm_gradient():
    rng = np.random.default_rng(9)
    a, b = param(rng, 2, 3, name="a"), param(rng, 4, name="b")
    check_grad(lambda: ad.l2_norm([a, b]), [a, b])


# optimizers


def test_sgd_examples():
    w = ad.Tensor(np.array([1.0]), requires_grad=True)
    opt = SGD([w], lr=0.1)
    w.grad = np.array([2.0])
    opt.step()
    assert w.data[0] == pytest.approx(0.8)
    opt.step()
    assert w.data[0] == pytest.approx(0.6)


def test_adam_first_step():
    w = ad.Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([w], lr=1e-3)
    w.grad = np.array([1.0])
    opt.step()
    assert 1.0 - w.data[0] == pytest.approx(1e-3, rel=1e-6)


def test_momentum_accumulates():
    w = ad.Tensor(np.array([0.0]), requires_grad=True)
    opt = make_optimizer("sgd_momentum", [w], 1.0, momentum=0.5)
    w.grad = np.array([1.0])
    opt.step()
    opt.step()
    assert w.data[0] == pytest.approx(-2.5)


def test_optimizer_rejects_non_finite_gradient():
    w = ad.Tensor(np.array([0.0]), requires_grad=True)
    w.grad = np.array([np.inf])
    with pytest.raises(NumericError):
        SGD([w]).step()


def test_optimizer_rejects_bad_lr():
    with pytest.raises(ValueError):
        SGD([], lr=0.0)
