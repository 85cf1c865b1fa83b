import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from hermnet import autodiff as ad
from hermnet import activations as A
from hermnet import data
from hermnet.exceptions import DomainError, StructuralError
from hermnet.hermite import GaussianQuadrature, expansion_residual, relu
from hermnet.models import (AutoencoderSpec, MlpSpec, Split, build, epochs_to_reach, evaluate,
                            parameter_count, train_supervised)
from hermnet.optim import make_optimizer


# activations


@pytest.mark.parametrize("x,expected", [(0.0, 0.0), (1.0, 0.5), (-3.0, -0.75)])
def test_softsign_values(x, expected):
    assert A.softsign(x) == expected


@given(st.floats(-1e15, 1e15))
def test_softsign_strictly_inside_unit_interval(x):
    assert -1.0 < A.softsign(x) < 1.0


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_softsign_bounded_for_any_finite_input(x):
    # beyond 2**53 the quotient rounds to exactly +-1
    assert abs(A.softsign(x)) <= 1.0


def test_baseline_values():
    assert A.relu(-2.0) == 0.0 and A.relu(3.0) == 3.0
    assert A.sigmoid(0.0) == 0.5
    assert A.elu(-1.0) == pytest.approx(math.exp(-1) - 1, abs=1e-15)
    assert A.selu(1.0) == pytest.approx(A.SELU_SCALE)


@pytest.mark.parametrize("name", sorted(A.BASELINES))
def test_baseline_derivatives(name):
    x = ad.Tensor(np.array([-1.3, -0.2, 0.4, 2.0]), requires_grad=True)
    layer = A.Activation(name)
    ad.sum(layer(x)).backward()
    numeric = oracles.numerical_gradient(lambda: float(np.sum(layer(x.data).data)), x.data)
    assert oracles.relative_error(x.grad, numeric) < 1e-6


def test_unknown_activation():
    with pytest.raises(DomainError):
        A.Activation("swish")


def test_hermite_relu_init_at_zero():
    c = oracles.relu_closed_forms()
    expected = c[0] + c[2] * (-1 / math.sqrt(2)) + c[4] * (3 / math.sqrt(24))
    out = A.HermiteActivation(4)(np.array([0.0])).data[0]
    assert out == pytest.approx(expected, abs=1e-12)
    assert out == pytest.approx(0.1496, abs=1e-4)


def test_hermite_layer_shape_check():
    with pytest.raises(StructuralError):
        A.HermiteActivation(4, coefficients=[1.0, 2.0])


def test_hermite_gradient_nonzero_almost_everywhere():
    x = ad.Tensor(np.random.default_rng(0).standard_normal(20000), requires_grad=True)
    for d in (2, 4, 8):
        x.grad = None
        ad.sum(A.HermiteActivation(d)(x)).backward()
        assert np.mean(x.grad != 0.0) >= 0.99


def test_relu_init_residual_non_increasing_in_degree():
    quad = GaussianQuadrature.split_at_zero(64)
    res = [expansion_residual(relu, A.relu_init_coefficients(d), quad) for d in range(11)]
    assert np.all(np.diff(res) <= 1e-12)


def test_reinitialize_resets_coefficients():
    layer = A.HermiteActivation(4)
    layer.coefficients.data += 1.0
    layer.reinitialize(3)
    assert np.array_equal(layer.coefficients.data, A.relu_init_coefficients(4))


def test_preact_block_reduces_to_identity():
    block = A.PreactBlock(5, activation="hermite", residual=True)
    block.dense.weight.data[:] = 0.0
    block.dense.bias.data[:] = 0.0
    x = np.random.default_rng(1).standard_normal((7, 5))
    assert np.array_equal(block(x).data, x)


def test_preact_block_residual_width_check():
    with pytest.raises(StructuralError):
        A.PreactBlock(4, out_width=3, residual=True)


# models


def test_parameter_count_small_relu():
    spec = MlpSpec((4, 3, 2), activation="relu", normalize=False)
    assert parameter_count(spec) == 23
    assert build(spec).n_parameters() == 23


def test_shallow_net_forward_and_hermite_extra_scalars():
    relu_spec = MlpSpec((3072, 256, 256, 10), activation="relu", normalize=False)
    herm_spec = relu_spec.replace(activation="hermite")
    model = build(herm_spec)
    out = model(np.random.default_rng(0).standard_normal((128, 3072)))
    assert out.shape == (128, 10)
    assert build(herm_spec).n_parameters() - build(relu_spec).n_parameters() == 10


@pytest.mark.parametrize("spec", [
    MlpSpec((5, 7, 7, 7, 3), residual=True),
    MlpSpec((5, 7, 7, 7, 3), residual=True, normalize=False, activation="elu"),
    MlpSpec((5, 7, 6, 3), normalize=True),
    MlpSpec((5, 7, 3), trainable_coefficients=False),
    MlpSpec((5, 3)),
    AutoencoderSpec((64, 32, 16, 4)),
    AutoencoderSpec((64, 16, 4), activation="relu", normalize=True),
])
def test_parameter_count_matches_model(spec):
    assert build(spec).n_parameters() == parameter_count(spec)


def test_invalid_specs():
    with pytest.raises(StructuralError):
        MlpSpec((4,))
    with pytest.raises(StructuralError):
        MlpSpec((4, 0, 2))
    with pytest.raises(StructuralError):
        MlpSpec((4, 3, 5, 2), residual=True)
    with pytest.raises(StructuralError):
        AutoencoderSpec((4, 8))


def test_reinitialize_determinism():
    spec = MlpSpec((4, 6, 3))
    a, b, c = build(spec, seed=5), build(spec, seed=5), build(spec, seed=6)
    for (_, pa), (_, pb), (_, pc) in zip(a.named_parameters(), b.named_parameters(), c.named_parameters()):
        assert np.array_equal(pa.data, pb.data)
    diffs = [np.max(np.abs(pa.data - pc.data)) for (_, pa), (_, pc) in zip(a.named_parameters(), c.named_parameters())]
    assert max(diffs) > 0


def test_hidden_outputs_count():
    model = build(MlpSpec((2, 4, 4, 4, 3)))
    assert len(model.hidden_outputs(np.zeros((3, 2)))) == 3
    model = build(MlpSpec((2, 4, 4, 4, 3), residual=True))
    assert len(model.hidden_outputs(np.zeros((3, 2)))) == 3


def _split(ds):
    return Split(ds.features, ds.labels, ds.n_classes)


def test_separable_blobs_reach_full_accuracy():
    ds = data.synth_blobs(2, 50, 2, spread=0.1, seed=3)
    assert oracles.logistic_accuracy(ds.features, ds.labels) == 1.0
    model = build(MlpSpec((2, 8, 2)), seed=0)
    opt = make_optimizer("sgd", model.parameters(), 0.1)
    train_supervised(model, _split(ds), None, opt, 50, seed=0, batch_size=16)
    assert evaluate(model, ds.features, ds.labels, 2)[1] == 1.0


def test_autoencoder_mse_drops_tenfold():
    ds = data.load_digits_8x8()
    model = build(AutoencoderSpec((64, 32, 16)), seed=0)
    split = Split(ds.features)
    before = evaluate(model, ds.features, task="reconstruct")[0]
    opt = make_optimizer("adam", model.parameters(), 1e-3)
    log = train_supervised(model, split, split, opt, 15, seed=0, batch_size=64, task="reconstruct")
    assert log[-1].test_loss * 10 <= before
    assert model.encode(ds.features[:5]).shape == (5, 16)


def test_training_is_deterministic():
    ds = data.synth_two_moons(120, 0.1, seed=0).with_test_split(0.25, seed=0)

    def run():
        model = build(MlpSpec((2, 16, 2)), seed=1)
        opt = make_optimizer("sgd_momentum", model.parameters(), 0.05)
        log = train_supervised(model, _split(ds.train), _split(ds.test), opt, 5, seed=2, batch_size=32,
                               clock=lambda: 0.0)
        return [r.row() for r in log]

    assert run() == run()


def test_epochs_to_reach():
    assert epochs_to_reach([0.9, 0.5, 0.2], 0.5) == 1
    assert epochs_to_reach([0.9, 0.5], 0.1) is None
    assert epochs_to_reach([0.1, 0.7, 0.95], 0.9, mode="above") == 2
