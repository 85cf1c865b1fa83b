import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from hermnet import autodiff as ad
from hermnet import data
from hermnet import diagnostics as D
from hermnet.exceptions import DomainError, StructuralError
from hermnet.layers import Module
from hermnet.models import MlpSpec, build
from hermnet.optim import make_optimizer


class Scalar(Module):
    def __init__(self, w):
        self.w = ad.Tensor(np.array([w]), requires_grad=True)

    def forward(self, x):
        return self.w


def half_square(m):
    return ad.mul(ad.sum(m.w * m.w), 0.5)


# landscape


def test_quadratic_landscape():
    model = Scalar(1.0)
    etas = (0.0, 0.25, 0.5, 1.0)
    probe = D.loss_along_gradient(model, None, None, 0, etas, loss_fn=half_square)
    assert probe.losses == tuple(0.5 * (1 - e) ** 2 for e in etas)
    assert probe.losses[-1] == 0.0
    assert model.w.data[0] == 1.0 and model.w.grad is None


def test_landscape_restores_model_and_matches_committed_loss():
    ds = data.synth_blobs(3, 40, seed=0)
    model = build(MlpSpec((2, 16, 16, 3)), seed=1)
    before = model.state_dict()
    probe = D.loss_along_gradient(model, ds.features, ds.labels, 3, (0.0,) + D.DEFAULT_ETAS)
    after = model.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)
    assert all(math.isfinite(v) for v in probe.losses)
    # the eta=0 entry is the training-mode loss at the current weights
    from hermnet.models import classification_loss
    assert probe.losses[0] == classification_loss(model, ds.features, ds.labels, 3)[0].item()


def test_landscape_probe_validation():
    with pytest.raises(StructuralError):
        D.LandscapeProbe((0.2, 0.1), (1.0, 1.0))
    with pytest.raises(DomainError):
        D.loss_along_gradient(Scalar(1.0), None, None, 0, (), loss_fn=half_square)


# smoothness and deviation


def test_beta_for_quadratic_is_one():
    w = [np.array([1.0, 2.0]), np.array([0.5, 1.0]), np.array([0.1, -3.0])]
    assert D.max_beta_smoothness(w, w) == pytest.approx(1.0)


def test_beta_single_pair():
    w = [np.zeros(2), np.array([0.3, 0.4])]
    g = [np.zeros(2), np.array([2.0, 0.0])]
    assert D.max_beta_smoothness(w, g) == pytest.approx(4.0)


def test_beta_skips_zero_displacements_and_rejects_all_zero():
    w = [np.zeros(1), np.zeros(1), np.ones(1)]
    g = [np.zeros(1), np.full(1, 9.0), np.full(1, 10.0)]
    assert D.max_beta_smoothness(w, g) == 1.0
    with pytest.raises(DomainError):
        D.max_beta_smoothness([np.zeros(1)] * 3, [np.arange(1.0)] * 3)


def test_weight_deviation():
    dev = D.weight_deviation([np.zeros(2), np.array([3.0, 4.0]), np.array([0.0, 1.0])])
    assert dev.tolist() == [0.0, 5.0, 1.0]
    assert np.all(dev >= 0)


def test_recorded_trajectory_shapes():
    ds = data.synth_blobs(3, 30, seed=0)
    model = build(MlpSpec((2, 8, 3)), seed=0)
    traj = D.record_trajectory(model, ds.features, ds.labels, 3, make_optimizer("sgd", model.parameters(), 0.1),
                               steps=5, batch_size=16)
    assert len(traj.weights) == 5 and traj.weights[0].size == model.n_parameters()
    assert D.max_beta_smoothness(traj.weights, traj.gradients) > 0


# active units


def test_hermite_network_fully_active_at_init():
    X = np.random.default_rng(0).standard_normal((256, 2))
    fractions = D.active_unit_census(build(MlpSpec((2, 64, 64, 3)), seed=0), X)
    assert all(f >= 0.999 for f in fractions)


def test_constructed_dead_relu_unit():
    model = build(MlpSpec((2, 8, 3), activation="relu", normalize=False), seed=0)
    dense = model.layers[0]
    dense.weight.data[:, 0] = 1e-6
    dense.bias.data[0] = -1e3
    X = np.random.default_rng(1).standard_normal((200, 2))
    assert np.all(model.hidden_outputs(X)[0][:, 0] == 0.0)
    assert D.active_unit_census(model, X)[0] <= 7 / 8


def test_identity_activation_fully_active():
    model = build(MlpSpec((2, 6, 6, 2), activation="identity", normalize=False), seed=0)
    X = np.random.default_rng(2).standard_normal((100, 2))
    assert D.active_unit_census(model, X) == [1.0, 1.0]


def test_census_rejects_bad_tau():
    with pytest.raises(DomainError):
        D.active_unit_census(build(MlpSpec((2, 3, 2))), np.zeros((2, 2)), tau=1.0)


# perturbation bound


def test_hermite_coefficient_sums():
    assert D.hermite_abs_coefficient_sums(8).tolist() == [1, 1, 2, 4, 10, 26, 76, 232, 764]


def test_conjugate_exponents():
    assert D.conjugate_exponent(2.0) == 2.0
    assert D.conjugate_exponent(1.0) == math.inf
    assert D.conjugate_exponent(math.inf) == 1.0
    with pytest.raises(DomainError):
        D.conjugate_exponent(0.5)


def test_identical_output_rows_give_zero():
    A = np.tile(np.array([[1.0, -2.0, 0.5, 3.0]]), (3, 1))
    W = np.random.default_rng(0).standard_normal((4, 2))
    r = D.lemma1_bound(D.BoundInputs(A, W, [0.2, 1.0, -0.5]), np.array([0.7, -1.1]))
    assert r.alpha == 0.0 and r.bound == 0.0 and r.lhs_max == 0.0


def test_bound_shape_errors():
    with pytest.raises(StructuralError):
        D.BoundInputs(np.ones((3, 4)), np.ones((5, 2)), [0.0, 1.0])
    inputs = D.BoundInputs(np.ones((3, 4)), np.ones((4, 2)), [0.0, 1.0])
    with pytest.raises(StructuralError):
        D.lemma1_bound(inputs, np.ones(3))


def test_lhs_matches_brute_force_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        inputs, x = D.random_bound_instance(rng, 4, 2.0)
        r = D.lemma1_bound(inputs, x)
        assert r.lhs_max == pytest.approx(oracles.brute_force_output_gap(inputs.A, inputs.W, inputs.c, x),
                                          rel=1e-10, abs=1e-12)


def test_linear_network_bound_holds():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        A = rng.standard_normal((3, 4))
        W = rng.standard_normal((4, 2))
        x = rng.standard_normal(2)
        for p in (1.0, 2.0, math.inf):
            r = D.lemma1_bound(D.BoundInputs(A, W, [0.0, 1.0], p), x)
            assert r.lhs_max <= r.bound * (1 + 1e-12)


def test_default_instance_bound_holds():
    rng = np.random.default_rng(5)
    inputs, x = D.random_bound_instance(rng, 4, 2.0)
    r = D.lemma1_bound(inputs, x, D.lemma1_constant(inputs.c, 32.0))
    assert r.bound >= r.lhs_max


def test_bound_fails_at_origin_with_constant_term():
    # sigma(0) = c_0 is shared by every hidden unit, so output gaps survive while beta vanishes
    A = np.array([[1.0, 0.0], [0.0, 0.0]])
    inputs = D.BoundInputs(A, np.eye(2), [1.0, 0.0, 0.0])
    r = D.lemma1_bound(inputs, np.zeros(2), D.lemma1_constant(inputs.c, 1e6))
    assert r.beta == 0.0 and r.bound == 0.0 and r.lhs_max == 1.0


def test_violation_counter_is_deterministic():
    assert D.lemma1_violations(2, 2.0, 50, seed=7) == D.lemma1_violations(2, 2.0, 50, seed=7)
    assert D.lemma1_violations(2, 2.0, 50, seed=7, scale=1e9) == 0


# far-from-data confidence


def test_required_norm_example():
    r = D.theorem1_required_norm(1.0, 4.0, 10, 0.05)
    assert r.value == pytest.approx(math.log(4.0 / math.log(1.5)), rel=1e-14)
    assert r.value == pytest.approx(2.289, abs=5e-4)
    assert not r.vacuous


def test_required_norm_vacuous_for_large_eps():
    assert D.theorem1_required_norm(1.0, 4.0, 10, 1e6) == (0.0, True)


def test_required_norm_scaling():
    a = D.theorem1_required_norm(1.0, 4.0, 10, 0.05).value
    b = D.theorem1_required_norm(2.0, 4.0, 10, 0.05).value
    assert b == pytest.approx(a / 2)


@settings(max_examples=100, deadline=None)
@given(w=st.floats(0.1, 10), alpha=st.floats(0.5, 50), eps=st.floats(1e-4, 1.0), k=st.integers(2, 20))
def test_required_norm_monotonicity(w, alpha, eps, k):
    base = D.theorem1_required_norm(w, alpha, k, eps).value
    assert D.theorem1_required_norm(w, alpha, k, eps * 1.5).value <= base
    assert D.theorem1_required_norm(w * 1.5, alpha, k, eps).value <= base
    assert D.theorem1_required_norm(w, alpha * 1.5, k, eps).value >= base


def test_required_norm_rejects_bad_inputs():
    with pytest.raises(DomainError):
        D.theorem1_required_norm(0.0, 1.0, 3, 0.1)


def test_zero_output_layer_gives_uniform_confidence():
    model = build(MlpSpec((2, 8, 4)), seed=0)
    model.output_layer.weight.data[:] = 0.0
    model.output_layer.bias.data[:] = 0.0
    sweep = D.confidence_sweep(model, 5, [1.0, 10.0, 100.0], seed=0)
    assert np.all(sweep == 0.25)


def test_confidence_profile_rejects_descending_radii():
    with pytest.raises(DomainError):
        D.confidence_profile(build(MlpSpec((2, 3, 2))), np.array([1.0, 0.0]), [2.0, 1.0])


def test_random_directions_are_unit():
    dirs = D.random_directions(10, 3, seed=1)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_format_block():
    text = D.format_block("landscape", {"seed": 0}, ("eta", "loss"), [(0.5, 1.25), (1, True)])
    assert text == "# probe=landscape seed=0\neta,loss\n0.5,1.25\n1,1\n"
