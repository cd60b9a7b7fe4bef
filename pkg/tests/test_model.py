import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cncfl.data import Dataset, gen_synthetic
from cncfl.errors import InvalidInputError
from cncfl.model import (
    Hyperparams,
    ParamVector,
    forward_loss,
    gradient,
    init_model,
    param_size_bytes,
    sgd_local_train,
    weighted_average,
)
from cncfl.oracles import finite_difference_gradient, max_relative_error, scalar_cross_entropy


def random_case(rng, hidden=None):
    dim = int(rng.integers(1, 6))
    classes = int(rng.integers(2, 5))
    params = init_model(int(rng.integers(1 << 30)), dim, classes, hidden)
    params = params.replace(params.values + rng.normal(0, 0.5, size=len(params)))
    n = int(rng.integers(1, 8))
    return params, rng.normal(size=(n, dim)), rng.integers(0, classes, size=n)


def test_init_shapes():
    p = init_model(7, 4, 3)
    assert p.layout == (("W", 3, 4), ("b", 3, 1))
    assert len(p) == 15
    assert np.all(p.blocks()["b"] == 0)
    assert len(init_model(7, 784, 10, hidden=32)) == 784 * 32 + 32 + 32 * 10 + 10 == 25450


def test_init_deterministic_and_scaled():
    a, b = init_model(7, 4, 3), init_model(7, 4, 3)
    assert a.values.tobytes() == b.values.tobytes()
    big = init_model(1, 400, 50)
    assert abs(big.blocks()["W"].std() - 1 / math.sqrt(400)) < 0.003
    assert not np.array_equal(init_model(8, 4, 3).values, a.values)


def test_init_rejects_bad_shapes():
    with pytest.raises(InvalidInputError):
        init_model(0, 4, 3, hidden=0)
    with pytest.raises(InvalidInputError):
        init_model(0, 0, 3)
    with pytest.raises(InvalidInputError):
        init_model(0, 4, 1)


def test_param_vector_invariants():
    with pytest.raises(InvalidInputError):
        ParamVector(np.zeros(5), (("W", 2, 2),))
    with pytest.raises(InvalidInputError):
        ParamVector(np.array([0.0, np.nan, 0.0, 0.0]), (("W", 2, 2),))


@pytest.mark.parametrize("classes", [2, 3, 10])
def test_zero_params_loss_is_log_classes(rng, classes):
    p = init_model(0, 6, classes)
    p = p.replace(np.zeros(len(p)))
    x = rng.normal(size=(13, 6)) * 5
    y = rng.integers(0, classes, size=13)
    assert abs(forward_loss(p, x, y) - math.log(classes)) <= 1e-12


def test_loss_goes_to_zero_as_correct_logit_grows():
    p = init_model(0, 1, 3)
    x = np.ones((1, 1))
    losses = []
    for push in [0.0, 1.0, 5.0, 20.0, 80.0]:
        v = np.zeros(len(p))
        v[-3] = push  # bias of class 0
        losses.append(forward_loss(p.replace(v), x, [0]))
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-30


@pytest.mark.parametrize("hidden", [None, 4])
def test_loss_matches_scalar_reimplementation(rng, hidden):
    for _ in range(20):
        params, x, y = random_case(rng, hidden)
        got = forward_loss(params, x, y)
        want = scalar_cross_entropy(params, x, y)
        assert abs(got - want) <= 1e-10 * abs(want)


def test_loss_rejects_mismatched_input():
    p = init_model(0, 3, 2)
    with pytest.raises(InvalidInputError):
        forward_loss(p, np.zeros((2, 4)), [0, 1])
    with pytest.raises(InvalidInputError):
        forward_loss(p, np.zeros((2, 3)), [0, 2])
    with pytest.raises(InvalidInputError):
        gradient(p, np.zeros((2, 3)), [0])


@pytest.mark.parametrize("hidden", [None, 3])
def test_gradient_matches_finite_differences(rng, hidden):
    worst = 0.0
    for _ in range(50):
        params, x, y = random_case(rng, hidden)
        g = gradient(params, x, y)
        assert g.layout == params.layout
        worst = max(worst, max_relative_error(g.values, finite_difference_gradient(params, x, y)))
    assert worst < 1e-4


def test_gradient_is_mean_invariant_to_duplication(rng):
    params, x, y = random_case(rng)
    g1 = gradient(params, x, y).values
    g2 = gradient(params, np.vstack([x, x]), np.concatenate([y, y])).values
    np.testing.assert_allclose(g2, g1, rtol=1e-12, atol=1e-15)


def test_bias_gradient_hand_calculation():
    classes = 4
    p = init_model(0, 3, classes)
    p = p.replace(np.zeros(len(p)))
    x = np.ones((8, 3))
    balanced = np.array([0, 1, 2, 3, 0, 1, 2, 3])
    b_grad = gradient(p, x, balanced).blocks()["b"][:, 0]
    np.testing.assert_allclose(b_grad, 0.0, atol=1e-15)

    skewed = np.array([0, 0, 0, 0, 1, 1, 2, 3])  # frequencies 1/2, 1/4, 1/8, 1/8
    b_grad = gradient(p, x, skewed).blocks()["b"][:, 0]
    np.testing.assert_allclose(b_grad, [0.25 - 0.5, 0.0, 0.25 - 0.125, 0.25 - 0.125], atol=1e-15)
    assert b_grad[0] < 0 < b_grad[2]


def _two_blob_shard(seed=3, n=60):
    return gen_synthetic(seed, n, 2, 2, 4.0)


def test_sgd_zero_lr_is_identity():
    shard = _two_blob_shard()
    p = init_model(1, 2, 2)
    out = sgd_local_train(p, shard, Hyperparams(lr=0.0, batch_size=7, local_epochs=3), seed=5)
    assert out.values.tobytes() == p.values.tobytes()


def test_sgd_single_full_batch_step():
    shard = _two_blob_shard(n=25)
    p = init_model(1, 2, 2)
    hyper = Hyperparams(lr=0.05, batch_size=25, local_epochs=1)
    out = sgd_local_train(p, shard, hyper, seed=9)
    want = p.values - 0.05 * gradient(p, shard.features, shard.labels).values
    np.testing.assert_allclose(out.values, want, rtol=0, atol=1e-12)


def test_sgd_keeps_short_final_batch():
    # 7 samples with batch 3 -> batches of 3, 3, 1; with lr tiny the step count shows in the drift.
    shard = _two_blob_shard(n=7)
    p = init_model(1, 2, 2)
    out = sgd_local_train(p, shard, Hyperparams(lr=1e-3, batch_size=3), seed=0)
    order = np.random.default_rng(0).permutation(7)
    w = p
    for start in (0, 3, 6):
        idx = order[start : start + 3]
        w = w.replace(w.values - 1e-3 * gradient(w, shard.features[idx], shard.labels[idx]).values)
    np.testing.assert_array_equal(out.values, w.values)


def test_sgd_reduces_loss_on_separable_data():
    shard = _two_blob_shard(n=200)
    p = init_model(4, 2, 2)
    out = sgd_local_train(p, shard, Hyperparams(lr=0.01, batch_size=10, local_epochs=5), seed=1)
    assert forward_loss(out, shard.features, shard.labels) < forward_loss(p, shard.features, shard.labels)


def test_sgd_deterministic_and_rejects_empty():
    shard = _two_blob_shard()
    p = init_model(4, 2, 2)
    h = Hyperparams(lr=0.1, batch_size=4, local_epochs=2)
    a = sgd_local_train(p, shard, h, seed=11)
    b = sgd_local_train(p, shard, h, seed=11)
    assert a.values.tobytes() == b.values.tobytes()
    empty = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
    with pytest.raises(InvalidInputError):
        sgd_local_train(p, empty, h, seed=0)


def test_hyperparams_validation():
    with pytest.raises(InvalidInputError):
        Hyperparams(lr=-0.1)
    with pytest.raises(InvalidInputError):
        Hyperparams(batch_size=0)
    with pytest.raises(InvalidInputError):
        Hyperparams(local_epochs=0)


def test_param_size_bytes():
    assert param_size_bytes(init_model(7, 4, 3)) == 60
    assert param_size_bytes(init_model(7, 4, 3), override_mb=0.606) == 635437
    assert param_size_bytes(init_model(7, 784, 10, hidden=32)) == 101800


def test_weighted_average_examples(rng):
    m = init_model(1, 3, 2)
    same = weighted_average([m, m, m], [0.3, 5.0, 2.0])
    np.testing.assert_allclose(same.values, m.values, rtol=0, atol=1e-12)

    a, b, c = (m.replace(rng.normal(size=len(m))) for _ in range(3))
    assert weighted_average([a, b], [1, 0]).values.tobytes() == a.values.tobytes()
    got = weighted_average([a, b, c], [1, 2, 3]).values
    want = np.array([(x + 2 * y + 3 * z) / 6 for x, y, z in zip(a.values, b.values, c.values)])
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_weighted_average_errors():
    a = init_model(1, 3, 2)
    b = init_model(1, 4, 2)
    with pytest.raises(InvalidInputError):
        weighted_average([a, b], [1, 1])
    with pytest.raises(InvalidInputError):
        weighted_average([a, a], [0, 0])
    with pytest.raises(InvalidInputError):
        weighted_average([a], [1, 2])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 10), min_size=2, max_size=5).filter(lambda w: sum(w) > 0),
    st.integers(0, 2**31),
)
def test_weighted_average_stays_inside_input_box(weights, seed):
    gen = np.random.default_rng(seed)
    base = init_model(0, 2, 3)
    models = [base.replace(gen.normal(size=len(base)) * 10) for _ in weights]
    out = weighted_average(models, weights).values
    stack = np.stack([m.values for m in models])
    slack = 1e-12 * np.abs(stack).max()
    assert np.all(out >= stack.min(axis=0) - slack)
    assert np.all(out <= stack.max(axis=0) + slack)
