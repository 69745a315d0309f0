import itertools

import numpy as np
import pytest

from oracles import central_diff, lapack_srank, rel_err
from srnkit import (
    Dataset, DimensionMismatch, MlpModel, TrainConfig, apply_normalizer, backward, evaluate,
    forward, init_mlp, make_blobs, make_label_noise, random_centers, softmax_cross_entropy, train,
)
from srnkit.mlp import split_dataset


def loss_of(model, X, y):
    logits, _ = forward(model, X)
    return softmax_cross_entropy(logits, y)[0]


def test_forward_identity_layer(rng):
    model = MlpModel([np.eye(3)], [np.zeros(3)], ["identity"])
    X = rng.normal(size=(4, 3))
    logits, hidden = forward(model, X)
    np.testing.assert_array_equal(logits, X)
    np.testing.assert_array_equal(hidden[0], X)


def test_forward_dead_relu(rng):
    model = MlpModel([-np.eye(2), np.eye(2)], [np.zeros(2), np.zeros(2)], ["relu", "identity"])
    _, hidden = forward(model, np.abs(rng.normal(size=(5, 2))))
    np.testing.assert_array_equal(hidden[1], 0)


def test_forward_deterministic_and_checked(rng):
    model = init_mlp([4, 6, 3], seed=1)
    X = rng.normal(size=(5, 4))
    np.testing.assert_array_equal(forward(model, X)[0], forward(model, X)[0])
    with pytest.raises(DimensionMismatch):
        forward(model, rng.normal(size=(5, 3)))
    with pytest.raises(DimensionMismatch):
        backward(model, X, np.zeros(4, dtype=int))


def test_model_validation():
    with pytest.raises(DimensionMismatch):
        MlpModel([np.ones((3, 2)), np.ones((2, 4))], [np.zeros(3), np.zeros(2)], ["relu", "identity"])
    with pytest.raises(ValueError):
        MlpModel([np.ones((2, 2))], [np.zeros(2)], ["tanh"])
    with pytest.raises(ValueError):
        MlpModel([np.ones((2, 2))], [np.zeros(2)], ["relu"], normalizer="srn")
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2)), [0, 3], 3)


ARCHS = [
    (sizes, act)
    for depth, width, act in itertools.product([1, 2, 3], [4, 16], ["relu", "identity"])
    for sizes in [[5] + [width] * (depth - 1) + [3]]
]


@pytest.mark.parametrize("sizes,act", ARCHS)
def test_gradient_check(sizes, act):
    rng = np.random.default_rng(len(sizes) * 100 + sizes[-2])
    model = init_mlp(sizes, seed=3, hidden_activation=act)
    for b in model.biases:
        b[:] = rng.normal(size=b.shape) * 0.1
    X = rng.normal(size=(10, sizes[0]))
    y = rng.integers(0, sizes[-1], size=10)
    grads, _ = backward(model, X, y)
    for i, (gW, gb) in enumerate(grads):
        def fW(W, i=i):
            m = model.copy()
            m.weights[i] = W
            return loss_of(m, X, y)

        def fb(b, i=i):
            m = model.copy()
            m.biases[i] = b
            return loss_of(m, X, y)

        assert rel_err(gW, central_diff(fW, model.weights[i])) <= 1e-4
        assert rel_err(gb, central_diff(fb, model.biases[i])) <= 1e-4


def test_gradient_vanishes_at_saturated_minimum():
    X = np.eye(3)
    model = MlpModel([60 * np.eye(3)], [np.zeros(3)], ["identity"])
    grads, loss = backward(model, X, [0, 1, 2])
    assert loss < 1e-8
    assert max(np.linalg.norm(g) for pair in grads for g in pair) < 1e-6


def test_uniform_logits_error_signal():
    K = 4
    _, d = softmax_cross_entropy(np.zeros((2, K)), [1, 3])
    want = np.full((2, K), 1 / K)
    want[0, 1] -= 1
    want[1, 3] -= 1
    np.testing.assert_allclose(d * 2, want)


def separable_blobs(n=400, seed=0):
    # each center sits 4 sigma from the separating line x = 0
    return make_blobs(n, 2, np.array([[-4.0, 0.0], [4.0, 0.0]]), 1.0, seed=seed)


def test_vanilla_separates_blobs():
    model = init_mlp([2, 16, 2], seed=0)
    _, hist = train(model, separable_blobs(), TrainConfig(epochs=200, lr=0.05, stop_accuracy=0.99))
    assert hist[-1]["train_acc"] >= 0.99


def test_training_history_and_input_untouched():
    model = init_mlp([2, 8, 2], seed=0)
    before = [W.copy() for W in model.weights]
    out, hist = train(model, separable_blobs(100), TrainConfig(epochs=3))
    assert [h["epoch"] for h in hist] == [0, 1, 2, 3]
    assert set(hist[0]) == {"epoch", "train_loss", "train_acc", "test_loss", "test_acc"}
    for a, b in zip(before, model.weights):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(out.weights[0], before[0])


def test_stop_accuracy():
    _, hist = train(init_mlp([2, 8, 2], seed=0), separable_blobs(),
                    TrainConfig(epochs=100, stop_accuracy=0.5))
    assert len(hist) < 101


def test_training_deterministic():
    ds = separable_blobs()
    for norm, ratio in (("none", None), ("sn", None), ("srn", 0.5)):
        cfg = TrainConfig(epochs=5, weight_decay=1e-4, seed=3)
        a, _ = train(init_mlp([2, 8, 2], seed=1, normalizer=norm, srank_ratio=ratio), ds, cfg)
        b, _ = train(init_mlp([2, 8, 2], seed=1, normalizer=norm, srank_ratio=ratio), ds, cfg)
        for Wa, Wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(Wa, Wb)


@pytest.mark.parametrize("norm", ["sn", "srn"])
def test_normalizer_hook_contract(norm):
    rng = np.random.default_rng(0)
    ds = make_blobs(300, 4, random_centers(4, 10, 2.0, seed=1), 1.0, seed=2)
    model = init_mlp([10, 32, 16, 4], seed=0, normalizer=norm, srank_ratio=0.3 if norm == "srn" else None)
    out, _ = train(model, ds, TrainConfig(epochs=20, seed=int(rng.integers(100))))
    for i, W in enumerate(out.weights):
        assert np.linalg.norm(W, 2) <= 1 + 1e-2
        if norm == "srn":
            assert lapack_srank(W) <= out.target_stable_rank(i) + 1e-6


def test_apply_normalizer_none_is_identity():
    model = init_mlp([3, 4, 2], seed=0)
    before = [W.copy() for W in model.weights]
    apply_normalizer(model)
    for a, b in zip(before, model.weights):
        np.testing.assert_array_equal(a, b)


def test_split_is_80_20_and_deterministic():
    ds = separable_blobs(100)
    a, b = split_dataset(ds, 0.2, seed=4)
    assert (len(a), len(b)) == (80, 20)
    a2, _ = split_dataset(ds, 0.2, seed=4)
    np.testing.assert_array_equal(a.inputs, a2.inputs)


def test_evaluate():
    model = MlpModel([np.array([[-1.0, 0], [1.0, 0]])], [np.zeros(2)], ["identity"])
    _, acc = evaluate(model, separable_blobs(200))
    assert acc > 0.9


def test_label_noise_zero_and_reproducible():
    ds = make_blobs(500, 10, random_centers(10, 3, seed=0), 1.0, seed=0)
    np.testing.assert_array_equal(make_label_noise(ds, 0.0, seed=1).labels, ds.labels)
    a, b = make_label_noise(ds, 1.0, seed=5), make_label_noise(ds, 1.0, seed=5)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.noise_rate == 1.0
    with pytest.raises(ValueError):
        make_label_noise(ds, 1.5)


def test_label_noise_statistics():
    n, K = 10000, 10
    ds = Dataset(np.zeros((n, 1)), np.zeros(n, dtype=int), K)
    noisy = make_label_noise(ds, 1.0, seed=3)
    counts = np.bincount(noisy.labels, minlength=K)
    sd = np.sqrt(n * (1 / K) * (1 - 1 / K))
    assert np.all(np.abs(counts - n / K) <= 4 * sd)
    eta = 0.3
    changed = np.mean(make_label_noise(ds, eta, seed=4).labels != 0)
    p = eta * (K - 1) / K
    assert abs(changed - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_blobs():
    centers = random_centers(3, 4, 5.0, seed=1)
    ds = make_blobs(3000, 3, centers, 1e-6, seed=2)
    nearest = np.argmin(((ds.inputs[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    np.testing.assert_array_equal(nearest, ds.labels)
    ds = make_blobs(3000, 3, centers, 0.5, seed=2)
    for c in range(3):
        pts = ds.inputs[ds.labels == c]
        assert np.all(np.abs(pts.mean(0) - centers[c]) <= 4 * 0.5 / np.sqrt(len(pts)))
    np.testing.assert_array_equal(make_blobs(50, 3, centers, 1.0, seed=9).inputs,
                                  make_blobs(50, 3, centers, 1.0, seed=9).inputs)
    with pytest.raises(ValueError):
        make_blobs(10, 3, centers, 0.0)
