import json
import math

import numpy as np
import pytest

from oracles import lapack_srank
from srnkit import (
    Dataset, DegenerateData, EmptyAfterSkip, MeasureReport, MlpModel, ZeroMarginError,
    ZeroOutputError, elhist, forward, init_mlp, jac_norm, jac_norms, layer_cushion,
    lipschitz_upper, log_percentile_90, margin, margins, measure_report, noise_sensitivity, r_g,
    spec_fro, spec_l1, validate_report,
)
from srnkit.measures import nearest_rank, norm_21, spectral_l1_ratios


def linear(*Ws):
    Ws = [np.atleast_2d(np.asarray(W, dtype=float)) for W in Ws]
    return MlpModel(Ws, [np.zeros(W.shape[0]) for W in Ws], ["identity"] * len(Ws))


def test_margin_examples():
    assert margin([2, 0.5, -1], 0) == 1.5
    assert margin([2, 0.5, -1], 1) == -1.5
    assert margin([2, 2, -1], 0) == 0
    with pytest.raises(ValueError):
        margin([1, 2], 2)


def test_batch_margins_match_scalar(rng):
    model = init_mlp([4, 8, 5], seed=2)
    X = rng.normal(size=(20, 4))
    y = rng.integers(0, 5, size=20)
    logits, _ = forward(model, X)
    np.testing.assert_allclose(margins(model, Dataset(X, y, 5)),
                               [margin(l, c) for l, c in zip(logits, y)])


def test_spec_fro_examples(rng):
    assert spec_fro(linear(np.eye(2)), 1.0) == pytest.approx(2)
    assert spec_fro(linear([[2.0]], [[3.0]]), 6.0) == pytest.approx(2)
    W = rng.normal(size=(3, 3))
    gam = 0.7
    base = spec_fro(linear(W), gam)
    for alpha in (0.5, 3.0):
        # numerator picks up alpha^2 per layer at fixed margin ...
        assert spec_fro(linear(alpha * W), gam) == pytest.approx(base * alpha**2, rel=1e-10)
        # ... and the margin of a linear model scales with alpha, so the two cancel
        assert spec_fro(linear(alpha * W), alpha * gam) == pytest.approx(base, rel=1e-10)
    want = np.linalg.norm(W, 2) ** 2 * lapack_srank(W) / gam**2
    assert base == pytest.approx(want, rel=1e-10)


def test_spec_values_nan_for_bad_margins():
    out = spec_fro(linear(np.eye(2)), np.array([1.0, 0.0, -2.0]))
    assert out[0] == pytest.approx(2) and np.isnan(out[1:]).all()
    out = spec_l1(linear(np.eye(2)), np.array([0.0, 2.0]))
    assert np.isnan(out[0]) and out[1] == pytest.approx(1)


def test_spec_l1_examples(rng):
    assert spec_l1(linear(np.eye(2)), 1.0) == pytest.approx(4)
    model = init_mlp([5, 7, 3], seed=1)
    assert np.all(spectral_l1_ratios(model) >= 1 - 1e-12)
    assert spec_l1(model, 0.8) == pytest.approx(r_g(model) ** 2 / 0.8**2, rel=1e-12)


def test_norm_21_loop_oracle(rng):
    A = rng.normal(size=(4, 6))
    want = 0.0
    for j in range(A.shape[1]):
        want += math.sqrt(sum(A[i, j] ** 2 for i in range(A.shape[0])))
    assert norm_21(A) == pytest.approx(want, rel=1e-10)


def test_jac_norm_linear_closed_form(rng):
    W = rng.normal(size=(2, 4))
    x = rng.normal(size=4)
    logits = W @ x
    y = int(np.argmax(logits))
    gam = logits[y] - logits[1 - y]
    want = np.linalg.norm(x) * np.linalg.norm(W[y] - W[1 - y]) / gam
    assert jac_norm(linear(W), x, y) == pytest.approx(want, rel=1e-8)


def margin_from(model, i, h, y):
    """Margin as a function of the input ``h`` of layer ``i``."""
    sub = MlpModel(model.weights[i:], model.biases[i:], model.activations[i:])
    logits, _ = forward(sub, h.reshape(1, -1))
    return margin(logits[0], y)


def test_jac_norm_finite_difference():
    rng = np.random.default_rng(4)
    model = init_mlp([4, 6, 5, 3], seed=4)
    for b in model.biases:
        b[:] = rng.normal(size=b.shape) * 0.1
    x = rng.normal(size=4)
    logits, hidden = forward(model, x.reshape(1, -1))
    y = int(np.argmax(logits))
    total = 0.0
    for i, h in enumerate(hidden):
        h = h[0]
        g = np.zeros_like(h)
        for j in range(h.size):
            e = np.zeros_like(h)
            e[j] = 1e-6
            g[j] = (margin_from(model, i, h + e, y) - margin_from(model, i, h - e, y)) / 2e-6
        total += np.linalg.norm(h) * np.linalg.norm(g)
    got = jac_norm(model, x, y)
    assert got == pytest.approx(total / margin(logits[0], y), rel=1e-4)
    X = np.vstack([x, rng.normal(size=4)])
    ds = Dataset(X, [y, 0], 3)
    assert jac_norms(model, ds)[0] == pytest.approx(got, rel=1e-12)


def test_jac_norm_dead_layer(rng):
    model = MlpModel([-np.eye(3), np.ones((2, 3))], [np.zeros(3), np.array([1.0, 0.0])],
                     ["relu", "identity"])
    x = np.abs(rng.normal(size=3))
    # the hidden state is zero, so only the input term remains and it is zero too
    assert jac_norm(model, x, 0) == 0.0


def test_jac_norm_zero_margin():
    with pytest.raises(ZeroMarginError):
        jac_norm(linear(np.eye(2)), [1.0, 1.0], 0)
    out = jac_norms(linear(np.eye(2)), Dataset(np.array([[1.0, 1.0], [2.0, 1.0]]), [0, 0], 2))
    assert np.isnan(out[0]) and np.isfinite(out[1])


def test_noise_sensitivity_identity():
    d = 16
    X = np.random.default_rng(0).normal(size=(5, d))
    ns = noise_sensitivity(linear(np.eye(d)), X, n_draws=2000, seed=1)
    assert abs(ns.value - d) <= 0.05 * d
    assert 0 < ns.stderr < 0.5


@pytest.mark.parametrize("seed", range(5))
def test_noise_sensitivity_linear_lower_bound(seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(6, 8))
    ns = noise_sensitivity(linear(W), rng.normal(size=(10, 8)), n_draws=2000, seed=seed)
    assert ns.value >= lapack_srank(W) - 3 * ns.stderr


def test_noise_sensitivity_scale_invariant(rng):
    model = init_mlp([4, 6, 3], seed=0)
    X = rng.normal(size=(8, 4))
    a = noise_sensitivity(model, X, n_draws=200, seed=2)
    scaled = model.copy()
    scaled.weights[-1] *= 3.0
    scaled.biases[-1] *= 3.0
    b = noise_sensitivity(scaled, X, n_draws=200, seed=2)
    assert b.value == pytest.approx(a.value, rel=1e-10)
    assert noise_sensitivity(model, X, n_draws=200, seed=2) == a


def test_noise_sensitivity_zero_output():
    with pytest.raises(ZeroOutputError):
        noise_sensitivity(linear(np.eye(2)), np.array([[0.0, 0.0], [1.0, 0.0]]), n_draws=5)


def test_layer_cushion_examples(rng):
    d = 5
    assert layer_cushion(linear(np.eye(d)), rng.normal(size=(20, d)), 0) == pytest.approx(1 / math.sqrt(d), abs=1e-10)
    a, b = rng.normal(size=4), rng.normal(size=3)
    X = np.outer(rng.normal(size=6), b)
    assert layer_cushion(linear(np.outer(a, b)), X, 0) == pytest.approx(1.0, rel=1e-12)


def test_layer_cushion_bounds_and_skips():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        model = init_mlp([6, 5, 4], seed=seed)
        X = rng.normal(size=(30, 6))
        for i, W in enumerate(model.weights):
            mu = layer_cushion(model, X, i)
            assert 0 < mu <= 1 + 1e-12
            _, hidden = forward(model, X)
            a = hidden[i]
            live = np.linalg.norm(a, axis=1) > 0
            brute = min(np.linalg.norm(W @ a[k]) / (np.linalg.norm(W) * np.linalg.norm(a[k]))
                        for k in np.flatnonzero(live))
            assert mu == pytest.approx(brute, rel=1e-12)
    model = linear(np.eye(2))
    value, skipped = layer_cushion(model, np.array([[0.0, 0.0], [1.0, 0.0]]), 0, return_skipped=True)
    assert skipped == 1 and value == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(EmptyAfterSkip):
        layer_cushion(model, np.zeros((3, 2)), 0)


def test_layer_cushion_rank_lower_bound(rng):
    # for square full-rank W the smallest ratio is sigma_min / |W|_F
    W = rng.normal(size=(4, 4))
    X = rng.normal(size=(4000, 4))
    mu = layer_cushion(linear(W), X, 0)
    s = np.linalg.svd(W, compute_uv=False)
    assert s[-1] / np.linalg.norm(W) - 1e-12 <= mu <= 1


def test_lipschitz_upper(rng):
    assert lipschitz_upper(linear(np.diag([2.0, 1.0]), np.diag([3.0, 0.5]))) == pytest.approx(6)
    W = rng.normal(size=(3, 5))
    assert lipschitz_upper(linear(W)) == pytest.approx(np.linalg.norm(W, 2), rel=1e-8)


def test_elhist_linear_scaling(rng):
    X = rng.normal(size=(30, 3))
    out = elhist(linear(2 * np.eye(3)), X, X, n_pairs=100, seed=0)
    np.testing.assert_allclose(out.ratios, 2.0, rtol=1e-12)
    assert out.percentile_95 == pytest.approx(2.0)


def test_elhist_below_lipschitz_bound(rng):
    model = init_mlp([5, 16, 8, 3], seed=1)
    X, Y = rng.normal(size=(50, 5)), rng.normal(size=(50, 5))
    out = elhist(model, X, Y, n_pairs=500, seed=3)
    assert out.ratios.size == 500
    assert out.ratios.max() <= lipschitz_upper(model) + 1e-6


def jacobian_norm(model, z):
    J = np.eye(z.size)
    h = z
    for W, b, act in zip(model.weights, model.biases, model.activations):
        pre = W @ h + b
        D = (pre > 0).astype(float) if act == "relu" else np.ones_like(pre)
        J = (D[:, None] * W) @ J
        h = pre * D
    return np.linalg.norm(J, 2)


def test_elhist_bounded_by_segment_jacobian():
    # f is piecewise linear, so f(b) - f(a) integrates the Jacobian along the
    # segment and each ratio is at most the largest Jacobian norm seen on it
    rng = np.random.default_rng(8)
    model = init_mlp([3, 6, 2], seed=8)
    X, Y = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
    ratios = elhist(model, X, Y, n_pairs=64, seed=1).ratios
    for a in X:
        for b in Y:
            fa, _ = forward(model, a.reshape(1, -1))
            fb, _ = forward(model, b.reshape(1, -1))
            ratio = np.linalg.norm(fa - fb) / np.linalg.norm(a - b)
            jmax = max(jacobian_norm(model, a + t * (b - a)) for t in np.linspace(0, 1, 1001))
            assert ratio <= jmax * (1 + 1e-3)
    assert ratios.max() <= lipschitz_upper(model) + 1e-6


def test_elhist_degenerate():
    X = np.ones((4, 2))
    with pytest.raises(DegenerateData):
        elhist(linear(np.eye(2)), X, X, n_pairs=3)
    with pytest.raises(ValueError):
        elhist(linear(np.eye(2)), X, X, n_pairs=0)


def test_percentiles():
    assert nearest_rank([5, 1, 4, 2, 3], 90) == 5
    assert nearest_rank(np.arange(1, 11), 90) == 9
    assert nearest_rank(np.arange(1, 11), 95) == 10
    assert log_percentile_90(np.exp(np.arange(1, 11))) == pytest.approx(9)
    assert log_percentile_90([np.nan, -1.0, np.e]) == pytest.approx(1)
    assert math.isnan(log_percentile_90([np.nan]))


def small_report(seed=0):
    rng = np.random.default_rng(seed)
    model = init_mlp([4, 8, 3], seed=seed)
    ds = Dataset(rng.normal(size=(25, 4)), rng.integers(0, 3, size=25), 3)
    return model, ds


def test_report_schema_roundtrip_and_determinism():
    model, ds = small_report()
    rep = measure_report(model, ds, seed=1, n_draws=50, n_pairs=40)
    d = json.loads(rep.to_json())
    validate_report(d)
    assert d["schema"] == "srnkit/1"
    assert d["excluded_count"] == int(np.sum(~(margins(model, ds) > 0)))
    again = MeasureReport.from_dict(d)
    assert again.to_json() == rep.to_json()
    assert measure_report(model, ds, seed=1, n_draws=50, n_pairs=40).to_json() == rep.to_json()
    assert len(d["layer_cushions"]) == 2
    for x in d["layer_cushions"]:
        assert 0 < float(x) <= 1


def test_report_rejects_bad_documents():
    model, ds = small_report()
    d = json.loads(measure_report(model, ds, n_draws=10, n_pairs=10).to_json())
    import jsonschema

    for mutate in (lambda x: x.pop("spec_fro"), lambda x: x.update(schema="srnkit/2"),
                   lambda x: x.update(lipschitz_upper=1.5)):
        bad = json.loads(json.dumps(d))
        mutate(bad)
        with pytest.raises(jsonschema.ValidationError):
            validate_report(bad)
