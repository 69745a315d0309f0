"""Margin-based complexity measures and sensitivity diagnostics of an MLP.

Per-sample complexity values are only defined for samples with positive
margin; other samples get ``nan`` and are counted in the report rather than
dropped.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple

import numpy as np

from .errors import DegenerateData, EmptyAfterSkip, ZeroMarginError, ZeroOutputError
from .linalg import as_matrix, svd
from .mlp import Dataset, MlpModel, backward_from, forward

SCHEMA_VERSION = "srnkit/1"


def _inputs(data) -> np.ndarray:
    return data.inputs if isinstance(data, Dataset) else as_matrix(data)


def margin(logits, label: int) -> float:
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not 0 <= label < logits.size:
        raise ValueError(f"label {label} out of range for {logits.size} logits")
    others = np.delete(logits, label)
    return float(logits[label] - others.max())


def _runner_up(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    masked = logits.copy()
    masked[np.arange(len(labels)), labels] = -np.inf
    return np.argmax(masked, axis=1)


def margins(model: MlpModel, ds: Dataset) -> np.ndarray:
    """Per-sample margins of ``model`` on ``ds``."""
    logits, _ = forward(model, ds.inputs)
    n = len(ds)
    return logits[np.arange(n), ds.labels] - logits[np.arange(n), _runner_up(logits, ds.labels)]


def norm_21(A) -> float:
    """Entry-wise (2, 1) norm: sum over columns of the column l2 norms."""
    A = as_matrix(A)
    return float(np.sum(np.sqrt(np.sum(A * A, axis=0))))


def _spectral_norms(model: MlpModel) -> np.ndarray:
    return np.array([svd(W).sigma[0] for W in model.weights])


def _per_margin(numerator: float, gammas):
    g = np.asarray(gammas, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(g > 0, numerator / np.where(g > 0, g, 1.0) ** 2, np.nan)
    return float(out) if out.ndim == 0 else out


def spec_fro(model: MlpModel, gammas):
    """``prod |W_i|_2^2 * sum srank(W_i) / gamma^2``, one value per margin."""
    sn = _spectral_norms(model)
    sranks = [np.sum(W * W) / s**2 for W, s in zip(model.weights, sn)]
    return _per_margin(float(np.prod(sn**2) * np.sum(sranks)), gammas)


def spectral_l1_ratios(model: MlpModel) -> np.ndarray:
    """``|W_i^T|_{2,1} / |W_i|_2`` per layer (always >= 1)."""
    sn = _spectral_norms(model)
    return np.array([norm_21(W.T) / s for W, s in zip(model.weights, sn)])


def spec_l1(model: MlpModel, gammas):
    """``prod |W_i|_2^2 * (sum (|W_i^T|_{2,1}/|W_i|_2)^{2/3})^3 / gamma^2``."""
    sn = _spectral_norms(model)
    ratio_sum = np.sum(spectral_l1_ratios(model) ** (2.0 / 3.0))
    return _per_margin(float(np.prod(sn**2) * ratio_sum**3), gammas)


def r_g(model: MlpModel) -> float:
    """Spectral complexity ``prod |W_i|_2 * (sum ratio_i^{2/3})^{3/2}``.

    ``spec_l1 == r_g**2 / gamma**2``.
    """
    sn = _spectral_norms(model)
    return float(np.prod(sn) * np.sum(spectral_l1_ratios(model) ** (2.0 / 3.0)) ** 1.5)


def jac_norms(model: MlpModel, ds: Dataset) -> np.ndarray:
    """Per-sample ``sum_i |h_i| |d gamma / d h_i| / gamma``.

    ``h_i`` is the input of layer ``i`` (``h_0`` is the sample itself). The
    runner-up class is held fixed when differentiating the margin. Samples
    with non-positive margin get ``nan``.
    """
    logits, hidden = forward(model, ds.inputs)
    n = len(ds)
    rows = np.arange(n)
    other = _runner_up(logits, ds.labels)
    gam = logits[rows, ds.labels] - logits[rows, other]
    dout = np.zeros_like(logits)
    dout[rows, ds.labels] = 1.0
    dout[rows, other] -= 1.0
    _, grads = backward_from(model, hidden, logits, dout)
    total = np.zeros(n)
    for h, J in zip(hidden, grads):
        total += np.linalg.norm(h, axis=1) * np.linalg.norm(J, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(gam > 0, total / np.where(gam > 0, gam, 1.0), np.nan)


def jac_norm(model: MlpModel, sample, label: int) -> float:
    """Jac-Norm of a single sample; raises :class:`ZeroMarginError` at zero margin."""
    x = np.asarray(sample, dtype=np.float64).reshape(1, -1)
    logits, hidden = forward(model, x)
    y = int(label)
    other = int(_runner_up(logits, np.array([y]))[0])
    gam = float(logits[0, y] - logits[0, other])
    if gam == 0:
        raise ZeroMarginError("Jac-Norm is undefined at zero margin")
    dout = np.zeros_like(logits)
    dout[0, y], dout[0, other] = 1.0, -1.0
    _, grads = backward_from(model, hidden, logits, dout)
    return float(sum(np.linalg.norm(h) * np.linalg.norm(J) for h, J in zip(hidden, grads)) / gam)


class NoiseSensitivity(NamedTuple):
    value: float
    stderr: float
    index: int  # sample attaining the maximum


def noise_sensitivity(model: MlpModel, data, n_draws: int = 1000, seed: int = 0,
                      chunk: int = 20000) -> NoiseSensitivity:
    """Monte Carlo ``max_x E |f(x + eta |x|) - f(x)|^2 / |f(x)|^2``, ``eta ~ N(0, I)``."""
    X = _inputs(data)
    rng = np.random.default_rng(seed)
    fx, _ = forward(model, X)
    denom = np.sum(fx * fx, axis=1)
    if np.any(denom == 0):
        raise ZeroOutputError("model output is zero on some sample")
    norms = np.linalg.norm(X, axis=1)
    best = NoiseSensitivity(-np.inf, 0.0, -1)
    per = max(1, chunk // n_draws)
    for start in range(0, X.shape[0], per):
        stop = min(start + per, X.shape[0])
        eta = rng.standard_normal((stop - start, n_draws, X.shape[1]))
        noisy = X[start:stop, None, :] + eta * norms[start:stop, None, None]
        out, _ = forward(model, noisy.reshape(-1, X.shape[1]))
        diff = out.reshape(stop - start, n_draws, -1) - fx[start:stop, None, :]
        ratios = np.sum(diff * diff, axis=2) / denom[start:stop, None]
        means = ratios.mean(axis=1)
        j = int(np.argmax(means))
        if means[j] > best.value:
            se = float(ratios[j].std(ddof=1) / math.sqrt(n_draws)) if n_draws > 1 else float("nan")
            best = NoiseSensitivity(float(means[j]), se, start + j)
    return best


def layer_cushion(model: MlpModel, data, layer_index: int, return_skipped: bool = False):
    """``min_x |W a| / (|W|_F |a|)`` over layer inputs ``a``; zero inputs are skipped."""
    _, hidden = forward(model, _inputs(data))
    a = hidden[layer_index]
    W = model.weights[layer_index]
    norms = np.linalg.norm(a, axis=1)
    live = norms > 0
    if not live.any():
        raise EmptyAfterSkip(f"every input of layer {layer_index} is zero")
    ratios = np.linalg.norm(a[live] @ W.T, axis=1) / (np.sqrt(np.sum(W * W)) * norms[live])
    value = float(ratios.min())
    skipped = int((~live).sum())
    return (value, skipped) if return_skipped else value


def lipschitz_upper(model: MlpModel) -> float:
    """Product of layer spectral norms (valid for 1-Lipschitz activations)."""
    return float(np.prod(_spectral_norms(model)))


class EmpiricalLipschitz(NamedTuple):
    ratios: np.ndarray
    percentile_95: float


def elhist(model: MlpModel, data_a, data_b, n_pairs: int = 2000, seed: int = 0,
           max_redraws: int = 100) -> EmpiricalLipschitz:
    """Ratios ``|f(x_i) - f(x_j)| / |x_i - x_j|`` for random pairs (x_i from a, x_j from b)."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    A, B = _inputs(data_a), _inputs(data_b)
    rng = np.random.default_rng(seed)
    ia = rng.integers(0, A.shape[0], size=n_pairs)
    ib = rng.integers(0, B.shape[0], size=n_pairs)
    for _ in range(max_redraws):
        same = np.all(A[ia] == B[ib], axis=1)
        if not same.any():
            break
        ia[same] = rng.integers(0, A.shape[0], size=int(same.sum()))
        ib[same] = rng.integers(0, B.shape[0], size=int(same.sum()))
    else:
        raise DegenerateData("could not draw distinct input pairs")
    fa, _ = forward(model, A[ia])
    fb, _ = forward(model, B[ib])
    ratios = np.linalg.norm(fa - fb, axis=1) / np.linalg.norm(A[ia] - B[ib], axis=1)
    return EmpiricalLipschitz(ratios, nearest_rank(ratios, 95))


def nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile: the ``ceil(q/100 * N)``-th smallest value."""
    v = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if v.size == 0:
        return float("nan")
    return float(v[max(1, math.ceil(q / 100.0 * v.size)) - 1])


def log_percentile_90(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v) & (v > 0)]
    return nearest_rank(np.log(v), 90) if v.size else float("nan")


def _fmt(x) -> str | None:
    x = float(x)
    return format(x, ".12g") if math.isfinite(x) else None


@dataclass
class MeasureReport:
    per_sample_margins: np.ndarray
    spec_fro: np.ndarray
    spec_l1: np.ndarray
    jac_norm: np.ndarray
    noise_sensitivity: float
    noise_sensitivity_stderr: float
    layer_cushions: list
    lipschitz_upper: float
    elhist: np.ndarray
    elhist_percentile_95: float
    excluded_count: int = 0
    percentile_90_log: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "n_samples": int(len(self.per_sample_margins)),
            "excluded_count": int(self.excluded_count),
            "per_sample_margins": [_fmt(x) for x in self.per_sample_margins],
            "spec_fro": [_fmt(x) for x in self.spec_fro],
            "spec_l1": [_fmt(x) for x in self.spec_l1],
            "jac_norm": [_fmt(x) for x in self.jac_norm],
            "percentile_90_log": {k: _fmt(v) for k, v in sorted(self.percentile_90_log.items())},
            "noise_sensitivity": _fmt(self.noise_sensitivity),
            "noise_sensitivity_stderr": _fmt(self.noise_sensitivity_stderr),
            "layer_cushions": [_fmt(x) for x in self.layer_cushions],
            "lipschitz_upper": _fmt(self.lipschitz_upper),
            "elhist": [_fmt(x) for x in self.elhist],
            "elhist_percentile_95": _fmt(self.elhist_percentile_95),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MeasureReport":
        validate_report(d)

        def arr(xs):
            return np.array([np.nan if x is None else float(x) for x in xs])

        def num(x):
            return float("nan") if x is None else float(x)

        return cls(
            per_sample_margins=arr(d["per_sample_margins"]),
            spec_fro=arr(d["spec_fro"]),
            spec_l1=arr(d["spec_l1"]),
            jac_norm=arr(d["jac_norm"]),
            noise_sensitivity=num(d["noise_sensitivity"]),
            noise_sensitivity_stderr=num(d["noise_sensitivity_stderr"]),
            layer_cushions=list(arr(d["layer_cushions"])),
            lipschitz_upper=num(d["lipschitz_upper"]),
            elhist=arr(d["elhist"]),
            elhist_percentile_95=num(d["elhist_percentile_95"]),
            excluded_count=int(d["excluded_count"]),
            percentile_90_log={k: num(v) for k, v in d["percentile_90_log"].items()},
        )


def report_schema() -> dict:
    return json.loads(resources.files("srnkit").joinpath("report_schema.json").read_text())


def validate_report(d: dict) -> None:
    import jsonschema

    jsonschema.validate(d, report_schema())


def measure_report(model: MlpModel, ds: Dataset, seed: int = 0, n_draws: int = 1000,
                   n_pairs: int = 2000, data_b: Dataset | None = None) -> MeasureReport:
    """Compute every measure of ``model`` on ``ds``.

    eLhist pairs draw ``x_i`` from ``ds`` and ``x_j`` from ``data_b``
    (``ds`` itself when omitted).
    """
    gam = margins(model, ds)
    sf = np.atleast_1d(spec_fro(model, gam))
    sl = np.atleast_1d(spec_l1(model, gam))
    jn = jac_norms(model, ds)
    ns = noise_sensitivity(model, ds, n_draws=n_draws, seed=seed)
    cushions = [layer_cushion(model, ds, i) for i in range(len(model.weights))]
    eh = elhist(model, ds, ds if data_b is None else data_b, n_pairs=n_pairs, seed=seed)
    return MeasureReport(
        per_sample_margins=gam,
        spec_fro=sf,
        spec_l1=sl,
        jac_norm=jn,
        noise_sensitivity=ns.value,
        noise_sensitivity_stderr=ns.stderr,
        layer_cushions=cushions,
        lipschitz_upper=lipschitz_upper(model),
        elhist=eh.ratios,
        elhist_percentile_95=eh.percentile_95,
        excluded_count=int(np.sum(~(gam > 0))),
        percentile_90_log={
            "spec_fro": log_percentile_90(sf),
            "spec_l1": log_percentile_90(sl),
            "jac_norm": log_percentile_90(jn),
        },
    )
