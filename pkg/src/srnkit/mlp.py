"""Minimal MLP with manual backprop, SGD and per-step weight normalizers."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .linalg import PowerIterState, as_matrix, power_iteration_top, power_step
from .normalize import spectral_normalize_approx, srn_layer_step

ACTIVATIONS = ("relu", "identity")
NORMALIZERS = ("none", "sn", "srn")


def _warm_state(W: np.ndarray, seed: int) -> PowerIterState:
    # the hooks refine (u, v) by one step per update; starting them converged
    # keeps the spectral estimate tight from the first update on
    if not np.any(W):
        return PowerIterState.random(*W.shape, seed=seed)
    return power_iteration_top(W, seed=seed)


@dataclass
class MlpModel:
    """Affine layers ``h -> act(h @ W.T + b)`` with ``W`` stored as ``(out, in)``.

    ``states`` holds one power-iteration state per layer for the SN/SRN hooks.
    Before each hook the state gets up to ``power_refine_steps`` extra power
    steps, stopping once the sigma estimate moves by less than
    ``power_refine_tol`` (relative). Set ``power_refine_steps = 0`` for the
    bare single-step update.
    """

    weights: list
    biases: list
    activations: list
    normalizer: str = "none"
    srank_ratio: float | None = None
    states: list = field(default_factory=list)
    power_refine_steps: int = 50
    power_refine_tol: float = 1e-6

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations) >= 1):
            raise ValueError("weights, biases and activations must be equal-length and non-empty")
        self.weights = [as_matrix(W, copy=True) for W in self.weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in self.biases]
        for i, (W, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if b.shape != (W.shape[0],):
                raise DimensionMismatch(f"layer {i}: bias length {b.size} != {W.shape[0]} outputs")
            if i and W.shape[1] != self.weights[i - 1].shape[0]:
                raise DimensionMismatch(f"layer {i} input {W.shape[1]} does not chain "
                                        f"with layer {i - 1} output {self.weights[i - 1].shape[0]}")
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        if self.normalizer not in NORMALIZERS:
            raise ValueError(f"unknown normalizer {self.normalizer!r}")
        if self.normalizer == "srn" and not (self.srank_ratio and 0 < self.srank_ratio <= 1):
            raise ValueError("srn normalizer needs srank_ratio in (0, 1]")
        if not self.states:
            self.states = [_warm_state(W, i) for i, W in enumerate(self.weights)]

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def target_stable_rank(self, i: int) -> float:
        return max(1.0, self.srank_ratio * min(self.weights[i].shape))


def init_mlp(sizes, seed: int = 0, hidden_activation: str = "relu",
             output_activation: str = "identity", normalizer: str = "none",
             srank_ratio: float | None = None) -> MlpModel:
    """He-initialised MLP; ``sizes = [d_in, h_1, ..., n_classes]``."""
    if len(sizes) < 2:
        raise ValueError("need at least input and output sizes")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    acts = [hidden_activation] * (len(sizes) - 2) + [output_activation]
    model = MlpModel(weights, biases, acts, normalizer, srank_ratio)
    apply_normalizer(model)
    return model


def forward(model: MlpModel, inputs) -> tuple[np.ndarray, list]:
    """Return ``(logits, hidden)`` where ``hidden[i]`` is the input of layer ``i``.

    ``hidden[0]`` is the batch itself; later entries are post-activation states.
    """
    h = as_matrix(inputs)
    if h.shape[1] != model.weights[0].shape[1]:
        raise DimensionMismatch(f"input dim {h.shape[1]} != first layer input {model.weights[0].shape[1]}")
    hidden = []
    for W, b, act in zip(model.weights, model.biases, model.activations):
        hidden.append(h)
        h = h @ W.T + b
        if act == "relu":
            h = np.maximum(h, 0.0)
    return h, hidden


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to ``logits``."""
    labels = np.asarray(labels)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(logsum - shifted[np.arange(n), labels]))
    p = np.exp(shifted - logsum[:, None])
    p[np.arange(n), labels] -= 1.0
    return loss, p / n


def backward_from(model: MlpModel, hidden: list, out: np.ndarray, dout: np.ndarray):
    """Backprop ``dout`` (gradient at the network output) through every layer.

    Returns ``(layer_grads, input_grads)``: ``layer_grads[i] = (dW_i, db_i)``
    and ``input_grads[i]`` is the gradient with respect to ``hidden[i]``.
    """
    L = len(model.weights)
    layer_grads = [None] * L
    input_grads = [None] * L
    delta = dout
    for i in reversed(range(L)):
        post = out if i == L - 1 else hidden[i + 1]
        if model.activations[i] == "relu":
            delta = delta * (post > 0)
        layer_grads[i] = (delta.T @ hidden[i], delta.sum(axis=0))
        delta = delta @ model.weights[i]
        input_grads[i] = delta
    return layer_grads, input_grads


def backward(model: MlpModel, inputs, labels):
    """Gradients of the mean softmax cross-entropy; returns ``(grads, loss)``."""
    labels = np.asarray(labels)
    logits, hidden = forward(model, inputs)
    if labels.shape != (logits.shape[0],):
        raise DimensionMismatch("one label per input row required")
    loss, dlogits = softmax_cross_entropy(logits, labels)
    grads, _ = backward_from(model, hidden, logits, dlogits)
    return grads, loss


def _refine(W, state: PowerIterState, steps: int, tol: float) -> PowerIterState:
    prev = state.sigma_estimate
    for _ in range(steps):
        state = power_step(W, state)
        if abs(state.sigma_estimate - prev) <= tol * state.sigma_estimate:
            break
        prev = state.sigma_estimate
    return state


def apply_normalizer(model: MlpModel) -> None:
    """Run the configured SN/SRN hook on every weight matrix, in place."""
    if model.normalizer == "none":
        return
    for i, W in enumerate(model.weights):
        model.states[i] = _refine(W, model.states[i], model.power_refine_steps,
                                  model.power_refine_tol)
        if model.normalizer == "sn":
            model.weights[i], model.states[i] = spectral_normalize_approx(W, model.states[i])
        else:
            model.weights[i], model.states[i] = srn_layer_step(
                W, model.target_stable_rank(i), model.states[i])


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    noise_rate: float = 0.0

    def __post_init__(self):
        self.inputs = as_matrix(self.inputs)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise DimensionMismatch("one label per input row required")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes, self.noise_rate)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    epochs: int = 10
    batch_size: int = 128
    seed: int = 0
    stop_accuracy: float | None = None  # stop once train accuracy reaches this
    test_fraction: float = 0.2

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must lie in [0, 1)")


def split_dataset(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset | None]:
    """Deterministic shuffle-and-cut split."""
    n_test = int(round(len(ds) * test_fraction))
    if n_test == 0:
        return ds, None
    perm = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def evaluate(model: MlpModel, ds: Dataset) -> tuple[float, float]:
    """Mean cross-entropy and accuracy of ``model`` on ``ds``."""
    logits, _ = forward(model, ds.inputs)
    loss, _ = softmax_cross_entropy(logits, ds.labels)
    return loss, float(np.mean(np.argmax(logits, axis=1) == ds.labels))


def train(model: MlpModel, dataset: Dataset, cfg: TrainConfig) -> tuple[MlpModel, list[dict]]:
    """SGD with momentum; the model's normalizer runs after every update.

    The dataset is split into train/test by ``cfg.test_fraction``. The history
    has one record per epoch, starting with the untrained model at epoch 0.
    The input model is not modified.
    """
    model = model.copy()
    train_set, test_set = split_dataset(dataset, cfg.test_fraction, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in zip(model.weights, model.biases)]

    def record(epoch):
        rec = {"epoch": epoch}
        rec["train_loss"], rec["train_acc"] = evaluate(model, train_set)
        if test_set is not None:
            rec["test_loss"], rec["test_acc"] = evaluate(model, test_set)
        return rec

    history = [record(0)]
    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            grads, _ = backward(model, train_set.inputs[idx], train_set.labels[idx])
            for i, (gW, gb) in enumerate(grads):
                vW, vb = velocity[i]
                vW *= cfg.momentum
                vW += gW + cfg.weight_decay * model.weights[i]
                vb *= cfg.momentum
                vb += gb
                model.weights[i] = model.weights[i] - cfg.lr * vW
                model.biases[i] = model.biases[i] - cfg.lr * vb
            apply_normalizer(model)
        history.append(record(epoch))
        if cfg.stop_accuracy is not None and history[-1]["train_acc"] >= cfg.stop_accuracy:
            break
    return model, history


def make_blobs(n: int, k_classes: int, centers, sigma: float, seed: int = 0) -> Dataset:
    """Isotropic Gaussian clusters; each label drawn uniformly from ``k_classes``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    centers = as_matrix(centers)
    if centers.shape[0] != k_classes:
        raise DimensionMismatch("need one center per class")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, k_classes, size=n)
    inputs = centers[labels] + sigma * rng.standard_normal((n, centers.shape[1]))
    return Dataset(inputs, labels, k_classes)


def random_centers(k_classes: int, dim: int, scale: float = 1.0, seed: int = 0) -> np.ndarray:
    return scale * np.random.default_rng(seed).standard_normal((k_classes, dim))


def make_label_noise(ds: Dataset, eta: float, seed: int = 0) -> Dataset:
    """Replace each label, with probability ``eta``, by a uniformly random one.

    ``eta = 1`` gives the fully random labels of a shattering run.
    """
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    flip = rng.random(len(ds)) < eta
    labels = ds.labels.copy()
    labels[flip] = rng.integers(0, ds.n_classes, size=int(flip.sum()))
    return Dataset(ds.inputs.copy(), labels, ds.n_classes, eta)
