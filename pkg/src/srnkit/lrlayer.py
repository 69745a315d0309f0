"""Virtual low-rank (LR) regularizer attached to an activation layer.

An auxiliary square parameter ``W`` (rank at most ``r``) and bias ``b`` are
trained so that ``(a + b) W`` reproduces ``a + b`` for every activation row
``a``. The reconstruction loss ``L_c`` pulls activations onto the low-rank
affine subspace captured by ``W``; the norm loss ``L_n`` keeps activation
norms near one so ``L_c`` cannot be cheated by shrinking them.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch
from .linalg import as_matrix
from .nystrom import NystromConfig, hard_threshold_rank, nystrom_lowrank, smooth_spd, symmetrize


@dataclass(frozen=True)
class LrLayerState:
    w_aux: np.ndarray
    bias: np.ndarray
    target_rank: int
    lambda1: float = 1.0
    lambda2: float = 1.0

    @classmethod
    def init(cls, dim: int, target_rank: int, **kw) -> "LrLayerState":
        """Start from the best rank-``r`` part of the identity."""
        w = np.zeros((dim, dim))
        w[np.arange(target_rank), np.arange(target_rank)] = 1.0
        return cls(w, np.zeros(dim), target_rank, **kw)


def _check(A, state: LrLayerState) -> np.ndarray:
    A = as_matrix(A)
    m = state.w_aux.shape[0]
    if state.w_aux.shape != (m, m) or state.bias.shape != (m,):
        raise DimensionMismatch("LR state must hold a square W and a matching bias")
    if A.shape[1] != m:
        raise DimensionMismatch(f"activations have {A.shape[1]} columns, LR layer expects {m}")
    return A


def lr_losses(activations, state: LrLayerState) -> tuple[float, float]:
    """Reconstruction loss ``L_c`` and norm loss ``L_n``, both batch means."""
    A = _check(activations, state)
    X = A + state.bias
    R = X @ state.w_aux - X
    lc = float(np.mean(np.sum(R * R, axis=1)))
    ln = float(np.mean(np.abs(1.0 - np.linalg.norm(A, axis=1))))
    return lc, ln


def lr_grads(activations, state: LrLayerState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of ``lambda1 * L_c + lambda2 * L_n``.

    Returns ``(grad_activations, grad_w, grad_b)``. The kinks of ``|1 - |a||``
    at ``|a| = 1`` and ``a = 0`` get subgradient zero.
    """
    A = _check(activations, state)
    n = A.shape[0]
    W = state.w_aux
    X = A + state.bias
    R = X @ W - X
    # d/dx_i |x_i W - x_i|^2 = 2 r_i (W - I)^T
    dX = (2.0 * state.lambda1 / n) * (R @ W.T - R)
    grad_w = (2.0 * state.lambda1 / n) * (X.T @ R)
    grad_b = dX.sum(axis=0)

    norms = np.linalg.norm(A, axis=1)
    direction = np.zeros_like(A)
    live = (norms > 0) & (norms != 1.0)
    direction[live] = (np.sign(norms[live] - 1.0) / norms[live])[:, None] * A[live]
    grad_a = dX + (state.lambda2 / n) * direction
    return grad_a, grad_w, grad_b


def lr_project_step(state: LrLayerState, grad_w, lr: float, use_nystrom: bool = False,
                    ncfg: NystromConfig | None = None) -> LrLayerState:
    """Gradient step on ``W`` followed by symmetrize, smooth and rank projection.

    The exact path projects with a truncated SVD. The Nystrom path keeps ``W``
    SPSD; with ``ensemble_runs > 1`` the averaged output can exceed rank ``r``
    (it is bounded by ``r * ensemble_runs``).
    """
    grad_w = as_matrix(grad_w)
    if grad_w.shape != state.w_aux.shape:
        raise DimensionMismatch("gradient shape does not match W")
    W = state.w_aux - lr * grad_w
    if ncfg is None:
        ncfg = NystromConfig(target_rank=state.target_rank)
    W = smooth_spd(symmetrize(W), ncfg.smoothing_delta, ncfg.smoothing_max_rounds)
    if use_nystrom:
        W = nystrom_lowrank(W, replace(ncfg, target_rank=state.target_rank))
    else:
        W = hard_threshold_rank(W, state.target_rank)
    return replace(state, w_aux=W)
