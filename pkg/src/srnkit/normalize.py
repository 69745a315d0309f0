"""Spectral and stable-rank normalizers.

The stable rank ``|W|_F^2 / |W|_2^2`` is scale invariant, so it cannot be
controlled by dividing ``W`` by a scalar. SRN instead splits ``W`` into a head
``S1`` (top ``max(1, k)`` singular triples) and a tail ``S2 = W - S1`` and
rescales the two parts separately; the scalings below are the
Frobenius-optimal ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, ZeroMatrixError
from .linalg import (
    PowerIterState,
    SvdFactors,
    as_matrix,
    frobenius_norm,
    power_iteration_top,
    power_step,
    svd,
)


@dataclass(frozen=True)
class SrnConfig:
    """Target stable rank and partition index for SRN.

    Give either ``target_stable_rank`` (r >= 1) or ``ratio`` (c in (0, 1]); the
    ratio form resolves to ``r = c * min(m, n)`` for an ``m x n`` matrix.
    ``tol``, ``max_iter`` and ``seed`` drive the power iterations of
    :func:`srn_greedy`.
    """

    target_stable_rank: float | None = None
    partition_index: int = 0
    ratio: float | None = None
    tol: float = 1e-14
    max_iter: int = 20000
    seed: int = 0

    def __post_init__(self):
        if (self.target_stable_rank is None) == (self.ratio is None):
            raise ValueError("give exactly one of target_stable_rank or ratio")
        if self.target_stable_rank is not None and not self.target_stable_rank >= 1:
            raise ValueError(f"target stable rank must be >= 1, got {self.target_stable_rank}")
        if self.ratio is not None and not 0 < self.ratio <= 1:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")
        if self.partition_index < 0:
            raise ValueError("partition index must be >= 0")

    def resolve(self, shape) -> float:
        if self.target_stable_rank is not None:
            return float(self.target_stable_rank)
        return max(1.0, self.ratio * min(shape))


@dataclass
class SrnResult:
    matrix: np.ndarray
    preserved_count: int
    gamma1: float
    gamma2: float
    was_noop: bool


def stable_rank(W) -> float:
    A = as_matrix(W)
    sigma1 = svd(A).sigma[0]
    if sigma1 == 0:
        raise ZeroMatrixError("stable rank of a zero matrix is undefined")
    return float(np.sum(A * A) / sigma1**2)


def spectral_normalize_optimal(W, s: float) -> np.ndarray:
    """Frobenius-nearest matrix with spectral norm at most ``s``.

    Clips every singular value above ``s`` down to ``s`` and keeps the
    singular vectors.
    """
    if not s > 0:
        raise ValueError(f"spectral cap must be positive, got {s}")
    A = as_matrix(W)
    f = svd(A)
    over = f.sigma > s
    if not over.any():
        return A.copy()
    excess = f.sigma[over] - s
    return A - (f.u_vectors[:, over] * excess) @ f.v_vectors[:, over].T


def spectral_normalize_approx(W, state: PowerIterState) -> tuple[np.ndarray, PowerIterState]:
    """Refine ``state`` by one power step and divide ``W`` by ``u^T W v``."""
    A = as_matrix(W)
    new = power_step(A, state)
    return A / new.sigma_estimate, new


def _noop(A: np.ndarray, f: SvdFactors) -> SrnResult:
    return SrnResult(A.copy(), int(np.count_nonzero(f.sigma)), 1.0, 1.0, True)


def _closed_form(A: np.ndarray, f: SvdFactors, r: float, k: int) -> SrnResult:
    sigma = f.sigma
    if sigma[0] == 0:
        raise ZeroMatrixError("SRN of a zero matrix")
    if k > sigma.size:
        raise ValueError(f"partition index {k} exceeds min(m, n) = {sigma.size}")
    sigma1_sq = sigma[0] ** 2
    if np.sum(A * A) / sigma1_sq <= r:
        return _noop(A, f)

    head = max(1, k)
    S1 = (f.u_vectors[:, :head] * sigma[:head]) @ f.v_vectors[:, :head].T
    S2 = A - S1
    head_sq = float(np.sum(sigma[:head] ** 2))
    tail = math.sqrt(float(np.sum(sigma[head:] ** 2)))

    if k == 0:
        if r == 1:
            g1, g2 = 1.0, 0.0
        else:
            gamma = math.sqrt(r - 1) * sigma[0] / tail
            g2 = (gamma + r - 1) / r
            g1 = g2 / gamma
    else:
        if r < head_sq / sigma1_sq:
            raise InfeasibleError(
                f"stable rank {r} is below {head_sq / sigma1_sq:.6g}, the stable rank "
                f"of the {k} preserved singular values"
            )
        g1 = 1.0
        g2 = math.sqrt(r * sigma1_sq - head_sq) / tail
    return SrnResult(g1 * S1 + g2 * S2, k, float(g1), float(g2), False)


def srn_closed_form(W, cfg: SrnConfig) -> SrnResult:
    """Optimal stable-rank normalization from a full SVD.

    Returns ``W`` untouched (``was_noop``) when its stable rank is already at
    most the target. With ``k = 0`` both partitions are rescaled (the head
    grows, the tail shrinks); with ``k >= 1`` the head is kept and only the
    tail shrinks, which is infeasible if the head alone exceeds the target.
    """
    A = as_matrix(W)
    if not np.any(A):
        raise ZeroMatrixError("SRN of a zero matrix")
    return _closed_form(A, svd(A), cfg.resolve(A.shape), cfg.partition_index)


def srn_greedy(W, cfg: SrnConfig) -> SrnResult:
    """SRN for ``k >= 1`` using deflated power iteration instead of a full SVD.

    Singular triples are admitted one at a time while the head's stable rank
    stays within the target; ``preserved_count`` reports how many made it.
    """
    k = cfg.partition_index
    if k < 1:
        raise ValueError("greedy SRN needs partition index k >= 1")
    A = as_matrix(W)
    if not np.any(A):
        raise ZeroMatrixError("SRN of a zero matrix")
    r = cfg.resolve(A.shape)
    k = min(k, min(A.shape))

    beta = float(np.sum(A * A))
    S1 = np.zeros_like(A)
    R = A.copy()
    eta = 0.0
    sigma1_sq = None
    preserved = 0
    for i in range(k):
        if not np.any(R):
            break
        st = power_iteration_top(R, tol=cfg.tol, max_iter=cfg.max_iter, seed=cfg.seed + i)
        sig = st.sigma_estimate
        if sigma1_sq is None:
            sigma1_sq = sig**2
            if beta / sigma1_sq <= r:
                return SrnResult(A.copy(), min(A.shape), 1.0, 1.0, True)
        if r < (sig**2 + eta) / sigma1_sq:
            break
        piece = sig * np.outer(st.u, st.v)
        S1 += piece
        R -= piece
        eta += sig**2
        beta -= sig**2
        preserved += 1

    g2 = math.sqrt((r * sigma1_sq - eta) / beta)
    return SrnResult(S1 + g2 * (A - S1), preserved, 1.0, g2, False)


def srn_layer_step(W, r: float, state: PowerIterState) -> tuple[np.ndarray, PowerIterState]:
    """Per-step SN + SRN (k=1) of a network weight, reusing ``state``.

    One power step refreshes ``(u, v)``; the matrix is divided by its
    estimated spectral norm, and the part orthogonal to ``u v^T`` is shrunk
    to Frobenius norm ``sqrt(r - 1)`` if it is larger. The gradient update
    is left to the caller.
    """
    if not r >= 1:
        raise ValueError(f"target stable rank must be >= 1, got {r}")
    Wf, new = spectral_normalize_approx(W, state)
    top = np.outer(new.u, new.v)
    rest = Wf - top
    rest_norm = float(np.sqrt(np.sum(rest * rest)))
    cap = math.sqrt(r - 1)
    if rest_norm <= cap:
        return Wf, new
    return top + rest * (cap / rest_norm), new


def frobenius_distance_profile(W, r: float, k_max: int) -> list[float]:
    """``|SRN_k(W) - W|_F`` for ``k = 1..k_max``; non-decreasing in ``k``."""
    A = as_matrix(W)
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    f = svd(A)
    if f.sigma[0] == 0:
        raise ZeroMatrixError("SRN of a zero matrix")
    if not r < np.sum(A * A) / f.sigma[0] ** 2:
        raise ValueError("target stable rank must be below the input's stable rank")
    out = []
    for k in range(1, k_max + 1):
        res = _closed_form(A, f, r, k)
        out.append(frobenius_norm(res.matrix - A))
    return out
