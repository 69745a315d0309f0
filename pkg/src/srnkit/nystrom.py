"""Rank projections: exact truncated SVD and the ensembled Nystrom approximation.

The Nystrom path only decomposes an ``l x l`` principal submatrix, so its SVD
cost does not grow with the matrix dimension. It is meant for symmetric
positive semi-definite (SPSD) input and keeps the output SPSD.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    ConvergenceFailure,
    NotSymmetricError,
    SamplingDegenerate,
    SmoothingExhausted,
)
from .linalg import as_matrix, svd

PINV_CUTOFF = 1e-10
SYMMETRY_TOL = 1e-8
MAX_REDRAWS = 20


@dataclass(frozen=True)
class NystromConfig:
    target_rank: int
    sample_count: int | None = None  # defaults to 2 * target_rank
    ensemble_runs: int = 1
    seed: int = 0
    smoothing_delta: float = 0.01
    smoothing_max_rounds: int = 100

    def __post_init__(self):
        if self.target_rank < 1:
            raise ValueError("target rank must be >= 1")
        if self.sample_count is not None and self.sample_count < self.target_rank:
            raise ValueError("sample count must be >= target rank")
        if self.ensemble_runs < 1:
            raise ValueError("ensemble_runs must be >= 1")

    def samples_for(self, dim: int) -> int:
        l = 2 * self.target_rank if self.sample_count is None else self.sample_count
        if self.target_rank > dim:
            raise ValueError(f"target rank {self.target_rank} exceeds dimension {dim}")
        return min(l, dim)


def max_workers() -> int:
    """Thread cap from ``SRNKIT_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SRNKIT_THREADS", "1")))
    except ValueError:
        return 1


def hard_threshold_rank(W, r: int) -> np.ndarray:
    """Best rank-``r`` approximation in Frobenius norm (truncated SVD)."""
    A = as_matrix(W)
    if not 1 <= r <= min(A.shape):
        raise ValueError(f"rank {r} outside [1, {min(A.shape)}]")
    f = svd(A)
    return (f.u_vectors[:, :r] * f.sigma[:r]) @ f.v_vectors[:, :r].T


def symmetrize(W) -> np.ndarray:
    A = as_matrix(W)
    if A.shape[0] != A.shape[1]:
        raise ValueError("symmetrize needs a square matrix")
    return (A + A.T) / 2


def _svd_converges(X) -> bool:
    try:
        svd(X)
    except ConvergenceFailure:
        return False
    return True


def smooth_spd(W, delta: float = 0.01, max_rounds: int = 100,
               probe: Callable[[np.ndarray], bool] = _svd_converges) -> np.ndarray:
    """Add ``delta * I`` repeatedly until ``probe`` accepts the matrix.

    The unshifted matrix is tried first. Raises :class:`SmoothingExhausted`
    when ``max_rounds`` shifts are not enough.
    """
    A = as_matrix(W)
    if A.shape[0] != A.shape[1]:
        raise ValueError("smoothing needs a square matrix")
    eye = np.eye(A.shape[0])
    for m in range(max_rounds + 1):
        X = A + (m * delta) * eye if m else A.copy()
        if probe(X):
            return X
    raise SmoothingExhausted(f"probe still failing after {max_rounds} shifts of {delta}")


def _check_symmetric(A: np.ndarray) -> None:
    if A.shape[0] != A.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > SYMMETRY_TOL * scale:
        raise NotSymmetricError("matrix is not symmetric")


def _nystrom_factor(A: np.ndarray, r: int, l: int, seed: int) -> np.ndarray:
    """One Nystrom run; returns ``G`` with ``C Z_r^+ C^T = G G^T``."""
    m = A.shape[0]
    rng = np.random.default_rng(seed)
    for _ in range(MAX_REDRAWS):
        idx = np.sort(rng.choice(m, size=l, replace=False))
        Z = A[np.ix_(idx, idx)]
        if np.any(Z):
            break
    else:
        raise SamplingDegenerate(f"{MAX_REDRAWS} draws of {l} indices gave a zero submatrix")
    f = svd(Z)
    sig = f.sigma[:r]
    keep = sig > PINV_CUTOFF * f.sigma[0]
    # SPSD submatrix: left and right vectors agree on the kept part, so
    # Z_r^+ = U diag(1/s) U^T and the run factors as G G^T
    Ur = f.u_vectors[:, :r][:, keep]
    return A[:, idx] @ (Ur / np.sqrt(sig[keep]))


def nystrom_lowrank(W, cfg: NystromConfig) -> np.ndarray:
    """Ensembled Nystrom rank-``r`` approximation of an SPSD matrix.

    Each of the ``t`` runs samples ``l`` distinct indices uniformly (run ``i``
    is seeded with ``seed + i``) and forms ``C Z_r^+ C^T``; the runs are
    averaged. Runs execute on up to ``SRNKIT_THREADS`` threads without
    changing the result.
    """
    A = as_matrix(W)
    _check_symmetric(A)
    m = A.shape[0]
    l = cfg.samples_for(m)
    if not np.any(A):
        return np.zeros_like(A)

    def run(i):
        G = _nystrom_factor(A, cfg.target_rank, l, cfg.seed + i)
        return G @ G.T

    seeds = range(cfg.ensemble_runs)
    workers = min(max_workers(), cfg.ensemble_runs)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outs = list(pool.map(run, seeds))
    else:
        outs = [run(i) for i in seeds]
    total = outs[0]
    for X in outs[1:]:
        total = total + X
    return symmetrize(total / cfg.ensemble_runs)
