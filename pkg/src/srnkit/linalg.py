"""Dense-matrix primitives: validation, norms, Jacobi SVD and power iteration.

Matrices are plain 2-D ``float64`` numpy arrays laid out row-major. Every
public function treats its inputs as read-only and returns fresh arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceFailure, NoConvergence, NonFiniteError, ZeroMatrixError

MAX_SWEEPS = 100
_EPS = np.finfo(np.float64).eps


def as_matrix(W, *, copy: bool = False) -> np.ndarray:
    """Validate ``W`` as a finite, non-empty 2-D real matrix."""
    A = np.array(W, dtype=np.float64, copy=copy) if copy else np.asarray(W, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"matrix dimensions must be positive, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteError("matrix contains NaN or Inf entries")
    return A


def frobenius_norm(W) -> float:
    A = as_matrix(W)
    return float(np.sqrt(np.sum(A * A)))


class SvdFactors(NamedTuple):
    """Economy SVD ``W = u_vectors @ diag(sigma) @ v_vectors.T``."""

    sigma: np.ndarray
    u_vectors: np.ndarray
    v_vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u_vectors * self.sigma) @ self.v_vectors.T


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # circle-method tournament: every column pair meets once per sweep and
    # the pairs inside one round are disjoint, so a round rotates in bulk
    players = list(range(n)) + ([-1] if n % 2 else [])
    N = len(players)
    rounds = []
    for _ in range(N - 1):
        ps, qs = [], []
        for i in range(N // 2):
            p, q = players[i], players[N - 1 - i]
            if p >= 0 and q >= 0:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _complete_columns(U: np.ndarray, missing: np.ndarray) -> None:
    """Fill the ``missing`` columns of ``U`` with an orthonormal completion, in place."""
    m = U.shape[0]
    keep = np.ones(U.shape[1], dtype=bool)
    keep[missing] = False
    basis = [U[:, j] for j in np.flatnonzero(keep)]
    candidates = iter(range(m))
    for j in missing:
        while True:
            e = np.zeros(m)
            e[next(candidates)] = 1.0
            for _ in range(2):
                for b in basis:
                    e -= (b @ e) * b
            nrm = np.linalg.norm(e)
            if nrm > 1e-8:
                e /= nrm
                break
        U[:, j] = e
        basis.append(e)


def svd(W, max_sweeps: int = MAX_SWEEPS) -> SvdFactors:
    """Economy SVD by one-sided (Hestenes) Jacobi on the narrower side.

    Column pairs are orthogonalised until every pair satisfies
    ``|a_p . a_q| <= sqrt(m) * eps * |a_p| |a_q|``. Columns whose norm falls
    below ``eps * |W|_F`` count as zero and get completed orthonormally. Raises
    :class:`ConvergenceFailure` when ``max_sweeps`` sweeps are not enough.
    """
    A = as_matrix(W)
    transposed = A.shape[0] < A.shape[1]
    M = (A.T if transposed else A).copy()
    m, n = M.shape
    V = np.eye(n)

    if not np.any(M):
        U = np.zeros((m, n))
        _complete_columns(U, np.arange(n))
        sigma = np.zeros(n)
        return SvdFactors(sigma, V, U) if transposed else SvdFactors(sigma, U, V)

    # work at unit scale so squared norms neither overflow nor underflow
    scale = float(np.max(np.abs(M)))
    M /= scale
    tol = np.sqrt(m) * _EPS
    # columns below this squared norm are numerically zero and left alone
    floor = (_EPS * np.sqrt(np.sum(M * M))) ** 2
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        rotated = False
        for ps, qs in rounds:
            P, Q = M[:, ps], M[:, qs]
            a = np.einsum("ij,ij->j", P, P)
            b = np.einsum("ij,ij->j", Q, Q)
            g = np.einsum("ij,ij->j", P, Q)
            need = (np.abs(g) > tol * np.sqrt(a) * np.sqrt(b)) & (np.minimum(a, b) > floor)
            if not need.any():
                continue
            rotated = True
            g_safe = np.where(need, g, 1.0)
            zeta = (b - a) / (2.0 * g_safe)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = np.where(need, 1.0 / np.sqrt(1.0 + t * t), 1.0)
            s = np.where(need, c * t, 0.0)
            M[:, ps], M[:, qs] = c * P - s * Q, s * P + c * Q
            VP, VQ = V[:, ps], V[:, qs]
            V[:, ps], V[:, qs] = c * VP - s * VQ, s * VP + c * VQ
        if not rotated:
            break
    else:
        raise ConvergenceFailure(f"Jacobi SVD did not converge in {max_sweeps} sweeps")

    sigma = np.sqrt(np.einsum("ij,ij->j", M, M))
    order = np.argsort(-sigma, kind="stable")
    sigma, M, V = sigma[order], M[:, order], V[:, order]
    sigma[sigma**2 <= floor] = 0.0
    U = np.zeros_like(M)
    nz = sigma > 0
    U[:, nz] = M[:, nz] / sigma[nz]
    if not nz.all():
        _complete_columns(U, np.flatnonzero(~nz))
    sigma = sigma * scale
    if transposed:
        return SvdFactors(sigma, V, U)
    return SvdFactors(sigma, U, V)


def spectral_norm(W) -> float:
    return float(svd(W).sigma[0])


@dataclass(frozen=True)
class PowerIterState:
    """Dominant singular pair estimate carried between power-iteration calls."""

    u: np.ndarray
    v: np.ndarray
    sigma_estimate: float
    iterations_used: int
    converged: bool = True

    @classmethod
    def random(cls, rows: int, cols: int, seed: int = 0) -> "PowerIterState":
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(rows)
        v = rng.standard_normal(cols)
        return cls(u / np.linalg.norm(u), v / np.linalg.norm(v), 0.0, 0, False)


def _unit(x: np.ndarray) -> tuple[np.ndarray, float]:
    nrm = float(np.linalg.norm(x))
    return (x / nrm if nrm > 0 else x), nrm


def power_step(W, state: PowerIterState) -> PowerIterState:
    """One refinement ``v <- W^T u / |.|``, ``u <- W v / |.|``; sigma = u^T W v."""
    A = as_matrix(W)
    if state.u.shape != (A.shape[0],) or state.v.shape != (A.shape[1],):
        raise ValueError("power-iteration state does not match matrix shape")
    v, nv = _unit(A.T @ state.u)
    if nv == 0:
        # u fell into the left null space; restart from the stored v
        v = state.v
    u, sigma = _unit(A @ v)
    if sigma == 0:
        raise ZeroMatrixError("matrix annihilates the current power-iteration vectors")
    return PowerIterState(u, v, sigma, state.iterations_used + 1, state.converged)


def power_iteration_top(W, tol: float = 1e-9, max_iter: int = 1000, seed: int = 0,
                        strict: bool = False) -> PowerIterState:
    """Estimate the top singular triple of ``W`` from a seeded random start.

    Stops once the relative change of the sigma estimate drops to ``tol``.
    Hitting ``max_iter`` first leaves ``converged=False`` on the returned state,
    or raises :class:`NoConvergence` when ``strict`` is set.
    """
    A = as_matrix(W)
    if not np.any(A):
        raise ZeroMatrixError("power iteration on a zero matrix")
    state = PowerIterState.random(*A.shape, seed=seed)
    prev = None
    for it in range(1, max_iter + 1):
        state = power_step(A, state)
        sigma = state.sigma_estimate
        if prev is not None and abs(sigma - prev) <= tol * sigma:
            return PowerIterState(state.u, state.v, sigma, it, True)
        prev = sigma
    state = PowerIterState(state.u, state.v, state.sigma_estimate, max_iter, False)
    if strict:
        raise NoConvergence(f"power iteration did not converge in {max_iter} steps", state)
    return state


def power_iteration_topk(W, k: int, tol: float = 1e-9, max_iter: int = 1000,
                         seed: int = 0) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """Top-``k`` singular triples by power iteration with explicit deflation.

    The i-th triple is seeded with ``seed + i``. If deflation leaves an exactly
    zero matrix before ``k`` triples are found, the shorter list is returned.
    """
    A = as_matrix(W)
    if not 0 <= k <= min(A.shape):
        raise ValueError(f"k={k} outside [0, {min(A.shape)}]")
    if k == 0:
        return []
    if not np.any(A):
        raise ZeroMatrixError("power iteration on a zero matrix")
    R = A.copy()
    triples = []
    for i in range(k):
        if not np.any(R):
            break
        st = power_iteration_top(R, tol=tol, max_iter=max_iter, seed=seed + i)
        triples.append((st.sigma_estimate, st.u, st.v))
        R -= st.sigma_estimate * np.outer(st.u, st.v)
    return triples


def reshape_conv_weight(tensor) -> np.ndarray:
    """Flatten a ``(c_in, c_out, h, w)`` kernel to ``(c_in, c_out*h*w)``.

    Row ``i`` is ``tensor[i]`` flattened in C order, so ``w`` varies fastest,
    then ``h``, then ``c_out``.
    """
    T = np.asarray(tensor, dtype=np.float64)
    if T.ndim != 4 or min(T.shape) < 1:
        raise ValueError(f"expected a 4-axis tensor with positive dims, got {T.shape}")
    return as_matrix(T.reshape(T.shape[0], -1), copy=True)
