"""Proximal and orthogonality-constrained subproblem operators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import AsymmetricInput, NonFiniteInput, NonOrthonormalStart


class SvdFactors(NamedTuple):
    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray


def _check_finite(M, name="input"):
    M = np.asarray(M, dtype=np.float64)
    if not np.all(np.isfinite(M)):
        raise NonFiniteInput(f"{name} contains non-finite entries")
    return M


def _fix_signs(U, Vt=None):
    """Flip columns of ``U`` so each one's largest-magnitude entry is positive."""
    if U.size == 0:
        return U, Vt
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    if Vt is not None:
        Vt = Vt * signs[:, None]
    return U, Vt


def svd_factors(M) -> SvdFactors:
    """Thin SVD with a deterministic sign convention."""
    M = _check_finite(M)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    U, Vt = _fix_signs(U, Vt)
    return SvdFactors(U, s, Vt)


def svt(M, tau: float) -> np.ndarray:
    """Singular value thresholding: prox of ``tau * ||.||_*``."""
    M = _check_finite(M)
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        return M.copy()
    U, s, Vt = svd_factors(M)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    if not keep.any():
        return np.zeros_like(M)
    return (U[:, keep] * s[keep]) @ Vt[keep]


def group_soft_threshold(M, tau: float, axis: int = 0) -> np.ndarray:
    """Prox of ``tau * ||.||_{2,1}`` with groups along ``axis`` (0 = columns).

    Each column ``c`` becomes ``max(0, 1 - tau/||c||) * c``.
    """
    M = _check_finite(M)
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if tau == 0:
        return M.copy()
    norms = np.linalg.norm(M, axis=axis, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > tau, 1.0 - tau / norms, 0.0)
    return M * scale


def nuclear_norm(M) -> float:
    return float(np.linalg.svd(M, compute_uv=False).sum())


def l21_norm(M, axis: int = 0) -> float:
    return float(np.linalg.norm(M, axis=axis).sum())


def smallest_eigenvectors(C, k: int) -> np.ndarray:
    """Orthonormal eigenvectors of the ``k`` algebraically smallest eigenvalues."""
    C = _check_finite(C)
    n = C.shape[0]
    if C.ndim != 2 or C.shape[1] != n:
        raise AsymmetricInput(f"expected a square matrix, got {C.shape}")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    scale = max(1.0, float(np.abs(C).max(initial=0.0)))
    if np.abs(C - C.T).max(initial=0.0) > 1e-10 * scale:
        raise AsymmetricInput("matrix is not symmetric")
    _, vecs = np.linalg.eigh(0.5 * (C + C.T))
    A, _ = _fix_signs(vecs[:, :k])
    return np.ascontiguousarray(A)


def orthonormality_error(A) -> float:
    return float(np.linalg.norm(A.T @ A - np.eye(A.shape[1])))


@dataclass
class StiefelOptions:
    max_iter: int = 500
    gtol: float = 1e-7
    ftol: float = 1e-14
    tau0: float = 1e-3
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40


@dataclass
class StiefelResult:
    A: np.ndarray
    value: float
    iterations: int
    grad_norm: float
    no_descent: bool = False


def _cayley_step(A, G, tau):
    # low-rank Cayley transform with skew matrix W = G A^T - A G^T
    k = A.shape[1]
    U = np.hstack([G, A])
    V = np.hstack([A, -G])
    VtU = V.T @ U
    VtA = V.T @ A
    M = np.eye(2 * k) + 0.5 * tau * VtU
    return A - tau * U @ np.linalg.solve(M, VtA)


def stiefel_minimize(
    objective: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    A0,
    opts: StiefelOptions | None = None,
) -> StiefelResult:
    """Minimize a smooth function over ``{A : A^T A = I}``.

    Feasible curvilinear search: Cayley-transform retraction, alternating
    Barzilai-Borwein step sizes and a monotone Armijo backtracking rule, so
    the returned value never exceeds ``objective(A0)``.
    """
    opts = opts or StiefelOptions()
    A = np.array(A0, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] > A.shape[0]:
        raise NonOrthonormalStart(f"start must be N x k with k <= N, got {A.shape}")
    if orthonormality_error(A) > 1e-8:
        raise NonOrthonormalStart("A0^T A0 deviates from identity by more than 1e-8")

    f0 = f = float(objective(A))
    G = grad(A)
    R = G - A @ (G.T @ A)  # -dA/dtau of the Cayley curve at tau = 0
    gnorm = float(np.linalg.norm(R))
    tau = opts.tau0
    it = 0
    for it in range(1, opts.max_iter + 1):
        if gnorm <= opts.gtol:
            it -= 1
            break
        # directional derivative of f along the Cayley curve at 0: -0.5 ||W||_F^2
        WA = G @ (A.T @ A) - A @ (G.T @ A)
        deriv = -float(np.sum(G * WA))
        if deriv >= 0:
            break
        accepted = False
        for _ in range(opts.max_backtracks):
            A_new = _cayley_step(A, G, tau)
            f_new = float(objective(A_new))
            if f_new <= f + opts.armijo * tau * deriv:
                accepted = True
                break
            tau *= opts.backtrack
        if not accepted:
            break
        G_new = grad(A_new)
        R_new = G_new - A_new @ (G_new.T @ A_new)
        S = A_new - A
        Yd = R_new - R
        rel_change = abs(f - f_new) / max(1.0, abs(f))
        A, G, R, f = A_new, G_new, R_new, f_new
        gnorm = float(np.linalg.norm(R))
        sy = abs(float(np.sum(S * Yd)))
        if sy > 0:
            tau = float(np.sum(S * S)) / sy if it % 2 else sy / float(np.sum(Yd * Yd))
        else:
            tau = opts.tau0
        tau = min(max(tau, 1e-20), 1e20)
        if rel_change <= opts.ftol:
            break

    if orthonormality_error(A) > 1e-12:
        # polar re-projection; Cayley steps are exact up to roundoff
        u, _, vt = np.linalg.svd(A, full_matrices=False)
        A = u @ vt
        f = float(objective(A))
    if f > f0:
        if f > f0 + 1e-12 * max(1.0, abs(f0)):
            warnings.warn("stiefel_minimize found no descent; returning start", RuntimeWarning)
        return StiefelResult(np.array(A0, dtype=np.float64), f0, it, gnorm, no_descent=True)
    return StiefelResult(A, f, it, gnorm)
