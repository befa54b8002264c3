"""Cross-view alignment of per-view influence matrices.

Given the low-rank matrices ``W_hat[v]`` from phase 1, find robust matrices
``W_tilde[v]``, column-sparse inconsistency matrices ``Phi[v]`` and
orthonormal projections ``A[v]`` (N x k) solving

    min  sum_{v < v'} ||A[v]^T W_tilde[v] - A[v']^T W_tilde[v']||_F^2
         + rho3 sum_v ||Phi[v]||_{2,1}
    s.t. A[v]^T A[v] = I,   W_hat[v] = W_tilde[v] + Phi[v]

with the same augmented-Lagrangian recipe as phase 1 (multiplier
``lambda2``). Views are swept in ascending order inside every block
(Gauss-Seidel), which keeps each block update a descent step on the joint
augmented Lagrangian.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, InvalidDimensions, NonOrthonormal
from .proxops import (
    StiefelOptions,
    group_soft_threshold,
    orthonormality_error,
    smallest_eigenvectors,
    stiefel_minimize,
)

log = logging.getLogger(__name__)

A_UPDATES = ("eigen+stiefel", "eigen")
DIVERGENCE_LIMIT = 1e12
MONOTONE_RTOL = 1e-10


class DegenerateSingleView(UserWarning):
    pass


@dataclass
class Phase2Config:
    rho3: float | None = None
    k: int | None = None
    u0: float | None = None
    u_max: float | None = None
    u_growth: float = 1.5
    max_iter: int = 500
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    tol_obj: float = 1e-8
    a_update: str = "eigen+stiefel"
    stiefel: StiefelOptions = field(default_factory=StiefelOptions)

    def __post_init__(self):
        if self.rho3 is not None and self.rho3 < 0:
            raise ValueError("rho3 must be >= 0")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.u0 is not None and self.u0 <= 0:
            raise ValueError("u0 must be > 0")
        if self.u0 is not None and self.u_max is not None and self.u0 > self.u_max:
            raise ValueError("u0 must not exceed u_max")
        if self.u_growth < 1:
            raise ValueError("u_growth must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.tol_primal <= 0 or self.tol_dual <= 0 or self.tol_obj <= 0:
            raise ValueError("tolerances must be > 0")
        if self.a_update not in A_UPDATES:
            raise ValueError(f"a_update must be one of {A_UPDATES}")


def default_k(n: int) -> int:
    return min(n, max(2, math.ceil(n / 10)))


def default_rho3(W_hats) -> float:
    """Half the mean column norm of the phase-1 matrices."""
    n = W_hats[0].shape[0]
    return 0.5 * float(np.mean([np.linalg.norm(W) for W in W_hats])) / math.sqrt(n)


@dataclass
class Phase2State:
    W_hat: list
    W_tilde: list
    Phi: list
    A: list
    lambda2: list
    u: float
    rho3: float

    @property
    def V(self) -> int:
        return len(self.W_hat)

    def projected(self, v) -> np.ndarray:
        return self.A[v].T @ self.W_tilde[v]


@dataclass
class Phase2Result:
    views: list
    W_hat: dict
    W_tilde: dict
    Phi: dict
    A: dict
    lambda2: dict
    history: list
    converged: bool
    iterations: int
    params: dict
    degenerate: bool = False

    @property
    def phi_scores(self) -> dict:
        return {v: np.linalg.norm(P, axis=0) for v, P in self.Phi.items()}

    @property
    def monotone(self) -> bool:
        return all(h["al_monotone"] for h in self.history)


def alignment(state: Phase2State) -> float:
    """``sum_{v < v'} ||A_v^T W_v - A_v'^T W_v'||_F^2``."""
    proj = [state.projected(v) for v in range(state.V)]
    total = 0.0
    for v in range(state.V):
        for w in range(v + 1, state.V):
            D = proj[v] - proj[w]
            total += float(np.sum(D * D))
    return total


def view_alignment(A, W_tilde_v, others) -> float:
    """``f_v(A) = sum_{v' != v} ||A^T W_tilde_v - B_v'||_F^2`` with ``B_v' = A_v'^T W_tilde_v'``."""
    P = A.T @ W_tilde_v
    return float(sum(np.sum((P - B) ** 2) for B in others))


def view_alignment_grad(A, W_tilde_v, others) -> np.ndarray:
    P = A.T @ W_tilde_v
    return 2.0 * W_tilde_v @ sum((P - B).T for B in others)


def objective(state: Phase2State) -> float:
    l21 = sum(float(np.linalg.norm(P, axis=0).sum()) for P in state.Phi)
    return alignment(state) + state.rho3 * l21


def augmented_lagrangian(state: Phase2State) -> float:
    total = objective(state)
    for v in range(state.V):
        C = state.W_hat[v] - state.W_tilde[v] - state.Phi[v]
        total += state.u * float(np.sum(C * C)) + float(np.sum(state.lambda2[v] * C))
    return total


def _others(state, v):
    return [state.projected(w) for w in range(state.V) if w != v]


def update_w_tilde(state: Phase2State, v: int) -> np.ndarray:
    """Exact minimizer over ``W_tilde[v]``.

    Solves ``(2(V-1) A A^T + 2uI) W = 2 A sum_{v'} B_v' + 2u(W_hat - Phi) + lambda2``;
    with ``A^T A = I`` the inverse is ``(I - c/(c+d) A A^T) / d``.
    """
    A = state.A[v]
    u = state.u
    c = 2.0 * (state.V - 1)
    d = 2.0 * u
    coupling = sum(_others(state, v)) if state.V > 1 else np.zeros((A.shape[1], A.shape[0]))
    rhs = 2.0 * A @ coupling + d * (state.W_hat[v] - state.Phi[v]) + state.lambda2[v]
    return (rhs - (c / (c + d)) * (A @ (A.T @ rhs))) / d


def eigen_init(state: Phase2State, v: int, k: int) -> np.ndarray:
    Wt = state.W_tilde[v]
    return smallest_eigenvectors((state.V - 1) * (Wt @ Wt.T), k)


def procrustes(W_tilde_v, others) -> np.ndarray:
    """Exact minimizer of ``f_v`` over square orthogonal ``A``.

    With ``k = N`` the term ``||A^T W||`` does not depend on ``A``, leaving
    ``max tr(A^T W sum(B)^T)``, solved by the polar factor of ``W sum(B)^T``.
    """
    M = W_tilde_v @ sum(others).T
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def update_a(state: Phase2State, v: int, k: int, mode: str = "eigen+stiefel",
             opts: StiefelOptions | None = None) -> np.ndarray:
    """Projection update for one view.

    The eigenvector recipe drops the cross-view term that is linear in ``A``,
    so it only seeds a Stiefel-manifold descent on the full coupled ``f_v``.
    The descent starts from the eigenvector basis or from the current
    iterate, whichever scores lower, so ``f_v`` never increases. The
    eigen-only mode skips the descent but keeps the same guard.
    """
    Wt = state.W_tilde[v]
    others = _others(state, v)
    if k == Wt.shape[0]:
        return procrustes(Wt, others)
    A0 = eigen_init(state, v, k)
    f = lambda A: view_alignment(A, Wt, others)  # noqa: E731
    g = lambda A: view_alignment_grad(A, Wt, others)  # noqa: E731
    A_cur = state.A[v]
    start = A0 if A_cur is None or f(A0) <= f(A_cur) else A_cur
    if mode == "eigen":
        return start
    A = stiefel_minimize(f, g, start, opts).A
    if orthonormality_error(A) > 1e-8:
        raise NonOrthonormal(f"A for view {v} left the Stiefel manifold")
    return A


def update_phi(state: Phase2State, v: int) -> np.ndarray:
    arg = state.W_hat[v] - state.W_tilde[v] + state.lambda2[v] / (2.0 * state.u)
    return group_soft_threshold(arg, state.rho3 / (2.0 * state.u), axis=0)


def _as_matrices(phase1):
    if hasattr(phase1, "fits"):
        views = list(phase1.views)
        return views, [np.asarray(phase1.fits[v].W_hat, dtype=np.float64) for v in views]
    views = list(phase1)
    return views, [np.asarray(phase1[v], dtype=np.float64) for v in views]


def fit_multiview(phase1, cfg: Phase2Config | None = None) -> Phase2Result:
    """Run the alignment solver on a :class:`Phase1Result` or a ``{view: W_hat}`` mapping."""
    cfg = cfg or Phase2Config()
    views, W_hats = _as_matrices(phase1)
    if not W_hats:
        raise InvalidDimensions("no views supplied")
    n = W_hats[0].shape[0]
    if any(W.shape != (n, n) for W in W_hats):
        raise InvalidDimensions("all W_hat matrices must be N x N with a common N")
    k = cfg.k if cfg.k is not None else default_k(n)
    if k > n:
        raise InvalidDimensions(f"k={k} exceeds N={n}")
    V = len(views)
    rho3 = cfg.rho3 if cfg.rho3 is not None else default_rho3(W_hats)

    if V == 1:
        warnings.warn("phase 2 needs at least two views; returning W_tilde = W_hat", DegenerateSingleView)
        v = views[0]
        return Phase2Result(
            views=views, W_hat={v: W_hats[0]}, W_tilde={v: W_hats[0].copy()},
            Phi={v: np.zeros((n, n))}, A={v: np.eye(n)[:, :k]}, lambda2={v: np.zeros((n, n))},
            history=[], converged=True, iterations=0, degenerate=True,
            params=dict(rho3=rho3, k=k, a_update=cfg.a_update),
        )

    u0 = cfg.u0 if cfg.u0 is not None else 0.1 * (V - 1)
    u_max = max(cfg.u_max if cfg.u_max is not None else 10.0 * u0, u0)
    params = dict(rho3=rho3, k=k, u0=u0, u_max=u_max, u_growth=cfg.u_growth, max_iter=cfg.max_iter,
                  tol_primal=cfg.tol_primal, tol_dual=cfg.tol_dual, tol_obj=cfg.tol_obj,
                  a_update=cfg.a_update)
    st = Phase2State(
        W_hat=W_hats, W_tilde=[W.copy() for W in W_hats], Phi=[np.zeros((n, n)) for _ in W_hats],
        A=[None] * V, lambda2=[np.zeros((n, n)) for _ in W_hats], u=u0, rho3=rho3,
    )
    for v in range(V):
        st.A[v] = eigen_init(st, v, k)

    history = []
    prev_obj = objective(st)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        W_tilde_prev, Phi_prev = list(st.W_tilde), list(st.Phi)
        al = [augmented_lagrangian(st)]
        for v in range(V):
            st.W_tilde[v] = update_w_tilde(st, v)
        al.append(augmented_lagrangian(st))
        for v in range(V):
            st.A[v] = update_a(st, v, k, cfg.a_update, cfg.stiefel)
        ortho = max(orthonormality_error(A) for A in st.A)
        al.append(augmented_lagrangian(st))
        for v in range(V):
            st.Phi[v] = update_phi(st, v)
        al.append(augmented_lagrangian(st))

        obj = objective(st)
        if not math.isfinite(obj) or abs(obj) > DIVERGENCE_LIMIT:
            raise Diverged(f"phase-2 objective {obj!r} at iteration {it}")
        resids = [float(np.linalg.norm(st.W_hat[v] - st.W_tilde[v] - st.Phi[v])) for v in range(V)]
        dual = 2.0 * st.u * max(
            max(float(np.linalg.norm(st.W_tilde[v] - W_tilde_prev[v])), float(np.linalg.norm(st.Phi[v] - Phi_prev[v])))
            for v in range(V)
        )
        steps = np.diff(al)
        monotone = bool(np.all(steps <= MONOTONE_RTOL * max(1.0, abs(al[0]))))
        rel = abs(obj - prev_obj) / max(1.0, abs(prev_obj))
        history.append(dict(
            iteration=it, objective=obj, alignment=alignment(st), primal_residual=max(resids), dual_residual=dual,
            phi_nonzero_cols=int(sum(np.count_nonzero(np.any(P != 0, axis=0)) for P in st.Phi)),
            orthonormality=ortho, u=st.u, al_start=al[0], al_after_w_tilde=al[1],
            al_after_a=al[2], al_after_phi=al[3], al_monotone=monotone,
        ))

        for v in range(V):
            st.lambda2[v] = st.lambda2[v] + 2.0 * st.u * (st.W_hat[v] - st.W_tilde[v] - st.Phi[v])
        st.u = min(cfg.u_growth * st.u, u_max)
        prev_obj = obj
        if (
            all(r <= cfg.tol_primal * max(1.0, float(np.linalg.norm(st.W_hat[v]))) for v, r in enumerate(resids))
            and dual <= cfg.tol_dual * max(1.0, max(float(np.linalg.norm(L)) for L in st.lambda2))
            and rel <= cfg.tol_obj
        ):
            converged = True
            break

    if not converged:
        log.warning("phase 2 stopped at max_iter=%d without converging", cfg.max_iter)
    as_dict = lambda xs: {v: x for v, x in zip(views, xs)}  # noqa: E731
    return Phase2Result(
        views=views, W_hat=as_dict(st.W_hat), W_tilde=as_dict(st.W_tilde), Phi=as_dict(st.Phi),
        A=as_dict(st.A), lambda2=as_dict(st.lambda2), history=history, converged=converged,
        iterations=it, params=params,
    )
