"""Per-view robust regression: low-rank influence plus column-sparse spurious relations.

For one view with lag pair ``(X, Y)`` this solves

    min_{W, W_hat, Theta}  ||Y - X W||_F^2 + rho1 ||W_hat||_* + rho2 ||Theta||_{2,1}
    s.t.  W = W_hat + Theta

by an augmented-Lagrangian scheme (penalty ``u``, multiplier ``lambda1``,
inner product ``<A, B> = tr(A^T B)``). Each block update is an exact
minimizer, so the augmented Lagrangian never increases inside an outer
iteration; the monotonicity trace is logged with every iteration.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, InvalidDimensions, SingularSystem
from .panel import LagPair
from .proxops import group_soft_threshold, svd_factors

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e12
MONOTONE_RTOL = 1e-10


@dataclass
class Phase1Config:
    rho1: float | None = None
    rho2: float | None = None
    u0: float | None = None
    u_max: float | None = None
    u_growth: float = 1.0
    max_iter: int = 500
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    tol_obj: float = 1e-8
    w_solver: str = "exact"
    gd_steps: int = 50

    def __post_init__(self):
        for name in ("rho1", "rho2"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")
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
        if self.w_solver not in ("exact", "gradient"):
            raise ValueError("w_solver must be 'exact' or 'gradient'")


@dataclass
class Phase1State:
    X: np.ndarray
    Y: np.ndarray
    W: np.ndarray
    W_hat: np.ndarray
    Theta: np.ndarray
    lambda1: np.ndarray
    u: float
    rho1: float
    rho2: float
    XtX: np.ndarray = field(repr=False, default=None)
    XtY: np.ndarray = field(repr=False, default=None)
    _eig: tuple = field(repr=False, default=None)

    def __post_init__(self):
        if self.XtX is None:
            self.XtX = self.X.T @ self.X
        if self.XtY is None:
            self.XtY = self.X.T @ self.Y

    @property
    def gram_eig(self):
        if self._eig is None:
            lam, Q = np.linalg.eigh(self.XtX)
            self._eig = (np.maximum(lam, 0.0), Q)
        return self._eig


@dataclass
class Phase1Fit:
    """Phase-1 solution for a single view."""

    view: str
    W: np.ndarray
    W_hat: np.ndarray
    Theta: np.ndarray
    lambda1: np.ndarray
    history: list
    converged: bool
    iterations: int
    params: dict

    @property
    def theta_scores(self) -> np.ndarray:
        return np.linalg.norm(self.Theta, axis=0)

    @property
    def monotone(self) -> bool:
        return all(h["al_monotone"] for h in self.history)


@dataclass
class Phase1Result:
    views: list
    fits: dict

    def __getitem__(self, view) -> Phase1Fit:
        return self.fits[view]

    @property
    def converged(self) -> bool:
        return all(f.converged for f in self.fits.values())


def update_w(state: Phase1State, method: str = "exact", steps: int = 50) -> np.ndarray:
    """Minimize ``||Y-XW||^2 + u||W-W_hat-Theta||^2 + <lambda1, W-W_hat-Theta>`` over ``W``.

    The exact route solves ``(X^T X + uI) W = X^T Y + u(W_hat + Theta) - lambda1/2``.
    """
    u = state.u
    rhs = state.XtY + u * (state.W_hat + state.Theta) - 0.5 * state.lambda1
    if method == "exact":
        lam, Q = state.gram_eig
        denom = lam + u
        if not np.all(denom > 0):
            raise SingularSystem("X^T X + uI is singular; u must be > 0")
        return Q @ ((Q.T @ rhs) / denom[:, None])
    # gradient descent on the strongly convex quadratic, step 1/L
    L = 2.0 * (float(state.gram_eig[0].max(initial=0.0)) + u)
    W = state.W.copy()
    for _ in range(steps):
        g = 2.0 * (state.XtX @ W + u * W - rhs)
        W -= g / L
    return W


def update_theta(state: Phase1State) -> np.ndarray:
    arg = state.W - state.W_hat + state.lambda1 / (2.0 * state.u)
    return group_soft_threshold(arg, state.rho2 / (2.0 * state.u), axis=0)


def _shrink(arg, tau):
    """SVT returning the surviving singular values as well."""
    if tau == 0:
        return arg.copy(), np.linalg.svd(arg, compute_uv=False)
    U, s, Vt = svd_factors(arg)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    if not keep.any():
        return np.zeros_like(arg), s[:0]
    return (U[:, keep] * s[keep]) @ Vt[keep], s[keep]


def update_w_hat(state: Phase1State) -> np.ndarray:
    arg = state.W - state.Theta + state.lambda1 / (2.0 * state.u)
    return _shrink(arg, state.rho1 / (2.0 * state.u))[0]


def data_term(state: Phase1State, W=None) -> float:
    W = state.W if W is None else W
    R = state.Y - state.X @ W
    return float(np.sum(R * R))


def objective(state: Phase1State, nuclear=None) -> float:
    if nuclear is None:
        nuclear = float(np.linalg.svd(state.W_hat, compute_uv=False).sum())
    l21 = float(np.linalg.norm(state.Theta, axis=0).sum())
    return data_term(state) + state.rho1 * nuclear + state.rho2 * l21


def augmented_lagrangian(state: Phase1State, nuclear=None) -> float:
    C = state.W - state.W_hat - state.Theta
    return (
        objective(state, nuclear)
        + state.u * float(np.sum(C * C))
        + float(np.sum(state.lambda1 * C))
    )


def noise_level(X, Y, W0) -> float:
    """Per-entry noise scale of ``Y - X W``.

    Uses the ridge residual when it keeps at least ``N`` degrees of freedom
    per column; shorter panels fall back to the RMS of ``Y`` itself.
    """
    S, N = X.shape
    if S >= 2 * N:
        return float(np.linalg.norm(Y - X @ W0)) / math.sqrt(N * (S - N))
    return float(np.linalg.norm(Y)) / math.sqrt(S * N)


def default_rho(X, Y, W0) -> tuple[float, float]:
    """Penalty weights at the noise level of the data gradient ``2 X^T E``.

    For Gaussian ``E`` with per-entry scale ``sigma`` the spectral norm of
    ``2 X^T E`` is about ``2 sigma (sqrt(N) ||X||_2 + ||X||_F)`` and its
    largest column norm about ``2 sigma (||X||_F + sqrt(2 log N) ||X||_2)``;
    these are the dual norms of the nuclear and L2,1 penalties. Both weights
    scale with the data term, so rescaling ``X`` and ``Y`` together leaves the
    solution unchanged.
    """
    N = X.shape[1]
    sigma = noise_level(X, Y, W0)
    x2, xf = float(np.linalg.norm(X, 2)), float(np.linalg.norm(X))
    rho1 = 2.0 * sigma * (math.sqrt(N) * x2 + xf)
    rho2 = 2.0 * sigma * (xf + math.sqrt(2.0 * math.log(max(N, 2))) * x2)
    return rho1, rho2


def init_state(pair: LagPair, cfg: Phase1Config) -> Phase1State:
    X = np.asarray(pair.X, dtype=np.float64)
    Y = np.asarray(pair.Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2:
        raise InvalidDimensions(f"inconsistent lag pair shapes {X.shape}, {Y.shape}")
    S, N = X.shape
    if S < 2:
        raise InvalidDimensions("need at least 2 lag rows")
    XtX = X.T @ X
    XtY = X.T @ Y
    eps = max(1e-6 * float(np.trace(XtX)) / N, 1e-12)
    W0 = np.linalg.solve(XtX + eps * np.eye(N), XtY)
    base1, base2 = default_rho(X, Y, W0)
    rho1 = cfg.rho1 if cfg.rho1 is not None else base1
    rho2 = cfg.rho2 if cfg.rho2 is not None else base2
    lmax = float(np.linalg.eigvalsh(XtX)[-1]) if N else 0.0
    # a penalty at the curvature of the data term keeps both the W solve and
    # the W_hat/Theta split well conditioned
    u0 = cfg.u0 if cfg.u0 is not None else (lmax if lmax > 0 else 1.0)
    return Phase1State(
        X=X, Y=Y, W=W0, W_hat=W0.copy(), Theta=np.zeros_like(W0),
        lambda1=np.zeros_like(W0), u=u0, rho1=rho1, rho2=rho2, XtX=XtX, XtY=XtY,
    )


def _finite_or_raise(state, value, it, last):
    if not math.isfinite(value) or abs(value) > DIVERGENCE_LIMIT:
        raise Diverged(f"phase-1 objective {value!r} at iteration {it}", last_iterate=last)


def fit_view(pair: LagPair, cfg: Phase1Config | None = None) -> Phase1Fit:
    cfg = cfg or Phase1Config()
    st = init_state(pair, cfg)
    u_max = cfg.u_max if cfg.u_max is not None else 10.0 * st.u
    u_max = max(u_max, st.u)
    params = dict(rho1=st.rho1, rho2=st.rho2, u0=st.u, u_max=u_max, u_growth=cfg.u_growth,
                  max_iter=cfg.max_iter, tol_primal=cfg.tol_primal, tol_dual=cfg.tol_dual,
                  tol_obj=cfg.tol_obj, w_solver=cfg.w_solver)

    nuclear = float(np.linalg.svd(st.W_hat, compute_uv=False).sum())
    prev_obj = objective(st, nuclear)
    history = []
    converged = False
    last = None
    it = 0
    Z_prev, W_hat_prev = st.W_hat + st.Theta, st.W_hat.copy()
    for it in range(1, cfg.max_iter + 1):
        al = [augmented_lagrangian(st, nuclear)]
        st.W = update_w(st, cfg.w_solver, cfg.gd_steps)
        al.append(augmented_lagrangian(st, nuclear))
        st.Theta = update_theta(st)
        al.append(augmented_lagrangian(st, nuclear))
        st.W_hat, s_kept = _shrink(
            st.W - st.Theta + st.lambda1 / (2.0 * st.u), st.rho1 / (2.0 * st.u)
        )
        nuclear = float(s_kept.sum())
        al.append(augmented_lagrangian(st, nuclear))

        Z = st.W_hat + st.Theta
        C = st.W - Z
        resid = float(np.linalg.norm(C))
        # W saw the old W_hat + Theta and Theta saw the old W_hat
        dual = 2.0 * st.u * max(float(np.linalg.norm(Z - Z_prev)), float(np.linalg.norm(st.W_hat - W_hat_prev)))
        Z_prev, W_hat_prev = Z, st.W_hat
        obj = objective(st, nuclear)
        _finite_or_raise(st, obj, it, last)
        steps = np.diff(al)
        monotone = bool(np.all(steps <= MONOTONE_RTOL * max(1.0, abs(al[0]))))
        rel = abs(obj - prev_obj) / max(1.0, abs(prev_obj))
        history.append(dict(
            iteration=it, objective=obj, primal_residual=resid, dual_residual=dual,
            rank=int(s_kept.size), theta_nonzero_cols=int(np.count_nonzero(np.any(st.Theta != 0, axis=0))),
            u=st.u, al_start=al[0], al_after_w=al[1], al_after_theta=al[2], al_after_w_hat=al[3],
            al_monotone=monotone,
        ))
        last = (st.W.copy(), st.W_hat.copy(), st.Theta.copy())

        st.lambda1 = st.lambda1 + 2.0 * st.u * C
        st.u = min(cfg.u_growth * st.u, u_max)
        prev_obj = obj
        if (resid <= cfg.tol_primal * max(1.0, float(np.linalg.norm(st.W)))
                and dual <= cfg.tol_dual * max(1.0, float(np.linalg.norm(st.lambda1)))
                and rel <= cfg.tol_obj):
            converged = True
            break

    if not converged:
        log.warning("phase-1 view %s stopped at max_iter=%d without converging", pair.view, cfg.max_iter)
    return Phase1Fit(
        view=pair.view, W=st.W, W_hat=st.W_hat, Theta=st.Theta, lambda1=st.lambda1,
        history=history, converged=converged, iterations=it, params=params,
    )


def fit_all(pairs, cfg: Phase1Config | None = None, jobs: int = 1) -> Phase1Result:
    """Fit every view independently (views are decoupled in this phase)."""
    pairs = list(pairs)
    if jobs > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fits = list(pool.map(lambda p: fit_view(p, cfg), pairs))
    else:
        fits = [fit_view(p, cfg) for p in pairs]
    return Phase1Result(views=[p.view for p in pairs], fits={f.view: f for f in fits})
