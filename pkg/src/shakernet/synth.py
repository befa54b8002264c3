"""Synthetic multi-view VAR(1) panels with planted influence structure.

Every view shares a low-rank influence matrix ``W_star = P Q^T`` and a
column-sparse spurious block ``Theta_star``; designated corrupt views add
their own column-sparse ``Phi_star``. Matrices are kept in factored form so
generation scales to tens of thousands of entities; dense views are built on
demand.

Randomness: ``numpy.random.Philox`` (Philox4x64-10, counter-based) keyed by
``SeedSequence(seed)`` and split with ``SeedSequence.spawn``. The same seed
yields the same instance on every platform numpy supports.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidDimensions, ShapeMismatch
from .panel import LagPair, PanelSeries, export_csv

RNG_NAME = "numpy.random.Philox (Philox4x64-10) keyed by SeedSequence"


def make_rng(seed_seq) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_seq))


@dataclass
class PlantedInstance:
    P: np.ndarray
    Q: np.ndarray
    theta_cols: np.ndarray
    theta_values: np.ndarray
    phi_cols: np.ndarray
    phi_values: dict
    panel: PanelSeries
    seed: int
    params: dict = field(default_factory=dict)
    scale: float = 1.0

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def W_star(self) -> np.ndarray:
        return self.P @ self.Q.T

    @property
    def Theta_star(self) -> np.ndarray:
        T = np.zeros((self.n, self.n))
        T[:, self.theta_cols] = self.theta_values
        return T

    def Phi_star(self, view: int) -> np.ndarray:
        F = np.zeros((self.n, self.n))
        if view in self.phi_values:
            F[:, self.phi_cols] = self.phi_values[view]
        return F

    def effective(self, view: int) -> np.ndarray:
        return self.W_star + self.Theta_star + self.Phi_star(view)

    @property
    def corrupt_views(self) -> list:
        return sorted(self.phi_values)

    def step(self, x: np.ndarray, view: int) -> np.ndarray:
        """``x @ effective(view)`` without forming the dense matrix."""
        out = (x @ self.P) @ self.Q.T
        if self.theta_cols.size:
            out[..., self.theta_cols] += x @ self.theta_values
        if view in self.phi_values and self.phi_cols.size:
            out[..., self.phi_cols] += x @ self.phi_values[view]
        return out

    def truth_dict(self) -> dict:
        return {
            "generator": RNG_NAME,
            "seed": self.seed,
            "params": self.params,
            "scale": self.scale,
            "entities": list(self.panel.entities),
            "views": list(self.panel.views),
            "W_star": self.W_star.tolist(),
            "theta_columns": self.theta_cols.tolist(),
            "phi_columns": self.phi_cols.tolist(),
            "corrupt_views": [self.panel.views[v] for v in self.corrupt_views],
            "Theta_star_columns": self.theta_values.T.tolist(),
            "Phi_star_columns": {
                self.panel.views[v]: vals.T.tolist() for v, vals in sorted(self.phi_values.items())
            },
        }

    def export(self, panel_path, truth_path) -> None:
        export_csv(self.panel, panel_path)
        Path(truth_path).write_text(json.dumps(self.truth_dict(), indent=1) + "\n", encoding="utf-8")


def _spectral_norm(L: np.ndarray, R: np.ndarray) -> float:
    """Largest singular value of ``L @ R.T`` for tall thin factors."""
    _, RL = np.linalg.qr(L)
    _, RR = np.linalg.qr(R)
    return float(np.linalg.norm(RL @ RR.T, 2))


def _selector(n, cols):
    E = np.zeros((n, len(cols)))
    E[cols, np.arange(len(cols))] = 1.0
    return E


def generate(
    n: int,
    v: int,
    s: int,
    k_star: int,
    s_theta: int = 0,
    s_phi: int = 0,
    sigma: float = 0.1,
    radius_cap: float = 0.9,
    seed: int = 0,
    theta_scale: float | None = None,
    phi_scale: float | None = None,
    corrupt_views=None,
    burn_in: int = 100,
) -> PlantedInstance:
    """Draw a planted instance and simulate ``s + 1`` observations per view.

    ``theta_scale``/``phi_scale`` default to 5x the RMS entry of ``W_star``.
    All planted matrices are shrunk by one common factor whenever the largest
    per-view spectral norm exceeds ``radius_cap``; a spectral norm below one
    bounds the spectral radius and makes the recursion a contraction.
    """
    if n < 1 or v < 1 or s < 1:
        raise InvalidDimensions("n, v and s must be positive")
    if not 1 <= k_star <= n:
        raise InvalidDimensions(f"k_star must be in [1, n], got {k_star}")
    if s_theta < 0 or s_phi < 0 or s_theta + s_phi > n:
        raise InvalidDimensions("need s_theta, s_phi >= 0 and s_theta + s_phi <= n")
    if sigma < 0:
        raise InvalidDimensions("sigma must be >= 0")
    if not 0 < radius_cap < 1:
        raise InvalidDimensions("radius_cap must lie in (0, 1)")
    if corrupt_views is None:
        corrupt_views = list(range(1, v)) if s_phi else []
    corrupt_views = sorted(set(int(c) for c in corrupt_views))
    if any(not 0 <= c < v for c in corrupt_views):
        raise InvalidDimensions("corrupt view index out of range")

    root = np.random.SeedSequence(seed)
    ss_factors, ss_outliers, ss_sim = root.spawn(3)
    rng = make_rng(ss_factors)
    P = rng.standard_normal((n, k_star)) / math.sqrt(k_star)
    Q = rng.standard_normal((n, k_star)) / math.sqrt(n)
    rms = math.sqrt(float(np.trace((P.T @ P) @ (Q.T @ Q)))) / n
    theta_scale = 5.0 * rms if theta_scale is None else float(theta_scale)
    phi_scale = 5.0 * rms if phi_scale is None else float(phi_scale)

    rng = make_rng(ss_outliers)
    picked = np.sort(rng.choice(n, size=s_theta + s_phi, replace=False)) if s_theta + s_phi else np.array([], int)
    order = rng.permutation(picked.size)
    theta_cols = np.sort(picked[order[:s_theta]])
    phi_cols = np.sort(picked[order[s_theta:]])
    theta_values = theta_scale * rng.standard_normal((n, s_theta))
    phi_values = {c: phi_scale * rng.standard_normal((n, s_phi)) for c in corrupt_views}

    E_theta = _selector(n, theta_cols)
    E_phi = _selector(n, phi_cols)
    norms = []
    for view in range(v):
        Ls = [P, theta_values]
        Rs = [Q, E_theta]
        if view in phi_values:
            Ls.append(phi_values[view])
            Rs.append(E_phi)
        norms.append(_spectral_norm(np.hstack(Ls), np.hstack(Rs)))
    top = max(norms)
    scale = radius_cap / top if top > radius_cap else 1.0
    P = P * scale
    theta_values = theta_values * scale
    phi_values = {c: vals * scale for c, vals in phi_values.items()}

    inst = PlantedInstance(
        P=P, Q=Q, theta_cols=theta_cols, theta_values=theta_values, phi_cols=phi_cols,
        phi_values=phi_values, panel=None, seed=seed, scale=scale,
        params=dict(n=n, v=v, s=s, k_star=k_star, s_theta=s_theta, s_phi=s_phi, sigma=sigma,
                    radius_cap=radius_cap, theta_scale=theta_scale, phi_scale=phi_scale,
                    corrupt_views=corrupt_views, burn_in=burn_in),
    )

    values = np.empty((v, s + 1, n))
    for view, ss in enumerate(ss_sim.spawn(v)):
        rng = make_rng(ss)
        x = rng.standard_normal(n)
        for t in range(burn_in + s + 1):
            if t > 0:
                x = inst.step(x, view)
                if sigma > 0:
                    x = x + sigma * rng.standard_normal(n)
            if t >= burn_in:
                values[view, t - burn_in] = x
    width = len(str(n - 1))
    inst.panel = PanelSeries(
        [f"v{i}" for i in range(v)],
        [f"e{i:0{width}d}" for i in range(n)],
        [str(t) for t in range(s + 1)],
        values,
    )
    return inst


def regression_design(inst: PlantedInstance, view: int, s: int, sigma: float = 0.0, seed: int = 0) -> LagPair:
    """I.i.d. Gaussian design ``X`` with ``Y = X W_view + noise``.

    The VAR recursion confines noiseless panels to the row space of ``W``;
    this design gives a full-rank ``X`` for exact-recovery checks.
    """
    rng = make_rng(np.random.SeedSequence([seed, view]))
    X = rng.standard_normal((s, inst.n))
    Y = inst.step(X, view)
    if sigma > 0:
        Y = Y + sigma * rng.standard_normal(Y.shape)
    return LagPair(X, Y, inst.panel.views[view])


def precision_at(scores, true_idx, s: int | None = None) -> float:
    """Fraction of the ``s`` top-scored indices that are planted (ties -> lower index)."""
    scores = np.asarray(scores, dtype=float)
    true_idx = set(int(i) for i in np.atleast_1d(true_idx))
    s = len(true_idx) if s is None else s
    if s == 0:
        return float("nan")
    order = np.lexsort((np.arange(scores.size), -scores))
    return len(true_idx.intersection(order[:s].tolist())) / s


def auc(scores, true_idx) -> float:
    """Mann-Whitney AUC of ``scores`` separating planted from other indices."""
    scores = np.asarray(scores, dtype=float)
    pos = np.zeros(scores.size, bool)
    pos[np.atleast_1d(true_idx).astype(int)] = True
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return (ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def _rel_err(est, ref):
    denom = float(np.linalg.norm(ref))
    return float(np.linalg.norm(est - ref)) / denom if denom > 0 else float(np.linalg.norm(est))


def recovery_metrics(result, truth: PlantedInstance, view: int = 0) -> dict:
    """Recovery scores for a phase-1 fit or a phase-2 result against planted truth.

    Phase-1 fits are scored on ``W_hat`` and ``Theta``; phase-2 results on
    ``W_tilde`` and ``Phi`` of ``view`` (index into the truth's views).
    """
    n = truth.n
    out = {}
    W_star = truth.W_star
    if hasattr(result, "W_hat") and hasattr(result, "Theta"):
        if result.W_hat.shape != (n, n):
            raise ShapeMismatch(f"result is {result.W_hat.shape}, truth is {(n, n)}")
        out["w_hat_rel_error"] = _rel_err(result.W_hat, W_star)
        scores = np.linalg.norm(result.Theta, axis=0)
        out["theta_precision"] = precision_at(scores, truth.theta_cols)
        out["theta_auc"] = auc(scores, truth.theta_cols)
    elif hasattr(result, "W_tilde"):
        name = truth.panel.views[view]
        Wt = result.W_tilde[name]
        if Wt.shape != (n, n):
            raise ShapeMismatch(f"result is {Wt.shape}, truth is {(n, n)}")
        out["w_tilde_rel_error"] = _rel_err(Wt, W_star)
        if view in truth.phi_values:
            scores = np.linalg.norm(result.Phi[name], axis=0)
            out["phi_precision"] = precision_at(scores, truth.phi_cols)
            out["phi_auc"] = auc(scores, truth.phi_cols)
    else:
        raise TypeError(f"cannot score {type(result).__name__}")
    return out
