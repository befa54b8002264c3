import warnings

import numpy as np
import pytest

from shakernet.errors import InvalidDimensions
from shakernet.phase2 import (
    DegenerateSingleView,
    Phase2Config,
    Phase2State,
    alignment,
    augmented_lagrangian,
    default_k,
    eigen_init,
    fit_multiview,
    procrustes,
    update_a,
    update_phi,
    update_w_tilde,
    view_alignment,
    view_alignment_grad,
)
from shakernet.proxops import l21_norm, orthonormality_error
from shakernet.synth import generate, precision_at


def make_state(V=2, n=6, k=3, seed=0, u=0.8, rho3=0.3, zero=False):
    r = np.random.default_rng(seed)
    W_hat = [r.normal(size=(n, n)) for _ in range(V)]
    st = Phase2State(
        W_hat=W_hat,
        W_tilde=[np.zeros((n, n)) if zero else r.normal(size=(n, n)) for _ in range(V)],
        Phi=[r.normal(size=(n, n)) for _ in range(V)],
        A=[np.linalg.qr(r.normal(size=(n, k)))[0] for _ in range(V)],
        lambda2=[r.normal(size=(n, n)) for _ in range(V)],
        u=u, rho3=rho3,
    )
    return st


def test_config_validation():
    with pytest.raises(ValueError):
        Phase2Config(k=0)
    with pytest.raises(ValueError):
        Phase2Config(a_update="magic")
    with pytest.raises(ValueError):
        Phase2Config(u0=3, u_max=1)


def test_default_k():
    assert default_k(5) == 2
    assert default_k(100) == 10
    assert default_k(1) == 1


# --- W_tilde update -------------------------------------------------------------

def w_tilde_objective(st, v, W):
    A = st.A[v]
    others = [st.A[w].T @ st.W_tilde[w] for w in range(st.V) if w != v]
    C = st.W_hat[v] - W - st.Phi[v]
    return sum(np.sum((A.T @ W - B) ** 2) for B in others) + st.u * np.sum(C * C) + np.sum(st.lambda2[v] * C)


def test_w_tilde_stationarity():
    st = make_state(V=3)
    W = update_w_tilde(st, 1)
    A = st.A[1]
    others = [st.A[w].T @ st.W_tilde[w] for w in (0, 2)]
    grad = sum(2 * A @ (A.T @ W - B) for B in others) - 2 * st.u * (st.W_hat[1] - W - st.Phi[1]) - st.lambda2[1]
    assert np.linalg.norm(grad) <= 1e-8


def test_w_tilde_matches_dense_solve():
    st = make_state(V=3, seed=4)
    A = st.A[0]
    n = A.shape[0]
    lhs = 2 * (st.V - 1) * A @ A.T + 2 * st.u * np.eye(n)
    rhs = (2 * A @ sum(st.A[w].T @ st.W_tilde[w] for w in (1, 2))
           + 2 * st.u * (st.W_hat[0] - st.Phi[0]) + st.lambda2[0])
    assert np.allclose(update_w_tilde(st, 0), np.linalg.solve(lhs, rhs))


def test_w_tilde_single_view():
    st = make_state(V=1)
    assert np.allclose(update_w_tilde(st, 0), st.W_hat[0] - st.Phi[0] + st.lambda2[0] / (2 * st.u))


def test_w_tilde_penalty_dominance():
    st = make_state(u=1e10)
    assert np.allclose(update_w_tilde(st, 0), st.W_hat[0] - st.Phi[0], atol=1e-6)


# --- A update -------------------------------------------------------------------

def test_a_update_zero_matrices_returns_eigen_basis():
    st = make_state(zero=True)
    A = update_a(st, 0, 3)
    assert np.array_equal(A, eigen_init(st, 0, 3))
    assert view_alignment(A, st.W_tilde[0], [st.projected(1)]) == 0.0


def test_a_update_shared_matrix_reaches_zero():
    st = make_state()
    st.W_tilde[1] = st.W_tilde[0].copy()
    st.A[0] = st.A[1].copy()
    A = update_a(st, 0, 3)
    assert view_alignment(A, st.W_tilde[0], [st.projected(1)]) <= 1e-10


def test_a_update_k1_beats_random_search():
    st = make_state(k=1, seed=7)
    A = update_a(st, 0, 1)
    f = view_alignment(A, st.W_tilde[0], [st.projected(1)])
    r = np.random.default_rng(0)
    cand = r.normal(size=(10_000, 6))
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    P = cand @ st.W_tilde[0]
    B = st.projected(1)[0]
    vals = np.sum((P - B) ** 2, axis=1)
    assert f <= vals.min() + 1e-12


def test_a_update_not_worse_than_current():
    for seed in range(5):
        st = make_state(V=3, k=2, seed=seed)
        others = [st.projected(1), st.projected(2)]
        before = view_alignment(st.A[0], st.W_tilde[0], others)
        A = update_a(st, 0, 2)
        assert view_alignment(A, st.W_tilde[0], others) <= before + 1e-12
        assert orthonormality_error(A) <= 1e-8


def test_procrustes_is_global_for_square():
    st = make_state(k=6, seed=3)
    others = [st.projected(1)]
    A = procrustes(st.W_tilde[0], others)
    f = view_alignment(A, st.W_tilde[0], others)
    r = np.random.default_rng(1)
    for _ in range(300):
        Q = np.linalg.qr(r.normal(size=(6, 6)))[0]
        assert f <= view_alignment(Q, st.W_tilde[0], others) + 1e-10


def test_view_alignment_gradient_matches_finite_differences():
    st = make_state()
    others = [st.projected(1)]
    A = st.A[0]
    G = view_alignment_grad(A, st.W_tilde[0], others)
    E = np.random.default_rng(2).normal(size=A.shape)
    h = 1e-6
    fd = (view_alignment(A + h * E, st.W_tilde[0], others) - view_alignment(A - h * E, st.W_tilde[0], others)) / (2 * h)
    assert np.isclose(fd, np.sum(G * E), rtol=1e-6)


def test_alignment_rotation_invariance():
    st = make_state(V=3)
    before = alignment(st)
    R = np.linalg.qr(np.random.default_rng(5).normal(size=(3, 3)))[0]
    st.A = [A @ R for A in st.A]
    assert abs(alignment(st) - before) <= 1e-10 * max(1.0, before)


# --- Phi update -------------------------------------------------------------------

def phi_objective(st, v, F):
    C = st.W_hat[v] - st.W_tilde[v] - F
    return st.rho3 * l21_norm(F) + st.u * np.sum(C * C) + np.sum(st.lambda2[v] * C)


def test_phi_limits():
    st = make_state(rho3=1e8)
    assert np.array_equal(update_phi(st, 0), np.zeros((6, 6)))
    st = make_state(rho3=0.0)
    assert np.allclose(update_phi(st, 0), st.W_hat[0] - st.W_tilde[0] + st.lambda2[0] / (2 * st.u))


def test_phi_beats_perturbations():
    st = make_state(rho3=2.0)
    F = update_phi(st, 1)
    f0 = phi_objective(st, 1, F)
    r = np.random.default_rng(3)
    for _ in range(500):
        assert f0 <= phi_objective(st, 1, F + 0.05 * r.normal(size=F.shape)) + 1e-12


def test_phi_sparsity_non_increasing_in_rho3():
    counts = []
    for rho3 in np.linspace(0, 8, 20):
        st = make_state(rho3=rho3)
        counts.append(int(np.count_nonzero(np.linalg.norm(update_phi(st, 0), axis=0))))
    assert all(a >= b for a, b in zip(counts, counts[1:]))


# --- full solver ----------------------------------------------------------------------

def test_identical_views_zero_phi():
    W = np.random.default_rng(0).normal(size=(8, 8))
    res = fit_multiview({"a": W, "b": W.copy()}, Phase2Config(k=3))
    for v in "ab":
        assert np.linalg.norm(res.Phi[v]) <= 1e-6
        assert np.linalg.norm(res.W_tilde[v] - W) <= 1e-6


def test_corrupted_columns_found():
    inst = generate(n=15, v=2, s=5, k_star=3, s_phi=2, seed=21)
    W1 = inst.W_star
    W2 = inst.W_star + inst.Phi_star(1)
    res = fit_multiview({"v0": W1, "v1": W2}, Phase2Config(k=15))
    assert precision_at(res.phi_scores["v1"], inst.phi_cols) == 1.0
    assert res.monotone


def test_history_and_invariants():
    r = np.random.default_rng(1)
    Ws = {f"v{i}": r.normal(size=(7, 7)) for i in range(3)}
    res = fit_multiview(Ws, Phase2Config(k=3, max_iter=40))
    for h in res.history:
        assert h["orthonormality"] <= 1e-8
        seq = [h["al_start"], h["al_after_w_tilde"], h["al_after_a"], h["al_after_phi"]]
        assert all(b - a <= 1e-10 * max(1.0, abs(seq[0])) for a, b in zip(seq, seq[1:]))
    for A in res.A.values():
        assert A.shape == (7, 3)
        assert orthonormality_error(A) <= 1e-8


def test_converged_result_satisfies_constraint():
    inst = generate(n=10, v=2, s=5, k_star=2, s_phi=1, seed=2)
    res = fit_multiview({"a": inst.W_star, "b": inst.W_star + inst.Phi_star(1)}, Phase2Config(k=10))
    assert res.converged
    for v in "ab":
        r = np.linalg.norm(res.W_hat[v] - res.W_tilde[v] - res.Phi[v])
        assert r <= res.params["tol_primal"] * max(1.0, np.linalg.norm(res.W_hat[v]))


def test_alignment_term_alone_can_rise():
    # the augmented Lagrangian descends block by block, but the alignment
    # term by itself trades off against the L2,1 penalty and feasibility
    r = np.random.default_rng(15)
    Ws = {f"v{i}": r.normal(size=(8, 8)) / np.sqrt(8) for i in range(3)}
    res = fit_multiview(Ws, Phase2Config(k=2, max_iter=30))
    a = [h["alignment"] for h in res.history]
    assert any(y > x for x, y in zip(a, a[1:]))
    assert res.monotone


def test_single_view_degenerate():
    W = np.eye(4)
    with pytest.warns(DegenerateSingleView):
        res = fit_multiview({"only": W}, Phase2Config(k=2))
    assert res.degenerate
    assert np.array_equal(res.W_tilde["only"], W)
    assert np.array_equal(res.A["only"], np.eye(4)[:, :2])


def test_eigen_only_mode_runs_orthonormal():
    r = np.random.default_rng(3)
    Ws = {"a": r.normal(size=(6, 6)), "b": r.normal(size=(6, 6))}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = fit_multiview(Ws, Phase2Config(k=2, a_update="eigen", max_iter=20))
    assert all(h["orthonormality"] <= 1e-8 for h in res.history)


def test_bad_dimensions():
    with pytest.raises(InvalidDimensions):
        fit_multiview({"a": np.eye(3), "b": np.eye(4)})
    with pytest.raises(InvalidDimensions):
        fit_multiview({"a": np.eye(3), "b": np.eye(3)}, Phase2Config(k=4))


def test_augmented_lagrangian_definition():
    st = make_state(V=2)
    ref = alignment(st) + st.rho3 * sum(l21_norm(P) for P in st.Phi)
    for v in range(2):
        C = st.W_hat[v] - st.W_tilde[v] - st.Phi[v]
        ref += st.u * np.sum(C * C) + np.sum(st.lambda2[v] * C)
    assert np.isclose(augmented_lagrangian(st), ref)


def test_converged_means_both_residuals_small():
    inst = generate(n=10, v=2, s=5, k_star=2, s_phi=1, seed=2)
    res = fit_multiview({"a": inst.W_star, "b": inst.W_star + inst.Phi_star(1)}, Phase2Config(k=10))
    assert res.converged
    lam = max(np.linalg.norm(L) for L in res.lambda2.values())
    assert res.history[-1]["dual_residual"] <= 1e-6 * max(1.0, lam)
