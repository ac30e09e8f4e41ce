import numpy as np
import pytest

from turbogodec import synth
from turbogodec.csp_bp import CspParams
from turbogodec.godec import (GodecParams, estimate_cardinality, estimate_rank, godec, l_step,
                              l_step_brp, relative_residual, s_step_csp, s_step_entrywise,
                              s_step_hard_threshold, truncated_svd, turbo_godec)
from turbogodec.hsi_data import PixelMatrix, flatten


def jacobi_svd(A, sweeps=60):
    """One-sided Jacobi SVD, written independently of LAPACK."""
    U = np.array(A, dtype=float)
    n = U.shape[1]
    V = np.eye(n)
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                a = U[:, p] @ U[:, p]
                b = U[:, q] @ U[:, q]
                g = U[:, p] @ U[:, q]
                off = max(off, abs(g) / np.sqrt(a * b) if a * b > 0 else 0.0)
                if abs(g) < 1e-300:
                    continue
                zeta = (b - a) / (2 * g)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1 + zeta * zeta)) if zeta else 1.0
                c = 1 / np.sqrt(1 + t * t)
                s = c * t
                up, uq = U[:, p].copy(), U[:, q].copy()
                U[:, p], U[:, q] = c * up - s * uq, s * up + c * uq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
        if off < 1e-15:
            break
    sv = np.linalg.norm(U, axis=0)
    order = np.argsort(-sv)
    return sv[order], V[:, order]


def test_truncated_svd_matches_jacobi(rng):
    A = rng.standard_normal((30, 8))
    for r in (1, 3, 8):
        t = truncated_svd(A, r)
        s_ref, V_ref = jacobi_svd(A)
        np.testing.assert_allclose(t.s, s_ref[:r], rtol=1e-10)
        V_r = V_ref[:, :r]
        L_ref = A @ V_r @ V_r.T
        np.testing.assert_allclose(t.reconstruct(), L_ref, atol=1e-9)


def test_truncated_svd_eckart_young(rng):
    A = rng.standard_normal((20, 10))
    s_all = np.linalg.svd(A, compute_uv=False)
    for r in range(1, 10):
        err = np.linalg.norm(A - truncated_svd(A, r).reconstruct())
        assert err == pytest.approx(np.sqrt((s_all[r:] ** 2).sum()), rel=1e-10)


def test_truncated_svd_rank_bounds():
    with pytest.raises(ValueError):
        truncated_svd(np.ones((4, 3)), 0)
    with pytest.raises(ValueError):
        truncated_svd(np.ones((4, 3)), 4)


def test_l_step_exact_for_low_rank(rng):
    L = rng.random((40, 2)) @ rng.random((2, 9))
    np.testing.assert_allclose(l_step(L, np.zeros_like(L), 2), L, atol=1e-12)


def test_brp_exact_for_low_rank(rng):
    L = rng.random((50, 3)) @ rng.random((3, 12))
    out = l_step_brp(L, np.zeros_like(L), 3, seed=5)
    np.testing.assert_allclose(out, L, atol=1e-10)
    np.testing.assert_array_equal(out, l_step_brp(L, np.zeros_like(L), 3, seed=5))


def test_brp_close_to_svd_on_noisy(rng):
    M = rng.random((60, 3)) @ rng.random((3, 15)) + 1e-3 * rng.standard_normal((60, 15))
    a = l_step(M, np.zeros_like(M), 3)
    b = l_step_brp(M, np.zeros_like(M), 3, power_iters=4)
    assert np.linalg.norm(a - b) / np.linalg.norm(a) < 1e-3


def test_hard_threshold_keeps_k_rows():
    R = np.array([[3.0, 0.0], [0.0, 1.0], [2.0, 2.0], [0.0, 0.0]])
    S = s_step_hard_threshold(R, 2)
    np.testing.assert_array_equal(S, [[3, 0], [0, 0], [2, 2], [0, 0]])
    assert s_step_hard_threshold(R, 10)[3].sum() == 0  # zero rows never selected


def test_hard_threshold_ties_prefer_lower_index():
    R = np.array([[1.0], [-1.0], [1.0]])
    S = s_step_hard_threshold(R, 2)
    np.testing.assert_array_equal(S.ravel(), [1.0, -1.0, 0.0])


def test_entrywise_threshold():
    R = np.array([[3.0, -0.5], [-4.0, 1.0]])
    np.testing.assert_array_equal(s_step_entrywise(R, 2), [[3.0, 0.0], [-4.0, 0.0]])


def test_csp_selection_uses_positive_j():
    R = np.arange(8.0).reshape(4, 2)
    J = np.array([0.2, 0.0, 0.9, 0.5])
    S = s_step_csp(R, J, 3)
    assert list(np.flatnonzero(S.any(axis=1))) == [0, 2, 3]
    with pytest.raises(ValueError):
        s_step_csp(R, J[:3], 1)


def test_params_validation():
    with pytest.raises(ValueError):
        GodecParams(rank=0, card=1)
    with pytest.raises(ValueError):
        GodecParams(rank=1, card=0)
    with pytest.raises(ValueError):
        GodecParams(rank=1, card=1, eps=0)
    with pytest.raises(ValueError):
        GodecParams(rank=1, card=1, lowrank="qr")
    with pytest.raises(ValueError):
        godec(np.ones((4, 3)), GodecParams(rank=4, card=1))
    with pytest.raises(ValueError):
        godec(np.ones((4, 3)), GodecParams(rank=1, card=5))


def test_relative_residual_zero_input():
    Z = np.zeros((3, 2))
    assert relative_residual(Z, Z, Z) == 0.0


def _noiseless(seed, rank=3, count=10):
    spec = synth.SceneSpec(30, 30, 20, rank, dispersed_count=count, dispersed_amplitude=0.3, seed=seed)
    return synth.make_scene(spec)


@pytest.mark.parametrize("lowrank", ["svd", "brp"])
def test_exact_recovery_noiseless(lowrank):
    sc = _noiseless(4)
    X = flatten(sc.cube)
    res = godec(X, GodecParams(rank=3, card=10, eps=1e-8, lowrank=lowrank, power_iters=3))
    np.testing.assert_array_equal(res.support, sc.mask.ravel().astype(bool))
    assert res.residual_history[-1] <= 1e-6
    off = ~sc.mask.ravel().astype(bool)
    np.testing.assert_allclose(res.L[off], sc.L[off], atol=1e-6)


def test_godec_history_and_stop():
    sc = _noiseless(1)
    res = godec(flatten(sc.cube), GodecParams(rank=3, card=10, eps=1e-6))
    assert res.iterations_used == len(res.residual_history) <= 20
    assert res.residual_history[-1] <= 1e-6
    assert all(h > 1e-6 for h in res.residual_history[:-1])


def test_godec_max_iter_respected(rng):
    X = rng.standard_normal((50, 10))
    res = godec(X, GodecParams(rank=2, card=3, eps=1e-12, max_iter=4))
    assert res.iterations_used == 4


def test_entry_mode_runs():
    sc = _noiseless(2)
    res = godec(flatten(sc.cube), GodecParams(rank=3, card=10, sparse="entry", eps=1e-8))
    assert np.count_nonzero(res.S) <= 10 * 20


def test_turbo_requires_grid():
    with pytest.raises(TypeError):
        turbo_godec(np.ones((9, 3)), GodecParams(rank=1, card=1))


def test_turbo_selects_top_j(rng):
    L = rng.random((64, 2)) @ rng.random((2, 5))
    X = L.copy()
    X[[3, 20, 41]] += 0.5
    pm = PixelMatrix(X, 8, 8)
    res = turbo_godec(pm, GodecParams(rank=2, card=3, max_iter=3))
    top = np.argsort(-res.J.ravel(), kind="stable")[:3]
    assert set(np.flatnonzero(res.support)) == set(top) == {3, 20, 41}


def test_turbo_records_sweeps_and_j():
    sc = synth.make_scene(synth.SceneSpec(
        12, 12, 6, 2, clusters=(synth.Cluster(3, 3, 2, 2, 1.0),), noise_sigma=0.01, seed=0))
    res = turbo_godec(flatten(sc.cube), GodecParams(rank=2, card=4))
    assert res.J.shape == (12, 12)
    assert len(res.bp_sweeps) == res.iterations_used
    assert all(0 < s <= 100 for s in res.bp_sweeps)
    np.testing.assert_array_equal(res.support.reshape(12, 12), sc.mask.astype(bool))


def test_estimators(rng):
    X = rng.random((100, 3)) @ rng.random((3, 20))
    assert estimate_rank(X) == 3
    Y = rng.random((100, 2)) @ rng.random((2, 20)) + 1e-2 * rng.standard_normal((100, 20))
    assert estimate_rank(Y, 0.99) == 2
    assert estimate_rank(Y, 0.999999) > 2
    assert estimate_rank(np.zeros((5, 3))) == 1
    assert estimate_cardinality(X) == 2
    assert estimate_cardinality(1000, 0.05) == 50
    assert estimate_cardinality(10) == 1
    with pytest.raises(ValueError):
        estimate_rank(X, 1.0)
