import numpy as np
import pytest
import scipy.linalg
from conftest import centering_matrix, random_psd

from nkcca.kernels import KernelColumns
from nkcca.leverage import SamplingDistribution
from nkcca.nystrom import (DowndateError, QrState, apply, chol_init,
                           chol_solve, chol_step, choldowndate, cholupdate,
                           factor, qr_append)
from nkcca.sampling import full_plan, sample, unit_plan


def dense_target(K, idx, s, lam):
    """N lam S^T K S + S^T K H K S for the s-weighted sampling matrix."""
    n = K.shape[0]
    H = centering_matrix(n)
    S = np.zeros((n, len(idx)))
    S[idx, np.arange(len(idx))] = s
    return n * lam * S.T @ K @ S + S.T @ K @ H @ K @ S


# --- rank-one update / downdate ---------------------------------------------

def test_cholupdate_matches_dense():
    rng = np.random.default_rng(0)
    for _ in range(5):
        n = int(rng.integers(1, 8))
        G = random_psd(rng, n, jitter=0.5)
        R = scipy.linalg.cholesky(G)
        x = rng.normal(size=n)
        R2 = cholupdate(R.copy(), x.copy())
        expected = scipy.linalg.cholesky(G + np.outer(x, x))
        np.testing.assert_allclose(R2, expected, atol=1e-10)


def test_cholupdate_zero_padded_diagonal():
    # padded factor with zero last pivot must update without division issues
    R = np.array([[2.0, 0.0], [0.0, 0.0]])
    x = np.array([0.5, 3.0])
    R2 = cholupdate(R.copy(), x.copy())
    target = R.T @ R + np.outer(x, x)
    np.testing.assert_allclose(R2.T @ R2, target, atol=1e-12)
    assert np.all(np.diag(R2) > 0)


def test_choldowndate_matches_dense():
    rng = np.random.default_rng(1)
    for _ in range(5):
        n = int(rng.integers(1, 8))
        G = random_psd(rng, n, jitter=1.0)
        x = 0.3 * rng.normal(size=n)
        target = G - np.outer(x, x)
        if np.linalg.eigvalsh(target).min() <= 1e-8:
            continue
        R = scipy.linalg.cholesky(G)
        R2 = choldowndate(R.copy(), x.copy())
        np.testing.assert_allclose(R2, scipy.linalg.cholesky(target), atol=1e-9)


def test_choldowndate_detects_indefiniteness():
    R = np.eye(2)
    with pytest.raises(DowndateError):
        choldowndate(R, np.array([2.0, 0.0]))


# --- Nystrom factor ----------------------------------------------------------

def test_factor_full_plan_exact():
    rng = np.random.default_rng(2)
    K = random_psd(rng, 12)
    f = factor(KernelColumns.from_gram(K), full_plan(12), gamma=0.0)
    np.testing.assert_allclose(f.dense(), K, atol=1e-8)


def test_factor_single_column_identity():
    K = np.eye(5)
    f = factor(KernelColumns.from_gram(K), unit_plan([2]), gamma=0.0)
    expected = np.zeros((5, 5))
    expected[2, 2] = 1.0
    np.testing.assert_allclose(f.dense(), expected, atol=1e-12)


def test_factor_apply_matches_dense_oracle():
    rng = np.random.default_rng(3)
    K = random_psd(rng, 8)
    oracle = KernelColumns.from_gram(K)
    p = rng.uniform(0.5, 2.0, size=8)
    dist = SamplingDistribution(p=p / p.sum())
    plan = sample(dist, 4, seed=7)
    gamma = 0.05
    f = factor(oracle, plan, gamma)
    # dense oracle straight from the weighted sampling matrix
    S = np.zeros((8, 4))
    S[plan.indices, np.arange(4)] = plan.weights
    L = K @ S @ np.linalg.pinv(S.T @ K @ S + 8 * gamma * np.eye(4)) @ S.T @ K
    v = rng.normal(size=8)
    np.testing.assert_allclose(apply(f, v), L @ v, atol=1e-10)
    np.testing.assert_allclose(f.dense(), L, atol=1e-10)


def test_factor_gamma_zero_singular_core_falls_back_to_pinv():
    K = np.ones((4, 4))          # rank one, duplicated columns
    f = factor(KernelColumns.from_gram(K), unit_plan([0, 1]), gamma=0.0)
    v = np.arange(4.0)
    L = K  # full approximation of a rank-1 matrix from any of its columns
    np.testing.assert_allclose(apply(f, v), L @ v, atol=1e-10)


def test_factor_psd_ordering_small_instances():
    rng = np.random.default_rng(4)
    for _ in range(5):
        n = int(rng.integers(6, 16))
        K = random_psd(rng, n)
        oracle = KernelColumns.from_gram(K)
        m = int(rng.integers(1, n))
        plan = sample(SamplingDistribution(p=np.full(n, 1 / n)), m, seed=11)
        gamma = float(rng.uniform(0.01, 0.5))
        L = factor(oracle, plan, 0.0).dense()
        Lg = factor(oracle, plan, gamma).dense()
        norm = np.linalg.norm(K, 2)
        assert np.linalg.eigvalsh(K - L).min() >= -1e-8 * norm
        assert np.linalg.eigvalsh(L - Lg).min() >= -1e-8 * norm
        assert np.linalg.eigvalsh(K - Lg).min() >= -1e-8 * norm


# --- incremental Cholesky -----------------------------------------------------

def test_chol_init_identity_hand_arithmetic():
    # K = I, N = 2, first landmark 0 with unit weight, lambda = 1:
    # a1 = [0.5, -0.5], d1 = 0.5 + 2 * 1 * 1 * 1 = 2.5, R1 = sqrt(2.5)
    oracle = KernelColumns.from_gram(np.eye(2))
    state = chol_init(oracle, 0, 1.0, lam=1.0)
    np.testing.assert_allclose(state.A[:, 0], [0.5, -0.5], atol=1e-15)
    assert state.R[0, 0] == pytest.approx(np.sqrt(2.5), abs=1e-15)


def test_chol_init_constant_column():
    K = np.full((4, 4), 0.7)
    state = chol_init(KernelColumns.from_gram(K), 1, 2.0, lam=0.5)
    np.testing.assert_allclose(state.A[:, 0], np.zeros(4), atol=1e-15)
    # d1 = 0 + N lam s^2 K_ii = 4 * 0.5 * 4 * 0.7
    assert state.R[0, 0] ** 2 == pytest.approx(4 * 0.5 * 4.0 * 0.7, rel=1e-12)


def test_chol_init_matches_dense_scalar():
    rng = np.random.default_rng(5)
    K = random_psd(rng, 6)
    s, lam = 1.7, 0.2
    state = chol_init(KernelColumns.from_gram(K), 4, s, lam)
    expected = dense_target(K, [4], [s], lam)[0, 0]
    assert state.R[0, 0] ** 2 == pytest.approx(expected, rel=1e-12)


def test_chol_update_pair_reconstruction_identity():
    # u u^T - v v^T with u = [c/(1+g); g], v = [c/(1+g); -1] must produce
    # the bordered block [[0, c], [c^T, g^2 - 1]]
    rng = np.random.default_rng(6)
    c = rng.normal(size=3)
    d = float(rng.uniform(0.1, 4.0))
    g = np.sqrt(1.0 + d)
    u = np.concatenate([c / (1.0 + g), [g]])
    v = np.concatenate([c / (1.0 + g), [-1.0]])
    M = np.outer(u, u) - np.outer(v, v)
    np.testing.assert_allclose(M[:3, :3], np.zeros((3, 3)), atol=1e-14)
    np.testing.assert_allclose(M[:3, 3], c, atol=1e-14)
    assert M[3, 3] == pytest.approx(d, abs=1e-12)  # g^2 - 1 = d


def test_chol_two_steps_match_dense_target():
    rng = np.random.default_rng(7)
    K = random_psd(rng, 6)
    oracle = KernelColumns.from_gram(K)
    lam = 0.3
    idx, s = [1, 4], [1.2, 0.8]
    state = chol_init(oracle, idx[0], s[0], lam)
    chol_step(state, idx[1], s[1], oracle=oracle)
    target = dense_target(K, idx, s, lam)
    np.testing.assert_allclose(state.R.T @ state.R, target, atol=1e-10)


def test_chol_many_steps_match_batch_factorization():
    rng = np.random.default_rng(8)
    n = 15
    K = random_psd(rng, n)
    oracle = KernelColumns.from_gram(K)
    lam = 0.05
    idx = rng.choice(n, size=8, replace=False)
    s = rng.uniform(0.5, 2.0, size=8)
    state = chol_init(oracle, int(idx[0]), float(s[0]), lam)
    for i, w in zip(idx[1:], s[1:]):
        chol_step(state, int(i), float(w), oracle=oracle)
    target = dense_target(K, idx, s, lam)
    R_dense = scipy.linalg.cholesky(target)
    np.testing.assert_allclose(state.R, R_dense,
                               atol=1e-8 * np.abs(R_dense).max())
    B = rng.normal(size=(8, 3))
    np.testing.assert_allclose(chol_solve(state, B),
                               np.linalg.solve(target, B), atol=1e-8)


def test_chol_duplicate_landmark_hits_error_path():
    # an exactly duplicated landmark makes the grown target singular; the
    # dense oracle confirms it is not PD, so the step must signal
    rng = np.random.default_rng(9)
    K = random_psd(rng, 6, jitter=0.1)
    oracle = KernelColumns.from_gram(K)
    state = chol_init(oracle, 2, 1.0, lam=0.4)
    target = dense_target(K, [2, 2], [1.0, 1.0], 0.4)
    assert np.linalg.eigvalsh(target).min() < 1e-10  # singular, not PD
    with pytest.raises(DowndateError):
        chol_step(state, 2, 1.0, oracle=oracle)
    assert state.m == 1  # transactional: state unchanged


def test_chol_solve_identity_and_scalar():
    rng = np.random.default_rng(10)
    K = random_psd(rng, 7)
    oracle = KernelColumns.from_gram(K)
    state = chol_init(oracle, 0, 1.0, lam=0.1)
    chol_step(state, 3, 1.0, oracle=oracle)
    G = state.R.T @ state.R
    np.testing.assert_allclose(chol_solve(state, G), np.eye(2), atol=1e-8)
    single = chol_init(oracle, 5, 1.0, lam=0.1)
    b = np.array([2.0])
    assert chol_solve(single, b)[0] == pytest.approx(
        2.0 / single.R[0, 0] ** 2, rel=1e-12)


def test_chol_state_diag_positive_and_gram_cached():
    rng = np.random.default_rng(11)
    K = random_psd(rng, 9)
    oracle = KernelColumns.from_gram(K)
    idx, s = [0, 5, 7], [1.0, 2.0, 0.5]
    state = chol_init(oracle, idx[0], s[0], 0.2)
    for i, w in zip(idx[1:], s[1:]):
        chol_step(state, i, w, oracle=oracle)
    assert np.all(np.diag(state.R) > 0)
    expected_gram = np.outer(s, s) * K[np.ix_(idx, idx)]
    np.testing.assert_allclose(state.gram, expected_gram, atol=1e-12)


def test_chol_weight_validation():
    oracle = KernelColumns.from_gram(np.eye(3))
    state = chol_init(oracle, 0, 1.0, 0.1)
    with pytest.raises(ValueError):
        chol_step(state, 1, 0.0, oracle=oracle)
    with pytest.raises(DowndateError):
        chol_init(KernelColumns.from_gram(np.zeros((3, 3))), 0, 1.0, 0.1)


# --- incremental QR -----------------------------------------------------------

def test_qr_orthogonal_inputs():
    state = QrState(3)
    qr_append(state, np.array([1.0, 0.0, 0.0]))
    qr_append(state, np.array([0.0, 1.0, 0.0]))
    np.testing.assert_allclose(state.Q, np.eye(3)[:, :2], atol=1e-14)
    np.testing.assert_allclose(state.P, np.eye(2), atol=1e-14)
    assert state.dependent == [False, False]


def test_qr_dependent_column_flagged():
    state = QrState(4)
    a = np.array([1.0, 2.0, 0.0, -1.0])
    qr_append(state, a)
    qr_append(state, 2.0 * a)
    assert state.dependent == [False, True]
    assert state.r == 1
    assert state.Q.shape == (4, 1)
    # P retains the projection coefficients of the dependent column
    np.testing.assert_allclose(state.Q @ state.P[:, 1], 2.0 * a, atol=1e-10)


def test_qr_random_columns_reconstruct():
    rng = np.random.default_rng(12)
    state = QrState(9)
    cols = [rng.normal(size=9) for _ in range(5)]
    for a in cols:
        qr_append(state, a)
    A = np.column_stack(cols)
    np.testing.assert_allclose(state.Q.T @ state.Q, np.eye(5), atol=1e-10)
    np.testing.assert_allclose(state.Q @ state.P, A,
                               atol=1e-10 * np.abs(A).max())


def test_qr_growth_beyond_initial_capacity():
    rng = np.random.default_rng(13)
    state = QrState(40, capacity=4)
    A = rng.normal(size=(40, 20))
    for j in range(20):
        qr_append(state, A[:, j])
    np.testing.assert_allclose(state.Q.T @ state.Q, np.eye(20), atol=1e-9)
    np.testing.assert_allclose(state.Q @ state.P, A, atol=1e-9)


def test_qr_dimension_check():
    state = QrState(3)
    with pytest.raises(ValueError):
        qr_append(state, np.ones(4))
