import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridbeam._util import unvec, vec
from hybridbeam.channel import ArrayGeometry, ChannelParams, make_dictionary, nmse, sample_channel
from hybridbeam.config import SystemConfig
from hybridbeam.estimation import (
    LeastSquaresEstimator,
    RankDeficientError,
    default_epsilon,
    exhaustive_search_estimate,
    exhaustive_search_plan,
    ls_estimate,
    ls_mmse_bound,
    omp,
    omp_estimate,
    whiten,
)
from hybridbeam.training import (
    ls_orthogonal_training,
    mutual_coherence,
    random_training,
    sensing_matrix,
    simulate_measurements,
)


def crand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# orthogonal matching pursuit


def test_planted_single_atom():
    rng = np.random.default_rng(0)
    A = crand(rng, 10, 20)
    res = omp(A, A[:, 7], epsilon=0.0)
    assert res.support == [7]
    assert res.iterations == 1
    assert res.residual_norm == pytest.approx(0.0, abs=1e-12)
    assert res.x_hat[7] == pytest.approx(1.0)


def test_zero_measurement_gives_empty_support():
    A = crand(np.random.default_rng(1), 6, 9)
    res = omp(A, np.zeros(6), epsilon=0.0)
    assert res.support == [] and not np.any(res.x_hat)


def test_noiseless_k4_channel_recovered():
    n_t, n_r, g_t, g_r = 16, 8, 16, 8
    cfg = SystemConfig(N_t=n_t, N_r=n_r, G_t=g_t, G_r=g_r, L_t=4, L_r=4)
    A_BSD = make_dictionary(ArrayGeometry(n_t), g_t)
    A_MSD = make_dictionary(ArrayGeometry(n_r), g_r)
    plan = random_training("A5", "A5", "MC", 24, 4, 3, N_t=n_t, N_r=n_r)
    sens = sensing_matrix(plan, dictionaries=(A_BSD, A_MSD), sigma_n2=0.0)
    ch = sample_channel(ChannelParams(4, 1, True, g_t, g_r), cfg, 2)
    y, _ = simulate_measurements(ch.H, plan, 1.0, 0.0, 0)
    res = omp_estimate(sens, y, A_MSD, A_BSD, epsilon=0.0)
    assert sorted(res.support) == sorted(np.flatnonzero(ch.x))
    assert nmse(ch.H, res.H_hat) < 1e-18


def test_square_invertible_system_solved_exactly():
    rng = np.random.default_rng(2)
    for _ in range(20):
        A = crand(rng, 6, 6)
        y = crand(rng, 6)
        res = omp(A, y, max_sparsity=6, epsilon=0.0)
        np.testing.assert_allclose(res.x_hat, np.linalg.solve(A, y), rtol=1e-8, atol=1e-8)


def best_subset(A, y, K):
    best, arg = np.inf, None
    for S in itertools.combinations(range(A.shape[1]), K):
        cols = A[:, S]
        r = y - cols @ np.linalg.lstsq(cols, y, rcond=None)[0]
        if np.linalg.norm(r) < best - 1e-12:
            best, arg = np.linalg.norm(r), sorted(S)
    return arg


def test_matches_brute_force_under_coherence_condition():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 60:
        N = int(rng.integers(4, 13))
        K = int(rng.integers(1, 3))
        M = int(rng.integers(N // 2 + 2, N + 4))
        A = crand(rng, M, N)
        if mutual_coherence(A) >= 1 / (2 * K - 1):
            continue
        x = np.zeros(N, dtype=complex)
        x[rng.choice(N, K, replace=False)] = crand(rng, K)
        y = A @ x
        assert sorted(omp(A, y, max_sparsity=K).support) == best_subset(A, y, K)
        checked += 1


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 12), st.integers(2, 30), st.integers(0, 2**32 - 1), st.floats(0, 5))
def test_residual_nonincreasing(m, n, seed, eps):
    rng = np.random.default_rng(seed)
    res = omp(crand(rng, m, n), crand(rng, m), epsilon=eps)
    h = res.residual_history
    assert all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))


def test_stops_on_threshold():
    rng = np.random.default_rng(4)
    A = crand(rng, 20, 40)
    y = crand(rng, 20)
    eps = 0.5 * np.linalg.norm(y) ** 2
    res = omp(A, y, epsilon=eps)
    assert res.residual_norm ** 2 <= eps
    assert res.residual_history[-2] ** 2 > eps


def test_max_sparsity_respected():
    A = crand(np.random.default_rng(5), 20, 40)
    res = omp(A, crand(np.random.default_rng(6), 20), max_sparsity=3)
    assert res.iterations == 3 and len(res.support) == 3
    assert np.count_nonzero(res.x_hat) == 3


def test_rank_deficient_flag():
    a = np.array([1.0, 1.0, 0.0])
    A = np.column_stack([a, 2 * a, [0.0, 0.0, 1.0]])
    res = omp(A, np.array([1.0, 0.0, 1e-3]), epsilon=0.0, max_sparsity=3)
    assert res.rank_deficient
    assert res.support == [0, 2]
    assert res.residual_norm == pytest.approx(np.sqrt(0.5))


def test_ties_go_to_lowest_index():
    A = np.eye(3)
    res = omp(A, np.array([1.0, 1.0, 1.0]), max_sparsity=1)
    assert res.support == [0]


def test_omp_input_errors():
    with pytest.raises(ValueError):
        omp(np.array([[1.0, 0.0], [0.0, 0.0]]), np.ones(2))
    with pytest.raises(ValueError):
        omp(np.eye(2), np.ones(3))
    with pytest.raises(ValueError):
        omp(np.eye(2), np.ones(2), max_sparsity=0)


def test_estimate_round_trip_and_json():
    rng = np.random.default_rng(7)
    A_BSD = make_dictionary(ArrayGeometry(6), 8)
    A_MSD = make_dictionary(ArrayGeometry(4), 6)
    plan = random_training("A1", "A1", "MC", 10, 2, 1, N_t=6, N_r=4)
    sens = sensing_matrix(plan, dictionaries=(A_BSD, A_MSD))
    res = omp_estimate(sens, crand(rng, sens.n_measurements), A_MSD, A_BSD, rho=2.0)
    np.testing.assert_allclose(res.H_hat, A_MSD @ unvec(res.x_hat, 6) @ A_BSD.conj().T, atol=1e-12)
    assert len(res.support) == np.count_nonzero(res.x_hat)
    record = json.loads(json.dumps(res.to_json()))
    assert record["support"] == res.support and record["length"] == 48


def test_default_epsilon_examples():
    plan = random_training("A5", "A5", "MC", 10, 3, 0, N_t=8, N_r=8)
    assert default_epsilon(sensing_matrix(plan, sigma_n2=0.0)) == 0.0
    assert default_epsilon(sensing_matrix(plan, sigma_n2=0.5)) == pytest.approx(0.5 * 30)
    sc = random_training("A1", "A1", "SC", 5, 6, 0, N_t=8, N_r=8)
    assert sc.combiner_gain == 8
    assert default_epsilon(sensing_matrix(sc, sigma_n2=0.5)) == pytest.approx(0.5 * 8 * 30)


def test_whitening_gives_unit_noise():
    plan = random_training("A1", "A3", "MC", 4, 3, 2, N_t=4, N_r=6)
    A_BSD = make_dictionary(ArrayGeometry(4), 4)
    A_MSD = make_dictionary(ArrayGeometry(6), 6)
    sens = sensing_matrix(plan, dictionaries=(A_BSD, A_MSD), sigma_n2=2.0)
    y = np.ones(sens.n_measurements)
    A_w, y_w, eps = whiten(sens, y)
    T = A_w @ np.linalg.pinv(sens.A)
    C = T @ sens.noise_cov @ T.conj().T
    np.testing.assert_allclose(C, np.eye(int(eps)), atol=1e-8)


# least squares


def test_ls_noiseless_is_exact():
    rng = np.random.default_rng(8)
    plan = ls_orthogonal_training("A2", 4, 4, 4, 8, L_r=2)
    Phi = sensing_matrix(plan).Phi
    H = crand(rng, 4, 4)
    np.testing.assert_allclose(ls_estimate(Phi, np.sqrt(3.0) * Phi @ vec(H), 4, rho=3.0), H, atol=1e-12)


def test_ls_identity_sensing():
    y = np.arange(6) + 1j
    np.testing.assert_array_equal(ls_estimate(np.eye(6), y, 2), unvec(y, 2))


def test_ls_is_linear():
    rng = np.random.default_rng(9)
    Phi = crand(rng, 20, 12)
    est = LeastSquaresEstimator(Phi, 3)
    y1, y2 = crand(rng, 20), crand(rng, 20)
    a, b = 1.5 - 2j, -0.25 + 0.5j
    np.testing.assert_allclose(est(a * y1 + b * y2), a * est(y1) + b * est(y2), atol=1e-10)


def test_ls_refuses_rank_deficient():
    with pytest.raises(RankDeficientError, match="N_t\\*N_r"):
        ls_estimate(np.ones((3, 4)), np.ones(3), 2)
    Phi = np.zeros((6, 4))
    Phi[:4, :3] = np.eye(4)[:, :3]
    with pytest.raises(RankDeficientError):
        ls_estimate(Phi, np.ones(6), 2)


@pytest.mark.slow
def test_ls_mse_matches_formula_small():
    n_t, n_r = 8, 4
    plan = ls_orthogonal_training("A5", n_t, n_r, n_t, n_r)
    est = LeastSquaresEstimator(sensing_matrix(plan).Phi, n_r)
    rng = np.random.default_rng(10)
    err = []
    for _ in range(1000):
        H = crand(rng, n_r, n_t) / np.sqrt(2)
        y, _ = simulate_measurements(H, plan, 1.0, 1.0, rng)
        err.append(np.linalg.norm(H - est(y)) ** 2)
    J = ls_mmse_bound(1.0, n_t, n_r, plan.total_power)
    assert J == 8 * 8 * 4 / 8
    assert np.mean(err) == pytest.approx(J, rel=0.05)


# exhaustive beam scan


def scan(n_t, n_r, K, seed):
    cfg = SystemConfig(N_t=n_t, N_r=n_r, G_t=n_t, G_r=n_r, L_t=2, L_r=2, N_s=1)
    A_BSD = make_dictionary(ArrayGeometry(n_t), n_t)
    A_MSD = make_dictionary(ArrayGeometry(n_r), n_r)
    ch = sample_channel(ChannelParams(K, 1, True, n_t, n_r), cfg, seed)
    plan = exhaustive_search_plan(n_t, n_r, n_t, n_r)
    y, _ = simulate_measurements(ch.H, plan, 1.0, 0.0, 0)
    return ch, exhaustive_search_estimate(plan, y, K, A_MSD, A_BSD)


def test_scan_single_path():
    ch, res = scan(8, 4, 1, 1)
    assert res.support == list(np.flatnonzero(ch.x))
    np.testing.assert_allclose(res.x_hat, ch.x, atol=1e-12)


def test_scan_four_paths():
    for seed in range(5):
        ch, res = scan(8, 8, 4, seed)
        assert res.support == sorted(np.flatnonzero(ch.x))
        assert nmse(ch.H, res.H_hat) < 1e-20


def test_scan_plan_is_feasible_and_sized():
    plan = exhaustive_search_plan(8, 4, 16, 8)
    assert plan.n_measurements == 16 * 8
    assert plan.is_feasible()


def test_scan_rejects_wrong_count():
    plan = exhaustive_search_plan(4, 4, 4, 4)
    A = make_dictionary(ArrayGeometry(4), 4)
    with pytest.raises(ValueError, match="G_t\\*G_r"):
        exhaustive_search_estimate(plan, np.ones(15), 1, A, A)


def test_scan_off_grid_floor():
    n_t, n_r, g = 8, 8, 8
    cfg = SystemConfig(N_t=n_t, N_r=n_r, G_t=g, G_r=g, L_t=2, L_r=2, N_s=1)
    A = make_dictionary(ArrayGeometry(8), g)
    ch = sample_channel(ChannelParams(2, 3, False, g, g), cfg, 4)
    plan = exhaustive_search_plan(n_t, n_r, g, g)
    y, _ = simulate_measurements(ch.H, plan, 1.0, 0.0, 0)
    assert nmse(ch.H, exhaustive_search_estimate(plan, y, 4, A, A).H_hat) > 1e-3
