import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridbeam._util import unvec, vec
from hybridbeam.channel import (
    ArrayGeometry,
    ChannelParams,
    Path,
    array_response,
    atom_index,
    channel_dictionary,
    channel_from_paths,
    make_dictionary,
    nmse,
    sample_channel,
)
from hybridbeam.config import SystemConfig


def test_array_response_broadside():
    np.testing.assert_allclose(array_response(ArrayGeometry(4), 0.0), np.ones(4) / 2, atol=1e-15)


def test_array_response_endfire_alternates_sign():
    a = array_response(ArrayGeometry(2), np.pi / 2)
    np.testing.assert_allclose(a, np.array([1, -1]) / np.sqrt(2), atol=1e-15)


def test_array_response_phase_increment():
    a = array_response(ArrayGeometry(8), 0.3)
    assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-14)
    step = np.angle(a[1:] / a[:-1])
    expected = np.angle(np.exp(1j * np.pi * np.sin(0.3)))
    np.testing.assert_allclose(step, expected, atol=1e-12)


def test_array_geometry_rejects_bad_values():
    with pytest.raises(ValueError):
        ArrayGeometry(0)
    with pytest.raises(ValueError):
        ArrayGeometry(4, 0.0)


def test_square_dictionary_is_unitary():
    A = make_dictionary(ArrayGeometry(16), 16)
    np.testing.assert_allclose(A.conj().T @ A, np.eye(16), atol=1e-12)


def test_two_point_dictionary_is_dft():
    A = make_dictionary(ArrayGeometry(2), 2)
    cols = {tuple(np.round(A[:, g] * np.sqrt(2), 12)) for g in range(2)}
    assert cols == {(1 + 0j, 1 + 0j), (1 + 0j, -1 + 0j)}


def test_oversampled_dictionary_coherence_is_dirichlet():
    N, G = 16, 32
    A = make_dictionary(ArrayGeometry(N), G)
    assert A.shape == (N, G)
    np.testing.assert_allclose(np.linalg.norm(A, axis=0), 1.0, atol=1e-12)
    du = 2.0 / G
    dirichlet = abs(np.sin(np.pi * N * du / 2) / (N * np.sin(np.pi * du / 2)))
    assert abs(np.vdot(A[:, 0], A[:, 1])) == pytest.approx(dirichlet, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 24), st.integers(1, 48))
def test_dictionary_columns_unit_norm(n, g):
    A = make_dictionary(ArrayGeometry(n), g)
    np.testing.assert_allclose(np.linalg.norm(A, axis=0), 1.0, atol=1e-12)


def test_make_dictionary_rejects_empty_grid():
    with pytest.raises(ValueError):
        make_dictionary(ArrayGeometry(4), 0)


def test_channel_dictionary_2x2_unitary():
    A = make_dictionary(ArrayGeometry(2), 2)
    Psi = channel_dictionary(A, A)
    assert Psi.shape == (4, 4)
    np.testing.assert_allclose(Psi.conj().T @ Psi, np.eye(4), atol=1e-12)


def test_channel_dictionary_full_size():
    A_BSD = make_dictionary(ArrayGeometry(64), 64)
    A_MSD = make_dictionary(ArrayGeometry(16), 16)
    assert channel_dictionary(A_BSD, A_MSD).shape == (1024, 1024)


def test_planted_atoms_on_4x4_grid():
    A_BSD = make_dictionary(ArrayGeometry(4), 4)
    A_MSD = make_dictionary(ArrayGeometry(4), 4)
    Psi = channel_dictionary(A_BSD, A_MSD)
    for g_t in range(4):
        for g_r in range(4):
            H = np.outer(A_MSD[:, g_r], A_BSD[:, g_t].conj())
            k = atom_index(g_t, g_r, 4)
            np.testing.assert_allclose(Psi[:, k], vec(H), atol=1e-14)


def test_vec_unvec_round_trip():
    rng = np.random.default_rng(3)
    H = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    np.testing.assert_array_equal(unvec(vec(H), 3), H)


def test_quantized_channel_has_k_nonzeros():
    cfg = SystemConfig(N_t=64, N_r=16, G_t=64, G_r=16)
    ch = sample_channel(ChannelParams(4, 1, True, 64, 16), cfg, 11)
    assert np.count_nonzero(ch.x) == 4
    assert len(ch.paths) == 4


def test_quantized_round_trip():
    cfg = SystemConfig(N_t=16, N_r=8, L_t=4, L_r=4)
    for seed in range(10):
        ch = sample_channel(ChannelParams(4, 2, True, 32, 16), cfg, seed)
        A_BSD = make_dictionary(ArrayGeometry(16), 32)
        A_MSD = make_dictionary(ArrayGeometry(8), 16)
        H = A_MSD @ unvec(ch.x, 16) @ A_BSD.conj().T
        assert np.linalg.norm(ch.H - H) < 1e-10 * np.linalg.norm(ch.H)


def test_single_unit_path_normalization():
    n_t, n_r = 8, 4
    H = channel_from_paths([Path(1 + 0j, float(np.arcsin(-1.0)), float(np.arcsin(-1.0)))], n_t, n_r)
    assert np.linalg.matrix_rank(H) == 1
    assert np.linalg.norm(H) ** 2 == pytest.approx(n_t * n_r, rel=1e-12)


def test_unquantized_paths_rebuild_channel():
    cfg = SystemConfig(N_t=16, N_r=8, L_t=4, L_r=4)
    ch = sample_channel(ChannelParams(4, 6, False, 16, 8), cfg, 5)
    assert len(ch.paths) == 24
    np.testing.assert_allclose(channel_from_paths(ch.paths, 16, 8), ch.H, atol=1e-12)
    for p in ch.paths:
        assert 0 <= p.aoa < 2 * np.pi and 0 <= p.aod < 2 * np.pi


@pytest.mark.slow
def test_average_channel_energy():
    cfg = SystemConfig(N_t=16, N_r=8, L_t=4, L_r=4)
    params = ChannelParams(4, 6, False, 16, 8)
    energy = [np.linalg.norm(sample_channel(params, cfg, (9, t)).H) ** 2 for t in range(10000)]
    assert np.mean(energy) == pytest.approx(16 * 8, rel=0.03)


def test_same_seed_same_channel():
    cfg = SystemConfig()
    a = sample_channel(ChannelParams(), cfg, (1, 2, 3))
    b = sample_channel(ChannelParams(), cfg, (1, 2, 3))
    assert a.H.tobytes() == b.H.tobytes()
    assert a.x.tobytes() == b.x.tobytes()
    assert a.paths == b.paths
    assert a.to_json() == b.to_json()


def test_too_many_paths_rejected():
    cfg = SystemConfig(N_t=4, N_r=4, L_t=4, L_r=4)
    with pytest.raises(ValueError):
        sample_channel(ChannelParams(4, 5, True, 4, 4), cfg, 0)


def test_nmse_examples():
    rng = np.random.default_rng(0)
    H = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
    assert nmse(H, H) == 0.0
    assert nmse(H, np.zeros_like(H)) == pytest.approx(1.0)
    assert nmse(H, 2 * H) == pytest.approx(1.0)


def test_nmse_zero_reference_raises():
    with pytest.raises(ValueError):
        nmse(np.zeros((2, 2)), np.ones((2, 2)))
