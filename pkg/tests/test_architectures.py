import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridbeam.architectures import (
    KINDS,
    Architecture,
    PowerModel,
    bit_rate,
    full_digital_power,
    is_feasible,
    power_reduction,
    power_table,
    random_combiner,
    receiver_power,
    subset_blocks,
)


def test_selection_identity_is_feasible_a5():
    assert is_feasible(np.eye(16)[:, :4], "A5")


def test_constant_phase_is_feasible_a1():
    assert is_feasible(np.ones((8, 3)) * np.exp(0.7j), "A1")


def test_two_ones_infeasible_a5():
    W = np.eye(8)[:, :2].copy()
    W[3, 0] = 1.0
    assert not is_feasible(W, "A5")


def test_a5_shared_antenna_infeasible():
    W = np.zeros((8, 2))
    W[1, :] = 1.0
    assert not is_feasible(W, "A5")
    assert is_feasible(W, "A5", row_constraint=False)


def test_a2_energy_outside_subset_infeasible():
    W = np.zeros((8, 2), dtype=complex)
    W[:4, 0] = 1.0
    W[4:, 1] = 1.0
    assert is_feasible(W, "A2")
    W[5, 0] = 1.0
    assert not is_feasible(W, "A2")


def test_a6_needs_own_subset():
    W = np.zeros((8, 2))
    W[1, 0] = W[2, 1] = 1.0
    assert not is_feasible(W, "A6")
    W[2, 1], W[6, 1] = 0.0, 1.0
    assert is_feasible(W, "A6")


def test_a3_rejects_non_binary():
    assert is_feasible(np.array([[1.0, 0.0], [1.0, 1.0]]), "A3")
    assert not is_feasible(np.array([[0.5, 0.0], [1.0, 1.0]]), "A3")


def test_unit_modulus_tolerance():
    W = np.ones((4, 1)) * (1 + 5e-10)
    assert is_feasible(W, "A1")
    assert not is_feasible(W * (1 + 1e-6), "A1")


def test_feasibility_rejects_vector():
    with pytest.raises(ValueError):
        is_feasible(np.ones(4), "A1")


@pytest.mark.parametrize("kind", KINDS)
def test_random_combiners_feasible(kind):
    for seed in range(1000):
        W = random_combiner(kind, 16, 4, seed)
        assert W.shape == (16, 4)
        assert is_feasible(W, kind), (kind, seed)


def test_unknown_architecture():
    with pytest.raises(ValueError):
        Architecture("A7")
    with pytest.raises(ValueError):
        Architecture("A1", n_active=2)


def test_subset_blocks_contiguous():
    blocks = subset_blocks(16, 4)
    assert [list(b) for b in blocks] == [list(range(4 * i, 4 * i + 4)) for i in range(4)]


def test_default_component_values():
    m = PowerModel()
    assert (m.p_lna, m.p_adc, m.p_rfc, m.p_bb, m.p_ps, m.p_sw) == (20, 200, 40, 200, 30, 5)
    assert PowerModel.from_reference(20.0) == m


def test_full_digital_reference():
    assert full_digital_power(16) == 4360
    assert full_digital_power(1) == 460
    assert full_digital_power(0) == 200


@pytest.mark.parametrize(
    "kind, expected",
    [
        ("A1", 16 * 5 * 20 + 16 * 4 * 30 + 4 * 240 + 200),
        ("A2", 16 * 20 + 16 * 30 + 4 * 240 + 200),
        ("A3", (16 + 4 * 8) * 20 + 4 * 8 * 5 + 4 * 240 + 200),
        ("A4", 4 * 2 * (20 + 5) + 4 * 240 + 200),
        ("A5", 4 * 25 + 4 * 240 + 200),
        ("A6", 4 * 25 + 4 * 240 + 200),
    ],
)
def test_receiver_power_hand_values(kind, expected):
    assert receiver_power(kind, 16, 4) == expected


def test_hand_values_in_milliwatts():
    assert receiver_power("A5", 16, 4) == 1260
    assert receiver_power("A1", 16, 4) == 4680


def test_half_active_switches():
    assert Architecture("A3").active_switches(16, 4) == 8
    assert Architecture("A4").active_switches(16, 4) == 2
    assert Architecture("A4").active_switches(16, 8) == 1
    assert Architecture("A3", n_active=3).active_switches(16, 4) == 3
    with pytest.raises(ValueError):
        Architecture("A4", n_active=5).active_switches(16, 4)


def test_power_reduction():
    assert power_reduction("A5", 16, 4) == pytest.approx(1260 / 4360)
    assert power_reduction("A5", 16, 4) == pytest.approx(0.289, abs=1e-3)
    model = PowerModel(p_ps=0.0, p_sw=0.0)
    # A2 with one chain per antenna and free phase shifters equals the digital receiver
    assert power_reduction("A2", 16, 16, model) == pytest.approx(1.0)


def test_bit_rate():
    assert bit_rate(10, 5e8) == 5e9
    assert bit_rate(0, 123.0) == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 32), st.integers(0, 31))
def test_a5_equals_a6(n_r, l_off):
    l_r = 1 + l_off % n_r
    assert receiver_power("A5", n_r, l_r) == receiver_power("A6", n_r, l_r)


@pytest.mark.parametrize("kind", KINDS)
def test_power_monotone_in_rf_chains(kind):
    values = [receiver_power(kind, 16, l) for l in range(1, 17)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_power_table_rows():
    rows = power_table(16, [4])
    assert rows[0]["arch"] == "D" and rows[0]["power_mW"] == 4360
    by_arch = {r["arch"]: r for r in rows[1:]}
    assert set(by_arch) == set(KINDS)
    assert by_arch["A5"]["eta"] == pytest.approx(1260 / 4360)
    assert set(rows[1]) == {"arch", "N_r", "L_r", "power_mW", "eta"}
