import numpy as np
import pytest

from bbgky_qem.hamiltonian import Hamiltonian, TimeCoupling, build_current, build_schwinger
from bbgky_qem.pauli import PauliString
from bbgky_qem.simulator import (
    MeasurementTable,
    NoiseSpec,
    attenuate,
    basis_state,
    dense_hamiltonian,
    expectation,
    ground_state,
    ideal_expectations,
    measure_table,
    modified_deviation,
    noisy_evolve,
    sample_shots,
    trotter_evolve,
)

P = PauliString.parse
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)


def const_h(pairs, n):
    return Hamiltonian.from_terms([(P(s), TimeCoupling.constant(c)) for s, c in pairs], n)


def test_expectation_basics():
    assert expectation(basis_state("0"), P("Z1")) == 1.0
    assert expectation(basis_state("1"), P("Z1")) == -1.0
    assert expectation(PLUS, P("X1")) == pytest.approx(1.0)
    mixed = np.eye(4) / 4
    for s in ("X1", "Y2", "Z1 X2"):
        assert expectation(mixed, P(s)) == 0.0
    assert expectation(basis_state("01"), PauliString.identity()) == 1.0


def test_ground_state_single_qubit():
    psi, e = ground_state(const_h([("Z1", -1.0)], 1))
    assert e == pytest.approx(-1.0) and np.allclose(psi, [1, 0])
    psi, e = ground_state(const_h([("Z1", 1.0)], 1))
    assert np.allclose(psi, [0, 1])


def test_ground_state_degenerate_is_equal_weight():
    # Z1 Z2 has a two-fold ground space {|01>, |10>}
    psi, _ = ground_state(const_h([("Z1 Z2", 1.0)], 2))
    assert np.allclose(np.abs(psi) ** 2, [0, 0.5, 0.5, 0])


def test_ground_state_schwinger_energy():
    h = build_schwinger(4, 1.0, 0.5, 0.2)
    psi, e = ground_state(h)
    H = dense_hamiltonian(h, 0.0)
    assert np.vdot(psi, H @ psi).real == pytest.approx(np.linalg.eigvalsh(H)[0], abs=1e-12)
    assert e == pytest.approx(np.linalg.eigvalsh(H)[0], abs=1e-12)


@pytest.mark.parametrize("nT", [1, 3, 17])
def test_single_term_rotation_exact(nT):
    w, T = 0.8, 2.0
    states = trotter_evolve(PLUS, const_h([("Z1", w)], 1), nT, T)
    for s, psi in enumerate(states):
        t = s * T / nT
        assert expectation(psi, P("X1")) == pytest.approx(np.cos(2 * w * t), abs=1e-12)
        assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)


def test_trotter_rejects_zero_slices():
    with pytest.raises(ValueError):
        trotter_evolve(PLUS, const_h([("Z1", 1.0)], 1), 0, 1.0)


def test_commuting_terms_order_free():
    a = const_h([("Z1", 0.3), ("Z1 Z2", 0.7), ("Z2", -0.2)], 2)
    b = const_h([("Z2", -0.2), ("Z1", 0.3), ("Z1 Z2", 0.7)], 2)
    psi0 = np.full(4, 0.5, dtype=complex)
    for x, y in zip(trotter_evolve(psi0, a, 5, 1.5), trotter_evolve(psi0, b, 5, 1.5)):
        assert np.allclose(x, y, atol=1e-13)


def test_noiseless_density_matches_statevector():
    h = build_schwinger(4, 1.0, 0.5, 0.2)
    psi0, _ = ground_state(h)
    pure = trotter_evolve(psi0, h, 6, 1.2)
    rhos = noisy_evolve(psi0, h, 6, 1.2, 0.0)
    for psi, rho in zip(pure, rhos):
        assert np.allclose(rho, np.outer(psi, psi.conj()), atol=1e-10)


@pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
def test_depolarizing_closed_form(p):
    h = const_h([("X1", 0.4), ("Z1", 0.25)], 1)
    psi0 = np.array([np.cos(0.3), np.exp(0.7j) * np.sin(0.3)])
    pure = trotter_evolve(psi0, h, 1, 0.9)[1]
    rho = noisy_evolve(psi0, h, 1, 0.9, p)[1]
    for s in ("X1", "Y1", "Z1"):
        assert expectation(rho, P(s)) == pytest.approx((1 - 4 * p / 3) * expectation(pure, P(s)), abs=1e-12)


def test_density_invariants_and_decay():
    h = build_schwinger(4, 1.0, 0.5, 0.0)
    psi0, _ = ground_state(h)
    rhos = noisy_evolve(psi0, h, 8, 2.4, 0.05)
    zz = []
    for rho in rhos:
        assert np.allclose(rho, rho.conj().T, atol=1e-10)
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
        assert np.linalg.eigvalsh(rho).min() > -1e-9
        zz.append(abs(expectation(rho, P("Z1"))))
    assert all(b <= a + 1e-12 for a, b in zip(zz, zz[1:]))


def test_sample_shots():
    rng = np.random.default_rng(0)
    assert sample_shots(1.0, 100, rng) == 1.0
    assert sample_shots(-1.0, 100, rng) == -1.0
    x = sample_shots(0.0, 10_000, rng)
    assert abs(x) < 0.04
    # on the shot grid
    assert (x + 1) / (2 / 10_000) == pytest.approx(round((x + 1) / (2 / 10_000)))


def test_attenuate():
    assert attenuate(0.3, 0.8, 0.0, 2) == 0.3
    assert attenuate(0.3, 0.8, 1.0, 2) == 0.8
    assert attenuate(0.0, 1.0, 0.9, 1) == pytest.approx(0.9)


def test_modified_deviation():
    assert modified_deviation(0.0, 10_000) == 1.0
    assert modified_deviation(1.0, 10_000) == pytest.approx(1 - (9999 / 10001) ** 2)
    assert modified_deviation(-1.0, 10_000) == pytest.approx(1 - (9999 / 10001) ** 2)
    assert modified_deviation(0.5, 10) == pytest.approx(0.75)


def small_setup():
    h = build_schwinger(4, 1.0, 0.5, 0.2)
    strings = build_current(4, 1.0).strings + [P("Z1"), P("X1 X2")]
    return h, strings


def test_measure_table_structure():
    h, strings = small_setup()
    psi0, _ = ground_state(h)
    ideal = ideal_expectations(h, psi0, strings, 5, 1.5)
    tab = measure_table(h, strings, 5, 1.5, 1000, NoiseSpec(0.05, 0.9, 7), psi0=psi0)
    assert tab.xbar.shape == (len(strings), 6)
    assert np.array_equal(tab.xbar[:, 0], ideal[:, 0])
    assert np.all(tab.y > 0) and np.all(tab.y <= 1)
    assert np.all(np.abs(tab.xbar) <= 1)
    assert tab.dx == 2 / 1000 and tab.dt == pytest.approx(0.3)


def test_eta_one_gives_ideal_samples():
    h, strings = small_setup()
    a = measure_table(h, strings, 4, 1.2, 500, NoiseSpec(0.3, 1.0, 11))
    b = measure_table(h, strings, 4, 1.2, 500, NoiseSpec(0.0, 1.0, 11))
    assert np.array_equal(a.xbar, b.xbar)
    # pure shot sampling with no attenuation lands on the shot grid
    k = (b.xbar[:, 1:] + 1) * 500 / 2
    assert np.allclose(k, np.round(k))


def test_measure_table_seeded():
    h, strings = small_setup()
    a = measure_table(h, strings, 4, 1.2, 500, NoiseSpec(0.1, 0.9, 3))
    b = measure_table(h, strings, 4, 1.2, 500, NoiseSpec(0.1, 0.9, 3))
    c = measure_table(h, strings, 4, 1.2, 500, NoiseSpec(0.1, 0.9, 4))
    assert np.array_equal(a.xbar, b.xbar) and not np.array_equal(a.xbar, c.xbar)


def test_table_csv_round_trip():
    h, strings = small_setup()
    tab = measure_table(h, strings, 3, 0.9, 100, NoiseSpec(0.1, 0.9, 1))
    back = MeasurementTable.from_csv(tab.to_csv(), tab.meta_json())
    assert back.strings == tab.strings
    assert np.array_equal(back.xbar, tab.xbar) and np.array_equal(back.y, tab.y)
    assert back.nS == tab.nS and back.T == tab.T and back.meta["p_dep"] == 0.1


def test_static_hamiltonian_keeps_ground_state():
    h = build_schwinger(4, 1.0, 0.5, 0.0)
    psi0, _ = ground_state(h)
    H = dense_hamiltonian(h, 0.0)
    # exact propagation leaves the ground state stationary; the Trotter run drifts only at O(dt)
    vals = ideal_expectations(h, psi0, [P("Z1"), P("X1 X2")], 40, 3.0)
    assert np.ptp(vals, axis=1).max() < 0.05
    assert np.vdot(psi0, H @ psi0).real == pytest.approx(np.linalg.eigvalsh(H)[0])
