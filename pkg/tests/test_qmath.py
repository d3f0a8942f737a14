import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgate_bench import qmath
from qgate_bench.errors import DimensionMismatch, InvalidState, LeakageDominates, NonUnitaryInput
from qgate_bench.gates import u_cz
from qgate_bench.qmath import I2, X, Z, SuperOperator

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def depolarizing(gamma, dim=4):
    """rho -> gamma rho + (1 - gamma) I/d, built from its action on matrix units."""
    m = np.zeros((dim * dim, dim * dim), dtype=complex)
    for k in range(dim * dim):
        e = np.zeros(dim * dim, dtype=complex)
        e[k] = 1
        rho = qmath.unvec(e, dim)
        out = gamma * rho + (1 - gamma) * np.trace(rho) * np.eye(dim) / dim
        m[:, k] = qmath.vec(out)
    return SuperOperator(m)


def brute_chi(channel: SuperOperator):
    """chi_mn from E(rho) = sum chi_mn P_m rho P_n^dag by solving the linear system directly."""
    paulis = qmath.pauli_basis(2)
    cols = []
    for m, n in itertools.product(range(16), repeat=2):
        op = np.zeros((16, 16), dtype=complex)
        for k in range(16):
            e = np.zeros(16, dtype=complex)
            e[k] = 1
            op[:, k] = qmath.vec(paulis[m] @ qmath.unvec(e, 4) @ paulis[n].conj().T)
        cols.append(op.reshape(-1))
    a = np.array(cols).T
    sol, *_ = np.linalg.lstsq(a, channel.matrix.reshape(-1), rcond=None)
    return sol.reshape(16, 16)


# -- kron ---------------------------------------------------------------------------------


def test_kron_identity():
    assert np.allclose(qmath.kron(I2, I2), np.eye(4))


def test_kron_xx_is_antidiagonal():
    assert np.allclose(qmath.kron(X, X), np.fliplr(np.eye(4)))


def test_kron_z_identity():
    assert np.allclose(qmath.kron(Z, I2), np.diag([1, 1, -1, -1]))


def test_kron_three_factors_dims_multiply():
    assert qmath.kron(np.eye(2), np.eye(3), np.eye(3)).shape == (18, 18)


# -- unitary channels ---------------------------------------------------------------------


def test_identity_unitary_gives_identity_superop():
    assert np.allclose(qmath.unitary_to_superop(np.eye(4)).matrix, np.eye(16))


def test_cz_superop_matches_elementwise_conjugation():
    u = u_cz(np.pi)
    s = qmath.unitary_to_superop(u)
    for i, j in itertools.product(range(4), repeat=2):
        unit = np.zeros((4, 4), dtype=complex)
        unit[i, j] = 1
        assert np.allclose(s.apply(unit), u @ unit @ u.conj().T, atol=1e-12)
    # diagonal, with -1 exactly on coherences that involve |11> once
    d = np.diag(s.matrix)
    assert np.allclose(s.matrix, np.diag(d))
    expected = np.array([(-1) ** ((i == 3) + (j == 3)) for j in range(4) for i in range(4)])
    assert np.allclose(d, expected)


def test_non_unitary_rejected():
    with pytest.raises(NonUnitaryInput):
        qmath.unitary_to_superop(np.diag([1, 1, 1, 1.1]))


def test_superop_dimension_checked():
    with pytest.raises(DimensionMismatch):
        SuperOperator(np.eye(15))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_random_unitary_channel_preserves_trace(seed):
    rng = np.random.default_rng(seed)
    u = qmath.random_unitary(4, rng)
    rho = qmath.random_density_matrix(4, rng)
    out = qmath.unitary_to_superop(u).apply(rho)
    assert abs(np.trace(out) - np.trace(rho)) < 1e-9
    assert np.allclose(out, u @ rho @ u.conj().T, atol=1e-10)
    qmath.check_density_matrix(out)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_channel_composition_matches_product_unitary(seed):
    rng = np.random.default_rng(seed)
    u = qmath.random_unitary(4, rng)
    rho = qmath.random_density_matrix(4, rng)
    s = qmath.unitary_to_superop(u)
    twice = s.then(s).apply(rho)
    once = qmath.unitary_to_superop(u @ u).apply(rho)
    assert np.allclose(twice, once, atol=1e-9)


# -- chi matrices -------------------------------------------------------------------------


def test_identity_channel_chi():
    chi = qmath.superop_to_chi(SuperOperator.identity(4)).chi
    expected = np.zeros((16, 16))
    expected[0, 0] = 1
    assert np.allclose(chi, expected, atol=1e-12)


def test_cz_chi_rank_one():
    chi = qmath.superop_to_chi(qmath.unitary_to_superop(u_cz(np.pi))).chi
    assert np.linalg.matrix_rank(chi, tol=1e-9) == 1
    assert np.isclose(np.trace(chi @ chi).real, 1.0)


def test_fully_depolarizing_chi_is_uniform():
    chi = qmath.superop_to_chi(depolarizing(0.0)).chi
    assert np.allclose(chi, np.eye(16) / 16, atol=1e-12)
    assert np.allclose(chi, brute_chi(depolarizing(0.0)), atol=1e-10)


def test_chi_matches_brute_force_decomposition():
    rng = np.random.default_rng(4)
    u = qmath.random_unitary(4, rng)
    s = qmath.unitary_to_superop(u).then(depolarizing(0.93))
    assert np.allclose(qmath.superop_to_chi(s).chi, brute_chi(s), atol=1e-10)


def test_chi_requires_two_qubits():
    with pytest.raises(DimensionMismatch):
        qmath.superop_to_chi(SuperOperator.identity(2))


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(min_value=0.0, max_value=1.0))
def test_chi_round_trip_random_cp_map(seed, gamma):
    rng = np.random.default_rng(seed)
    s = qmath.unitary_to_superop(qmath.random_unitary(4, rng)).then(depolarizing(gamma))
    chi = qmath.superop_to_chi(s)
    assert np.allclose(qmath.chi_to_superop(chi).matrix, s.matrix, atol=1e-9)
    assert np.allclose(chi.chi, chi.chi.conj().T, atol=1e-10)
    assert np.isclose(np.trace(chi.chi).real, 1.0, atol=1e-10)


# -- process fidelity -----------------------------------------------------------------------


def test_self_fidelity_is_one():
    chi0 = qmath.superop_to_chi(qmath.unitary_to_superop(u_cz(np.pi)))
    assert np.isclose(qmath.process_fidelity(chi0, chi0), 1.0)


def test_fully_depolarizing_fidelity_is_one_sixteenth():
    rng = np.random.default_rng(1)
    chi0 = qmath.superop_to_chi(qmath.unitary_to_superop(qmath.random_unitary(4, rng)))
    chi = qmath.superop_to_chi(depolarizing(0.0))
    assert np.isclose(qmath.process_fidelity(chi, chi0), 1 / 16)


@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.99])
def test_partially_depolarized_unitary_fidelity(gamma):
    u = qmath.random_unitary(4, np.random.default_rng(2))
    s = qmath.unitary_to_superop(u).then(depolarizing(gamma))
    assert np.isclose(1 - qmath.qpt_infidelity(s, u), gamma + (1 - gamma) / 16, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, seeds)
def test_process_fidelity_symmetric(seed_a, seed_b):
    ra, rb = np.random.default_rng(seed_a), np.random.default_rng(seed_b)
    a = qmath.superop_to_chi(qmath.unitary_to_superop(qmath.random_unitary(4, ra)).then(depolarizing(0.8)))
    b = qmath.superop_to_chi(qmath.unitary_to_superop(qmath.random_unitary(4, rb)))
    assert abs(qmath.process_fidelity(a, b) - qmath.process_fidelity(b, a)) < 1e-10


def test_process_fidelity_dimension_checked():
    chi = qmath.superop_to_chi(SuperOperator.identity(4))
    with pytest.raises(DimensionMismatch):
        qmath.process_fidelity(chi, qmath.ProcessMatrix(np.eye(4)))


# -- purity and states ---------------------------------------------------------------------


def test_purity_pure_and_mixed():
    assert np.isclose(qmath.purity(qmath.projector(qmath.ket(0, 4))), 1.0)
    assert np.isclose(qmath.purity(np.eye(4) / 4), 0.25)


def test_purity_of_depolarized_pure_state():
    rho = depolarizing(0.9).apply(qmath.projector(qmath.ket(0, 4)))
    assert np.isclose(qmath.purity(rho), 0.8575)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_purity_invariant_under_unitaries(seed):
    rng = np.random.default_rng(seed)
    rho = qmath.random_density_matrix(4, rng)
    u = qmath.random_unitary(4, rng)
    assert abs(qmath.purity(u @ rho @ u.conj().T) - qmath.purity(rho)) < 1e-10
    assert 0.25 - 1e-12 <= qmath.purity(rho) <= 1 + 1e-12


def test_density_matrix_checks():
    with pytest.raises(InvalidState):
        qmath.check_density_matrix(np.diag([0.5, 0.4, 0, 0]))
    with pytest.raises(InvalidState):
        qmath.check_density_matrix(np.diag([1.2, -0.2, 0, 0]))
    bad = np.eye(4) / 4
    bad[0, 1] = 0.1
    with pytest.raises(InvalidState):
        qmath.check_density_matrix(bad)
    with pytest.raises(DimensionMismatch):
        qmath.check_density_matrix(np.ones((2, 3)))


def test_is_hermitian_tolerance():
    m = np.array([[1, 1j], [-1j, 2]])
    assert qmath.is_hermitian(m)
    assert not qmath.is_hermitian(m + np.array([[0, 1e-9], [0, 0]]))


# -- projection onto the computational subspace -----------------------------------------------


def _full_state(*levels_weights):
    rho = np.zeros((27, 27), dtype=complex)
    for (a, b, c), w in levels_weights:
        i = 9 * a + 3 * b + c
        rho[i, i] = w
    return rho


def test_projection_of_ground_state():
    sub, leak = qmath.project_computational(_full_state(((0, 0, 0), 1.0)), (3, 3, 3))
    assert np.allclose(sub, np.diag([1, 0, 0, 0]))
    assert leak == pytest.approx(0.0)


def test_projection_fully_leaked_state():
    with pytest.raises(LeakageDominates):
        qmath.project_computational(_full_state(((2, 0, 0), 1.0)), (3, 3, 3))
    _, leak = qmath.project_computational(_full_state(((2, 0, 0), 1.0)), (3, 3, 3), renormalize=False)
    assert leak == pytest.approx(1.0)


def test_projection_half_leaked_mixture():
    sub, leak = qmath.project_computational(_full_state(((0, 1, 0), 0.5), ((2, 0, 0), 0.5)), (3, 3, 3))
    assert np.allclose(sub, np.diag([0, 1, 0, 0]))
    assert leak == pytest.approx(0.5)


def test_projection_traces_out_coupler_coherently():
    # (|000> + |001>)/sqrt2: the coupler excitation is traced, not discarded
    psi = np.zeros(27, dtype=complex)
    psi[0] = psi[1] = 1 / np.sqrt(2)
    sub, leak = qmath.project_computational(np.outer(psi, psi.conj()), (3, 3, 3))
    assert np.allclose(sub, np.diag([1, 0, 0, 0]))
    assert leak == pytest.approx(0.0)


def test_projection_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        qmath.project_computational(np.eye(8) / 8, (3, 3, 3))
