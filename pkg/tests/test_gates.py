import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgate_bench import qmath
from qgate_bench.errors import InvalidNoise
from qgate_bench.gates import (
    CZ, ISWAP, SQRot, SimpleNoiseModel, VirtualZ, canonical_angle, decoherence_channel, gate_unitary,
    idle_channel, noisy_gate_channel, sequence_unitary, tensor_channels, u_cz, u_iswap, virtual_z,
    zz_phase_unitary,
)

angles = st.floats(min_value=-20, max_value=20, allow_nan=False)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _unitary_error(u):
    return np.linalg.norm(u.conj().T @ u - np.eye(len(u)))


# -- ideal unitaries --------------------------------------------------------------------------


def test_cz_values():
    assert np.allclose(u_cz(0.0), np.eye(4))
    assert np.allclose(u_cz(math.pi), np.diag([1, 1, 1, -1]))


@settings(max_examples=50, deadline=None)
@given(angles)
def test_cz_inverse(phi):
    assert np.allclose(u_cz(phi) @ u_cz(-phi), np.eye(4), atol=1e-12)


def test_iswap_values():
    assert np.allclose(u_iswap(0.0, 0.0), np.eye(4))
    expected = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]])
    assert np.allclose(u_iswap(math.pi, 0.0), expected)


def test_half_iswap_squared():
    h = u_iswap(math.pi / 2, 0.0)
    assert np.allclose(h @ h, u_iswap(math.pi, 0.0), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(angles, angles)
def test_iswap_unitary_and_additive(theta, eta):
    assert _unitary_error(u_iswap(theta, eta)) < 1e-12
    assert np.allclose(u_iswap(theta, eta) @ u_iswap(0.7, eta), u_iswap(theta + 0.7, eta), atol=1e-12)


def test_virtual_z_values():
    assert np.allclose(virtual_z(0.0), np.eye(2))
    assert np.allclose(virtual_z(2 * math.pi), -np.eye(2))
    s2pi = qmath.unitary_to_superop(np.kron(virtual_z(2 * math.pi), np.eye(2)))
    assert np.allclose(s2pi.matrix, np.eye(16))


@settings(max_examples=50, deadline=None)
@given(angles, angles)
def test_virtual_z_composes(a, b):
    assert np.allclose(virtual_z(a) @ virtual_z(b), virtual_z(a + b), atol=1e-12)


def test_zz_phase_values():
    assert np.allclose(zz_phase_unitary(0.0, 200e-9), np.eye(4))
    u = zz_phase_unitary(-200e3, 200e-9)
    assert np.angle(u[3, 3]) == pytest.approx(0.251327, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e6, 1e6), st.floats(0, 1e-6), st.floats(0, 1e-6), angles)
def test_zz_phase_additive_and_commutes_with_cz(zeta, ta, tb, phi):
    a = zz_phase_unitary(zeta, ta)
    assert np.allclose(a @ zz_phase_unitary(zeta, tb), zz_phase_unitary(zeta, ta + tb), atol=1e-12)
    assert np.allclose(a @ u_cz(phi), u_cz(phi) @ a, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(angles, angles, st.integers(0, 1))
def test_all_gate_kinds_unitary(a, b, q):
    for kind in (CZ(a), ISWAP(a, b), VirtualZ(q, a), SQRot(q, a, b)):
        assert _unitary_error(gate_unitary(kind)) < 1e-12


def test_sqrot_pi_about_x_is_x():
    assert qmath.unitary_to_superop(gate_unitary(SQRot(0, 0.0, math.pi))).matrix == pytest.approx(
        qmath.unitary_to_superop(np.kron(qmath.X, qmath.I2)).matrix)


def test_sequence_unitary_order():
    # X on Q1 then CZ differs from CZ then X; check first gate applied first
    x = SQRot(0, 0.0, math.pi)
    got = sequence_unitary([x, CZ()])
    assert np.allclose(got, u_cz(math.pi) @ gate_unitary(x))


# -- angle canonicalisation ---------------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e3, 1e3))
def test_canonical_angle_range(phi):
    a = canonical_angle(phi)
    assert -math.pi < a <= math.pi
    assert math.isclose(math.cos(a), math.cos(phi), abs_tol=1e-9)
    assert math.isclose(math.sin(a), math.sin(phi), abs_tol=1e-9)


def test_canonical_angle_boundaries():
    assert canonical_angle(math.pi) == pytest.approx(math.pi)
    assert canonical_angle(-math.pi) == pytest.approx(math.pi)
    assert canonical_angle(3 * math.pi) == pytest.approx(math.pi)
    assert CZ(-math.pi).phi == pytest.approx(math.pi)
    assert VirtualZ(1, 2 * math.pi).phi == pytest.approx(0.0)


# -- noisy channels ---------------------------------------------------------------------------------


@pytest.mark.parametrize("kind", [CZ(), ISWAP(), ISWAP(math.pi / 2, 0.3), SQRot(1, 0.4, math.pi / 2)])
def test_noiseless_channel_is_ideal(kind):
    ch = noisy_gate_channel(kind, SimpleNoiseModel())
    assert np.allclose(ch.matrix, qmath.unitary_to_superop(gate_unitary(kind)).matrix, atol=1e-12)


def test_idle_decay_of_q1_excitation():
    noise = SimpleNoiseModel(t1=(70e-6, math.inf), t2_star=(140e-6, math.inf))
    rho = qmath.projector(qmath.ket(2, 4))  # |10>: Q1 excited
    out = idle_channel(200e-9, noise).apply(rho)
    assert out[2, 2].real == pytest.approx(math.exp(-200 / 70000), abs=1e-12)
    assert out[2, 2].real == pytest.approx(0.99715, abs=1e-5)


def test_dephasing_coherence_factor():
    # coherence of a single qubit decays as exp(-t/T2*) combining T1 and pure dephasing
    ch = decoherence_channel(1e-6, 70e-6, 50e-6)
    plus = np.full((2, 2), 0.5, dtype=complex)
    assert ch.apply(plus)[0, 1].real == pytest.approx(0.5 * math.exp(-1 / 50), rel=1e-12)


def test_tensor_channels_matches_kron_of_kraus_action():
    a = decoherence_channel(5e-6, 20e-6, 10e-6)
    b = decoherence_channel(5e-6, 30e-6, 40e-6)
    rng = np.random.default_rng(3)
    r1 = qmath.random_density_matrix(2, rng)
    r2 = qmath.random_density_matrix(2, rng)
    joint = tensor_channels(a, b).apply(np.kron(r1, r2))
    assert np.allclose(joint, np.kron(a.apply(r1), b.apply(r2)), atol=1e-12)


def test_iswap_qpt_infidelities_on_reference_device():
    # frozen from this model: decoherence alone, then with compensated -200 kHz ZZ
    ideal = u_iswap(math.pi, 0.0)
    zz0 = noisy_gate_channel(ISWAP(), SimpleNoiseModel.paper_table(zeta=0.0))
    zz = noisy_gate_channel(ISWAP(), SimpleNoiseModel.paper_table(zeta=-200e3))
    assert qmath.qpt_infidelity(zz0, ideal) == pytest.approx(0.0085479, abs=1e-6)
    assert qmath.qpt_infidelity(zz, ideal) == pytest.approx(0.0117, rel=0.1)


def test_calibrated_cz_unaffected_by_zz():
    ideal = u_cz(math.pi)
    with_zz = qmath.qpt_infidelity(noisy_gate_channel(CZ(), SimpleNoiseModel.paper_table(zeta=-200e3)), ideal)
    without = qmath.qpt_infidelity(noisy_gate_channel(CZ(), SimpleNoiseModel.paper_table(zeta=0.0)), ideal)
    assert with_zz == pytest.approx(without, abs=1e-12)
    raw = noisy_gate_channel(CZ(), SimpleNoiseModel.paper_table(zeta=-200e3, calibrated=False))
    assert qmath.qpt_infidelity(raw, ideal) > 2 * without


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(-5e5, 5e5), st.booleans())
def test_noisy_channels_trace_preserving_and_positive(seed, zeta, split):
    rng = np.random.default_rng(seed)
    noise = SimpleNoiseModel.paper_table(zeta=zeta, split_decoherence=split, tau_1q=20e-9)
    rho = qmath.random_density_matrix(4, rng)
    for kind in (CZ(), ISWAP(), SQRot(0, 0.3, 1.0)):
        qmath.check_density_matrix(noisy_gate_channel(kind, noise).apply(rho))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_liouville_composition_matches_sequential_application(seed):
    rng = np.random.default_rng(seed)
    noise = SimpleNoiseModel.paper_table()
    chans = [noisy_gate_channel(k, noise) for k in (ISWAP(), SQRot(1, 0.2, 0.5), CZ())]
    rho = qmath.random_density_matrix(4, rng)
    seq = rho
    for c in chans:
        seq = c.apply(seq)
    composed = chans[0].then(chans[1]).then(chans[2])
    assert np.allclose(composed.apply(rho), seq, atol=1e-10)
    assert np.allclose(chans[0].then(chans[1].then(chans[2])).matrix, composed.matrix, atol=1e-12)


def test_invalid_noise():
    with pytest.raises(InvalidNoise):
        SimpleNoiseModel(t1=(10e-6, 10e-6), t2_star=(30e-6, 10e-6))
    with pytest.raises(InvalidNoise):
        SimpleNoiseModel(t1=(-1.0, 10e-6))
    with pytest.raises(InvalidNoise):
        SimpleNoiseModel(tau_2q=-1e-9)
