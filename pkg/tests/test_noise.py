import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgate_bench import device as D
from qgate_bench import dynamics as Y
from qgate_bench import noise as N
from qgate_bench import qmath, rb
from qgate_bench.errors import InsufficientData, InvalidNoise, NegativeSigma
from qgate_bench.gates import CZ, ISWAP, SimpleNoiseModel, gate_unitary, noisy_gate_channel, u_iswap
from qgate_bench.pulse_backends import FullModelBackend

seeds = st.integers(min_value=0, max_value=2**32 - 1)


# -- trigger phase jitter ---------------------------------------------------------------------------


def test_single_cycle_jitter_at_200_mhz():
    m = N.PhaseJitterModel(200e6, clock_period=8.33e-10)
    assert m.step == pytest.approx(1.047, abs=1e-3)
    assert m.step == pytest.approx(1.041, rel=0.01)


def test_default_clock_is_833_ps():
    assert N.PhaseJitterModel().clock_period == pytest.approx(833e-12, rel=1e-3)
    assert N.PhaseJitterModel(200e6).support()[-1] == pytest.approx(2 * math.pi * 200e6 * 4.1667e-9, rel=1e-4)


def test_no_sideband_no_jitter():
    rng = np.random.default_rng(0)
    assert N.sample_phase_jitter(N.PhaseJitterModel(0.0), rng) == 0.0


def test_single_cycle_jitter_at_5_mhz():
    assert N.PhaseJitterModel(5e6, clock_period=8.33e-10).step == pytest.approx(0.0262, abs=1e-4)


def test_jitter_support_has_max_cycles_points():
    m = N.PhaseJitterModel(200e6, max_cycles=5)
    draws = N.sample_phase_jitter(m, np.random.default_rng(1), size=10_000)
    values, counts = np.unique(np.round(draws, 12), return_counts=True)
    assert len(values) == 5
    assert np.allclose(values, m.support())
    assert np.all(np.abs(counts / 10_000 - 0.2) < 0.02)


def test_jitter_model_validation():
    with pytest.raises(InvalidNoise):
        N.PhaseJitterModel(1e6, clock_period=0.0)
    with pytest.raises(InvalidNoise):
        N.PhaseJitterModel(1e6, max_cycles=0)


def test_jitter_frame_shifts_iswap_phase():
    for delta in (0.3, -1.1, math.pi):
        a = N.jitter_frame_unitary(delta)
        assert np.allclose(a @ u_iswap(math.pi, 0.4) @ a.conj().T, u_iswap(math.pi, 0.4 + delta), atol=1e-12)


def test_zero_jitter_leaves_channel():
    ch = noisy_gate_channel(ISWAP(), SimpleNoiseModel.paper_table())
    assert N.apply_jitter_to_channel(ch, ISWAP(), 0.0) is ch


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10))
def test_cz_channel_insensitive_to_jitter(delta):
    ch = noisy_gate_channel(CZ(), SimpleNoiseModel.paper_table())
    assert np.array_equal(N.apply_jitter_to_channel(ch, CZ(), delta).matrix, ch.matrix)


def test_iswap_jitter_pi_flips_transfer_amplitude():
    ch = qmath.unitary_to_superop(u_iswap(math.pi, 0.0))
    out = N.apply_jitter_to_channel(ch, ISWAP(), math.pi)
    assert np.allclose(out.matrix, qmath.unitary_to_superop(u_iswap(math.pi, math.pi)).matrix, atol=1e-12)
    u_pi = u_iswap(math.pi, math.pi)
    assert u_pi[1, 2] == pytest.approx(-u_iswap(math.pi, 0.0)[1, 2])
    rho = qmath.projector(qmath.ket(1, 4))
    assert out.apply(rho)[2, 2].real == pytest.approx(ch.apply(rho)[2, 2].real)


@settings(max_examples=30, deadline=None)
@given(st.floats(-4, 4), seeds)
def test_jittered_noisy_iswap_matches_shifted_phase(delta, seed):
    noise = SimpleNoiseModel.paper_table()
    shifted = N.apply_jitter_to_channel(noisy_gate_channel(ISWAP(), noise), ISWAP(), delta)
    direct = noisy_gate_channel(ISWAP(math.pi, delta), noise)
    rho = qmath.random_density_matrix(4, np.random.default_rng(seed))
    assert np.allclose(shifted.apply(rho), direct.apply(rho), atol=1e-12)


def test_hook_sandwich_equals_phase_shift():
    hook = N.JitterHook(N.PhaseJitterModel(200e6))
    gates = hook([ISWAP(), CZ()], np.random.default_rng(4))
    delta = hook.log[0]
    u = np.eye(4)
    for g in gates[:5]:
        u = gate_unitary(g) @ u
    assert np.allclose(u, u_iswap(math.pi, delta), atol=1e-12)
    assert gates[5] == CZ()


def test_hook_draws_once_per_sequence():
    hook = N.JitterHook(N.PhaseJitterModel(50e6))
    rng = np.random.default_rng(2)
    for _ in range(7):
        hook([ISWAP(), ISWAP()], rng)
    assert len(hook.log) == 7
    per_gate = N.JitterHook(N.PhaseJitterModel(50e6, per_gate=True))
    per_gate([ISWAP(), CZ(), ISWAP()], rng)
    assert len(per_gate.log) == 2


def test_cross_ramsey_phase_tracks_jitter():
    for delta in (0.0, 0.5, -1.2):
        assert N.cross_ramsey_phase(delta) == pytest.approx(delta, abs=1e-6)


def test_jitter_histogram_peak_separation():
    h = N.jitter_histogram(N.PhaseJitterModel(200e6), 400, np.random.default_rng(5))
    assert len(h.peaks) == 5
    assert h.mean_separation == pytest.approx(1.047, abs=2e-3)


def test_jitter_histogram_spread_at_5_mhz_matches_uniform_cycles():
    # std of n uniform over 1..5 is sqrt(2); spread is that times one cycle of phase
    m = N.PhaseJitterModel(5e6)
    h = N.jitter_histogram(m, 4000, np.random.default_rng(6))
    assert h.spread == pytest.approx(math.sqrt(2) * m.step, rel=0.03)


def test_jitter_histogram_needs_repetitions():
    with pytest.raises(InsufficientData):
        N.jitter_histogram(N.PhaseJitterModel(5e6), 1, np.random.default_rng(0))


def test_unwrap_arc_across_cut():
    out = N.unwrap_arc([3.1, -3.1, 3.0])
    assert np.ptp(out) == pytest.approx(2 * math.pi - 6.1, abs=1e-12)


@pytest.mark.parametrize("sideband", [5e6, 20e6])
def test_jitter_raises_iswap_rb_error(sideband):
    noise = SimpleNoiseModel.paper_table()
    clean = rb.emulate_rb_simple(noise, "iswap", rb.DEFAULT_LENGTHS, n_random=50, rng_seed=3)
    hook = N.JitterHook(N.PhaseJitterModel(sideband))
    jit = rb.emulate_rb_simple(noise, "iswap", rb.DEFAULT_LENGTHS, n_random=50, rng_seed=3, sequence_hook=hook)
    assert jit.epg > clean.epg
    assert jit.epg_reference > clean.epg_reference


def test_jitter_leaves_cz_rb_unchanged():
    noise = SimpleNoiseModel.paper_table()
    clean = rb.emulate_rb_simple(noise, "cz", rb.DEFAULT_LENGTHS, n_random=50, rng_seed=3)
    hook = N.JitterHook(N.PhaseJitterModel(200e6))
    jit = rb.emulate_rb_simple(noise, "cz", rb.DEFAULT_LENGTHS, n_random=50, rng_seed=3, sequence_hook=hook)
    assert jit.epg == pytest.approx(clean.epg, abs=max(clean.epg_err, 1e-12))


# -- drive-amplitude dependent dephasing -----------------------------------------------------------


def test_constant_t2_without_quadratic_term():
    m = N.AmplitudeDephasingModel(c0=5e3, c2=0.0)
    for rabi in (0.0, 1e6, 5e6):
        assert N.effective_t2(m, rabi) == pytest.approx(1 / (2 * math.pi * 5e3))


def test_coefficients_inverted_for_4us_at_max_drive():
    rabi_max = 6e6
    c0 = 1 / (2 * math.pi * 20e-6)
    c2 = (1 / (2 * math.pi * 4e-6) - c0) / rabi_max**2
    assert N.effective_t2(N.AmplitudeDephasingModel(c0, c2), rabi_max) == pytest.approx(4e-6, abs=1e-9)


def test_doubling_rabi_quadruples_quadratic_part():
    m = N.AmplitudeDephasingModel(c0=1e3, c2=2e-9)
    assert m.sigma(2e6) - m.c0 == pytest.approx(4 * (m.sigma(1e6) - m.c0))


def test_default_coefficients_span_4_to_8_us():
    m = N.AmplitudeDephasingModel()
    assert N.effective_t2(m, 0.0) == pytest.approx(27e-6)
    assert N.effective_t2(m, 4.85e6) == pytest.approx(4e-6)
    assert 7.5e-6 < N.effective_t2(m, 3.1e6) < 8.5e-6


def test_negative_sigma_rejected():
    with pytest.raises(NegativeSigma):
        N.effective_t2(N.AmplitudeDephasingModel(c0=0.0, c2=0.0), 1e6)
    with pytest.raises(NegativeSigma):
        N.effective_t2(N.AmplitudeDephasingModel(c0=1e3, c2=-1e-9), 2e6)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1e7), st.floats(0, 1e7))
def test_effective_t2_monotone(a, b):
    m = N.AmplitudeDephasingModel()
    lo, hi = sorted((a, b))
    assert N.effective_t2(m, hi) <= N.effective_t2(m, lo)


def test_drive_dephasing_raises_gate_error():
    noise = SimpleNoiseModel.paper_table(zeta=0.0)
    driven = N.with_drive_dephasing(noise, N.AmplitudeDephasingModel(), 4.85e6)
    assert driven.drive_t2_star == pytest.approx((4e-6, 4e-6))
    ideal = u_iswap(math.pi, 0.0)
    base = qmath.qpt_infidelity(noisy_gate_channel(ISWAP(), noise), ideal)
    worse = qmath.qpt_infidelity(noisy_gate_channel(ISWAP(), driven), ideal)
    assert worse > 2 * base


# -- spurious tones -------------------------------------------------------------------------------


def _pulse():
    return D.FluxPulse(amplitude=0.1, frequency=1.09e9, plateau=90e-9, flank=5e-9, phase=0.3)


def _reference_waveform(pulse, dc):
    tc = D.CouplerParams(8.1e9, -235e6, 0.36, dc)
    return lambda t: D.flux_waveform(pulse, tc, t)


@pytest.mark.parametrize("tones", [(), ((1.2e9, 0.0),)])
def test_no_effective_tones_leave_waveform(tones):
    p = _pulse()
    wf = N.add_spurious_tones(p, N.SpuriousToneModel(tones), dc_flux=0.15)
    ref = _reference_waveform(p, 0.15)
    for t in np.linspace(0, p.duration, 57):
        assert wf(t) == pytest.approx(ref(t), abs=1e-12)
    assert wf(-1e-9) == wf(p.duration + 1e-9) == 0.15


def test_tone_adds_under_envelope():
    p = _pulse()
    wf = N.add_spurious_tones(p, N.SpuriousToneModel(((0.5e9, 0.2),)), dc_flux=0.0)
    t = 50e-9
    expected = p.amplitude * (math.cos(2 * math.pi * p.frequency * t + p.phase) + 0.2 * math.cos(2 * math.pi * 0.5e9 * t))
    assert wf(t) == pytest.approx(expected, abs=1e-12)


def test_tone_validation_and_harmonics():
    with pytest.raises(InvalidNoise):
        N.SpuriousToneModel(((1e9, -0.1),))
    m = N.SpuriousToneModel.harmonics(100e6, 1e9, [-1, 1, 2], 0.05)
    assert [f for f, _ in m.tones] == pytest.approx([0.9e9, 1.1e9, 1.2e9])


@pytest.mark.slow
def test_tone_near_cz_transition_causes_leakage():
    m = D.paper_device().without_decoherence()
    backend = FullModelBackend(m)
    f_iswap, _ = backend.resonance_estimate("iswap", 0.1)
    f_cz, _ = backend.resonance_estimate("cz", 0.1)
    pulse = backend.make_pulse("iswap", 0.1, f_iswap, 100e-9)
    rho = np.zeros((27, 27), dtype=complex)
    i = D.basis_index((1, 1, 0), m.dims)
    rho[i, i] = 1
    comp = [D.basis_index(s, m.dims) for s in [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 0)]]

    def leakage(wf=None):
        out = Y.evolve(m, pulse, rho, waveform=wf).final_state
        return 1 - sum(out[k, k].real for k in comp)

    tone = N.add_spurious_tones(pulse, N.SpuriousToneModel(((f_cz, 0.5),)), m.tc.dc_flux)
    assert leakage(tone) > 10 * leakage()
