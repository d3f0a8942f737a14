import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgate_bench import rb
from qgate_bench.backends import DepolarizingBackend, IdealBackend, SimpleModelBackend
from qgate_bench.clifford import clifford_group, equal_up_to_phase
from qgate_bench.errors import FitFailure, InsufficientData
from qgate_bench.gates import CZ, ISWAP, SimpleNoiseModel

SHORT = [1, 2, 4, 8, 16, 32]


# -- sequences ---------------------------------------------------------------------------------


def test_empty_sequence_recovers_identity():
    seq = rb.sample_sequence(0, 5)
    assert seq.elements == ()
    assert seq.recovery == clifford_group().identity_index


def test_single_element_recovery_is_inverse():
    grp = clifford_group()
    for seed in range(20):
        seq = rb.sample_sequence(1, seed)
        assert seq.recovery == grp.inverse(seq.elements[0])


def test_sampling_deterministic():
    assert rb.sample_sequence(12, (3, 12, 0)) == rb.sample_sequence(12, (3, 12, 0))


def test_different_seeds_give_different_sequences():
    for s in range(100):
        assert rb.sample_sequence(20, 2 * s).elements != rb.sample_sequence(20, 2 * s + 1).elements


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 40), st.integers(0, 2**31), st.sampled_from([None, CZ(), ISWAP()]))
def test_sequences_compose_to_identity(m, seed, interleave):
    seq = rb.sample_sequence(m, seed, interleave=interleave)
    assert rb.check_sequence_identity(seq, interleave)
    for native in ("cz", "iswap"):
        from qgate_bench.gates import sequence_unitary
        assert equal_up_to_phase(sequence_unitary(seq.gates(native, interleave)), np.eye(4), 1e-8)


# -- decay fits and formulas ---------------------------------------------------------------------------


def test_epg_formulas():
    assert rb.epc_from_p(0.99) == pytest.approx(0.0075)
    assert rb.interleaved_epg(0.99, 0.98) == pytest.approx(0.75 * (1 - 0.98 / 0.99))
    assert rb.purity_epg(1.0) == 0.0
    assert rb.purity_epg(0.99) == pytest.approx(0.75 * (1 - 0.99 ** (2 / 3)))


def test_fit_recovers_exact_decay():
    m = np.array(SHORT, dtype=float)
    y = rb.rb_decay(m, 0.7, 0.97, 0.27)
    fit = rb.fit_decay(m, y)
    assert fit.p == pytest.approx(0.97, abs=1e-8)
    assert fit.a == pytest.approx(0.7, abs=1e-6)
    assert fit.b == pytest.approx(0.27, abs=1e-6)


def test_fit_failure_on_nan():
    with pytest.raises(FitFailure):
        rb.fit_decay(SHORT, np.full(len(SHORT), np.nan))


def test_run_rb_validation():
    with pytest.raises(InsufficientData):
        rb.run_rb(IdealBackend(), SHORT, n_random=0)
    with pytest.raises(InsufficientData):
        rb.run_rb(IdealBackend(), [1, 2], n_random=2)


# -- analytic oracles -------------------------------------------------------------------------------------


def test_noiseless_rb():
    res = rb.run_rb(IdealBackend(), SHORT, n_random=3, interleave=CZ(), rng_seed=1)
    assert np.allclose(res.fidelities, 1.0)
    assert res.fit.p == 1.0
    assert res.epg == pytest.approx(0.0)
    assert res.epg_reference == pytest.approx(0.0)


@pytest.mark.parametrize("gamma", [0.98, 0.99, 0.995])
def test_depolarizing_reference_decay(gamma):
    res = rb.run_rb(DepolarizingBackend(gamma), SHORT + [64], n_random=2, rng_seed=2)
    assert res.fit.p == pytest.approx(gamma, abs=1e-3)
    assert res.fit.b == pytest.approx(0.25, abs=5e-3)


def test_depolarizing_interleaved_extraction():
    backend = DepolarizingBackend(0.99, interleaved_survival=0.985)
    res = rb.run_rb(backend, SHORT + [64], n_random=2, interleave=CZ(), rng_seed=3)
    assert res.epg == pytest.approx(0.75 * (1 - 0.985), abs=1e-3)


def test_noiseless_purity_rb():
    res = rb.run_purity_rb(IdealBackend(), SHORT, n_random=2)
    assert res.gamma == 1.0
    assert res.epg == 0.0


@pytest.mark.parametrize("gamma", [0.99, 0.995])
def test_depolarizing_purity_rb(gamma):
    res = rb.run_purity_rb(DepolarizingBackend(gamma), SHORT + [64], n_random=2, rng_seed=4)
    assert res.gamma == pytest.approx(gamma, abs=1e-3)
    assert res.epg == pytest.approx(0.75 * (1 - gamma ** (2 / 3)), rel=0.05)
    # incoherent noise: purity error and reference RB error agree
    ref = rb.run_rb(DepolarizingBackend(gamma), SHORT + [64], n_random=2, rng_seed=4)
    assert res.epg == pytest.approx(ref.epg_reference, rel=0.1)


def test_items_are_order_independent():
    backend = SimpleModelBackend(SimpleNoiseModel.paper_table())
    full = rb.run_sequences(backend, [2, 4, 8], 3, "cz", rng_seed=7)
    part = rb.run_sequences(backend, [8, 2], 3, "cz", rng_seed=7)
    assert np.array_equal(part[0], full[2])
    assert np.array_equal(part[1], full[0])


def test_shot_sampling_quantised_and_reproducible():
    backend = SimpleModelBackend(SimpleNoiseModel.paper_table())
    a = rb.run_sequences(backend, [4, 8], 4, "cz", rng_seed=1, shots=200)
    b = rb.run_sequences(backend, [4, 8], 4, "cz", rng_seed=1, shots=200)
    assert np.array_equal(a, b)
    assert np.allclose(a * 200, np.round(a * 200))


# -- simple-model numbers ----------------------------------------------------------------------------------


def test_simple_model_cz_interleaved_epg():
    res = rb.emulate_rb_simple(SimpleNoiseModel.paper_table(), "cz", rb.DEFAULT_LENGTHS, n_random=50, rng_seed=6)
    assert res.epg == pytest.approx(0.0068, rel=0.2)


def test_simple_model_iswap_interleaved_epg():
    res = rb.emulate_rb_simple(SimpleNoiseModel.paper_table(), "iswap", rb.DEFAULT_LENGTHS, n_random=50,
                               rng_seed=6)
    assert res.epg == pytest.approx(0.0202, rel=0.2)


def test_simple_model_iswap_without_zz():
    res = rb.emulate_rb_simple(SimpleNoiseModel.paper_table(zeta=0.0), "iswap", rb.DEFAULT_LENGTHS,
                               n_random=50, rng_seed=6)
    assert res.epg == pytest.approx(0.0066, rel=0.2)


def test_purity_error_below_interleaved_error_for_iswap_with_zz():
    noise = SimpleNoiseModel.paper_table()
    backend = SimpleModelBackend(noise)
    pur = rb.run_purity_rb(backend, rb.DEFAULT_LENGTHS, n_random=20, rng_seed=5, native="iswap")
    res = rb.emulate_rb_simple(noise, "iswap", rb.DEFAULT_LENGTHS, n_random=20, rng_seed=5)
    assert pur.epg < res.epg


# -- histograms -------------------------------------------------------------------------------------------


def test_histogram_degenerate_for_equal_fidelities():
    data = np.ones((3, 60))
    h = rb.histogram_from_fidelities([2, 8, 16], data, 8)
    assert h.degenerate
    assert h.std == 0.0
    assert h.counts.sum() == 60
    assert math.isnan(h.shape)


def test_histogram_needs_fifty_randomizations():
    with pytest.raises(InsufficientData):
        rb.histogram_from_fidelities([2, 8], np.ones((2, 49)), 8)
    with pytest.raises(InsufficientData):
        rb.histogram_from_fidelities([2, 8], np.ones((2, 60)), 4)


def test_histogram_gamma_moments():
    rng = np.random.default_rng(0)
    infid = rng.gamma(4.0, 0.01, size=4000)
    h = rb.histogram_from_fidelities([5], (1 - infid)[None, :], 5)
    assert h.shape == pytest.approx(4.0, rel=0.1)
    assert h.scale == pytest.approx(0.01, rel=0.1)
    assert h.counts.sum() == 4000


@pytest.fixture(scope="module")
def spreads():
    out = {}
    for gate in ("cz", "iswap"):
        backend = SimpleModelBackend(SimpleNoiseModel.paper_table())
        kind = CZ() if gate == "cz" else ISWAP()
        data = rb.run_sequences(backend, [2, 8, 16], 100, gate, interleave=kind, rng_seed=11)
        out[gate] = [rb.histogram_from_fidelities([2, 8, 16], data, m).std for m in (2, 8, 16)]
    return out


def test_iswap_spread_grows_with_length(spreads):
    s = spreads["iswap"]
    assert s[0] < s[1] < s[2]


def test_cz_spread_flat_and_below_iswap(spreads):
    s = spreads["cz"]
    assert 0.5 <= s[2] / s[0] <= 2.0
    assert s[1] < spreads["iswap"][1]
