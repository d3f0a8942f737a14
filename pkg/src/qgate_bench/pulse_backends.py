"""Pulse-level backends the calibration pipelines run against.

A pulse backend turns a ``FluxPulse`` into two-qubit channels and transfer
populations.  ``FullModelBackend`` integrates the three-mode device;
``EffectiveBackend`` is an analytic two-level stand-in with the same
interface, used for fast runs and as a self-consistency oracle.

Both describe the two drive transitions by an (upper, lower) state pair:
|01> -> |10> for the iSWAP and |11> -> |20> for the CZ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from . import dynamics, qmath
from .device import TWO_PI, DeviceModel, FluxPulse, coupler_frequency, hamiltonian_parts
from .errors import ConfigError
from .gates import SimpleNoiseModel, decoherence_channel, idle_channel, tensor_channels, virtual_z
from .qmath import SuperOperator

GATES = ("cz", "iswap")
PAIRS = {"iswap": ((0, 1, 0), (1, 0, 0)), "cz": ((1, 1, 0), (2, 0, 0))}


def _check_gate(gate: str) -> str:
    gate = gate.lower()
    if gate not in GATES:
        raise ConfigError(f"gate must be one of {GATES}, got {gate!r}")
    return gate


def block_superop(block: np.ndarray) -> SuperOperator:
    """Liouville map of a (possibly leaky) 4 x 4 propagator block."""
    block = np.asarray(block, dtype=complex)
    return SuperOperator(np.kron(block.conj(), block))


# -- analytic effective model ---------------------------------------------------------------


@dataclass(frozen=True)
class EffectiveBackend:
    """Two-level rotating-wave model of both parametric transitions.

    The drive couples the upper and lower state of the addressed pair with
    Rabi frequency ``rabi_per_amplitude * amplitude``.  During the pulse the
    qubits are shifted by ``dispersive_per_amp2 * amplitude**2`` (Hz per
    qubit) and |11> by the static plus drive-induced ZZ, which also moves
    the driven resonance.  ``drive_phase_offset`` is added to the pulse
    phase and ``injected_z`` applies fixed virtual-Z errors after every
    pulse, both for calibration self-tests.  T1/T2* of ``noise`` act after
    the coherent part when ``decoherence`` is set.
    """

    noise: SimpleNoiseModel = field(default_factory=SimpleNoiseModel)
    iswap_frequency: float = 1.0921e9
    cz_frequency: float = 1.4009e9
    rabi_per_amplitude: tuple = (45e6, 48.5e6)  # (cz, iswap), Hz per flux quantum
    dispersive_per_amp2: tuple = (-500e6, -300e6)  # (q1, q2), Hz per flux quantum squared
    dynamic_zz_per_amp2: float = -26.8e6
    drive_phase_offset: float = 0.0
    injected_z: tuple = (0.0, 0.0)
    flank: float = 5e-9
    decoherence: bool = False

    detuning_sign = -1.0
    drive_phase_sign = 1.0

    def with_(self, **changes) -> "EffectiveBackend":
        return replace(self, **changes)

    def transition_frequency(self, gate: str) -> float:
        return self.cz_frequency if _check_gate(gate) == "cz" else self.iswap_frequency

    def rabi(self, gate: str, amplitude: float) -> float:
        k = 0 if _check_gate(gate) == "cz" else 1
        return self.rabi_per_amplitude[k] * amplitude

    def zz_total(self, amplitude: float) -> float:
        return self.noise.zeta + self.dynamic_zz_per_amp2 * amplitude**2

    def make_pulse(self, gate: str, amplitude: float, frequency: float, duration: float,
                   phase: float = 0.0) -> FluxPulse:
        flank = min(self.flank, duration / 2)
        return FluxPulse(amplitude=amplitude, frequency=frequency, phase=phase,
                         plateau=max(duration - 2 * flank, 0.0), flank=max(flank, 1e-15))

    def _gate_for(self, frequency: float) -> str:
        d_cz = abs(frequency - self.cz_frequency)
        d_is = abs(frequency - self.iswap_frequency)
        return "cz" if d_cz < d_is else "iswap"

    def _energies(self, amplitude: float) -> dict:
        d1, d2 = (c * amplitude**2 for c in self.dispersive_per_amp2)
        return {"00": 0.0, "01": d2, "10": d1, "11": d1 + d2 + self.zz_total(amplitude), "20": 2 * d1}

    def _pair_unitary(self, pulse: FluxPulse, tau: float | None = None):
        gate = self._gate_for(pulse.frequency)
        tau = pulse.duration if tau is None else tau
        e = self._energies(pulse.amplitude)
        upper, lower = ("01", "10") if gate == "iswap" else ("11", "20")
        df = pulse.frequency - self.transition_frequency(gate)
        omega = self.rabi(gate, pulse.amplitude)
        eta = pulse.phase + self.drive_phase_offset
        # drive frame: constant Hamiltonian; W(t) takes it back to the qubit frame
        h = TWO_PI * np.array([[e[upper] - df / 2, -0.5 * omega * np.exp(1j * eta)],
                               [-0.5 * omega * np.exp(-1j * eta), e[lower] + df / 2]])
        w_back = np.diag([np.exp(-1j * math.pi * df * tau), np.exp(1j * math.pi * df * tau)])
        return gate, e, w_back @ expm(-1j * h * tau)

    def block(self, pulse: FluxPulse) -> np.ndarray:
        """4 x 4 computational block of the pulse propagator (qubit frame)."""
        gate, e, pair = self._pair_unitary(pulse)
        tau = pulse.duration
        labels = ("00", "01", "10", "11")
        b = np.diag([np.exp(-1j * TWO_PI * e[s] * tau) for s in labels])
        if gate == "iswap":
            b[np.ix_([1, 2], [1, 2])] = pair
        else:
            b[3, 3] = pair[0, 0]
        inj = np.kron(virtual_z(self.injected_z[0]), virtual_z(self.injected_z[1]))
        return inj @ b

    def transfer(self, gate: str, pulses) -> np.ndarray:
        out = []
        for p in pulses:
            _, _, pair = self._pair_unitary(p)
            out.append(abs(pair[1, 0]) ** 2)
        return np.array(out)

    def scan(self, gate: str, amplitude: float, frequencies, durations) -> np.ndarray:
        """Transfer population on a (frequency, duration) grid."""
        grid = np.zeros((len(frequencies), len(durations)))
        for i, f in enumerate(frequencies):
            p = FluxPulse(amplitude, f, plateau=0.0)
            for j, t in enumerate(durations):
                _, _, pair = self._pair_unitary(p, tau=t)
                grid[i, j] = abs(pair[1, 0]) ** 2
        return grid

    def channels(self, pulses, decoherence: bool | None = None) -> list[SuperOperator]:
        decoherence = self.decoherence if decoherence is None else decoherence
        out = []
        for p in pulses:
            ch = block_superop(self.block(p))
            if decoherence and p.duration > 0:
                n = self.noise
                t2s = n.drive_t2_star if n.drive_t2_star is not None else n.t2_star
                dec = tensor_channels(decoherence_channel(p.duration, n.t1[0], t2s[0]),
                                      decoherence_channel(p.duration, n.t1[1], t2s[1]))
                ch = ch.then(dec)
            out.append(ch)
        return out

    def idle_channel(self, tau: float, decoherence: bool | None = None) -> SuperOperator:
        decoherence = self.decoherence if decoherence is None else decoherence
        noise = self.noise if decoherence else self.noise.with_(t1=(math.inf,) * 2, t2_star=(math.inf,) * 2)
        return idle_channel(tau, noise)

    def resonance_estimate(self, gate: str, amplitude: float) -> tuple[float, float]:
        """(driven resonance frequency, Rabi frequency) predicted by the model."""
        e = self._energies(amplitude)
        upper, lower = ("01", "10") if _check_gate(gate) == "iswap" else ("11", "20")
        return self.transition_frequency(gate) + e[upper] - e[lower], self.rabi(gate, amplitude)


# -- full three-mode model ---------------------------------------------------------------------


class FullModelBackend:
    """Pulses simulated on the three-mode device.

    Scans and calibration circuits use decoherence-free propagators; the
    final gate channels come from 16-state process tomography with the
    device's collapse rates when ``decoherence`` is set.  Chevron scans
    sample one long pulse per frequency at the requested durations, so the
    falling flank of shorter pulses is neglected there; gate lengths are
    refined afterwards with exact pulses.
    """

    detuning_sign = -1.0
    # the drive's positive-frequency component lowers |01> to |10>, so the
    # iSWAP phase runs against the pulse phase
    drive_phase_sign = -1.0

    def __init__(self, model: DeviceModel, options: dynamics.EvolveOptions | None = None,
                 scan_options: dynamics.EvolveOptions | None = None, flank: float = 5e-9,
                 decoherence: bool = True):
        self.model = model
        self.coherent_model = model.without_decoherence()
        self.options = options or dynamics.EvolveOptions()
        self.scan_options = scan_options or dynamics.EvolveOptions(rtol=1e-7, atol=1e-9)
        self.flank = flank
        self.decoherence = decoherence
        self.frame = dynamics._cached_frame(self.coherent_model, self.options.max_excitations)
        self.last_leakage = 0.0

    def _pair_index(self, gate: str):
        upper, lower = PAIRS[_check_gate(gate)]
        return self.frame.position(upper), self.frame.position(lower)

    def transition_frequency(self, gate: str) -> float:
        iu, il = self._pair_index(gate)
        return float(self.frame.energies[iu] - self.frame.energies[il]) / TWO_PI

    def make_pulse(self, gate: str, amplitude: float, frequency: float, duration: float,
                   phase: float = 0.0) -> FluxPulse:
        flank = min(self.flank, duration / 2)
        return FluxPulse(amplitude=amplitude, frequency=frequency, phase=phase,
                         plateau=max(duration - 2 * flank, 0.0), flank=max(flank, 1e-15))

    def transfer(self, gate: str, pulses) -> np.ndarray:
        iu, il = self._pair_index(gate)
        _, u = dynamics.propagate_unitaries(self.coherent_model, pulses, self.scan_options)
        return np.abs(u[:, il, iu]) ** 2

    def scan(self, gate: str, amplitude: float, frequencies, durations) -> np.ndarray:
        iu, il = self._pair_index(gate)
        durations = np.asarray(durations, dtype=float)
        t_end = float(durations.max())
        pulses = [FluxPulse(amplitude, f, plateau=t_end, flank=self.flank)
                  for f in frequencies]
        _, u = dynamics.propagate_unitaries(self.coherent_model, pulses, self.scan_options,
                                            sample_times=durations)
        return (np.abs(u[:, :, il, iu]) ** 2).T

    def blocks(self, pulses) -> np.ndarray:
        _, u = dynamics.propagate_unitaries(self.coherent_model, pulses, self.options)
        return dynamics.computational_block(self.frame, u)

    def channels(self, pulses, decoherence: bool | None = None, corrections=None) -> list[SuperOperator]:
        """Gate channels; ``corrections`` are post-gate virtual-Z angles per pulse."""
        decoherence = self.decoherence if decoherence is None else decoherence
        pulses = list(pulses)
        corrections = corrections or [(0.0, 0.0)] * len(pulses)
        if not decoherence:
            out = []
            for b, c in zip(self.blocks(pulses), corrections):
                fc = dynamics.frame_correction_unitary(c)
                out.append(block_superop(fc @ b))
            return out
        out, leak = [], 0.0
        for p, c in zip(pulses, corrections):
            tomo = dynamics.gate_tomography(self.model, p, c, self.options)
            leak = max(leak, tomo.leakage)
            out.append(tomo.superop)
        self.last_leakage = leak
        return out

    def idle_channel(self, tau: float, decoherence: bool | None = None) -> SuperOperator:
        decoherence = self.decoherence if decoherence is None else decoherence
        model = self.model if decoherence else self.coherent_model
        return dynamics.idle_superop(model, tau, self.options.max_excitations)

    def resonance_estimate(self, gate: str, amplitude: float) -> tuple[float, float]:
        """Cheap static estimate of the driven resonance and Rabi frequency.

        The resonance is taken at the cycle-averaged coupler frequency, the
        coupling from the first harmonic of the coupler frequency times the
        dressed coupler-number matrix element.  Only used to size scan
        windows.
        """
        model = self.coherent_model
        phase = np.linspace(0, TWO_PI, 256, endpoint=False)
        fc = coupler_frequency(model.tc, model.tc.dc_flux + amplitude * np.cos(phase))
        mean_fc = float(fc.mean())
        first = 2 * float(np.mean(fc * np.cos(phase)))
        h0, nc = hamiltonian_parts(model)
        idx = self.frame.index
        vals = np.linalg.eigvalsh((h0 + TWO_PI * mean_fc * nc)[np.ix_(idx, idx)])
        # follow the idle labelling by energy order within the kept sector
        order = np.argsort(np.argsort(self.frame.energies))
        e = vals[order] / TWO_PI
        iu, il = self._pair_index(gate)
        ncd = self.frame.coupler_number
        return float(e[iu] - e[il]), abs(first * ncd[iu, il])


def as_pulse_backend(target, **kw):
    """Accept a pulse backend or a DeviceModel (wrapped in FullModelBackend)."""
    if isinstance(target, DeviceModel):
        return FullModelBackend(target, **kw)
    return target


def corrections_unitary(corrections) -> np.ndarray:
    return np.kron(virtual_z(corrections[0]), virtual_z(corrections[1]))


def corrected(channel: SuperOperator, corrections) -> SuperOperator:
    """Channel followed by post-gate virtual-Z corrections on (q1, q2)."""
    return channel.then(qmath.unitary_to_superop(corrections_unitary(corrections)))
