"""External error sources: trigger phase jitter, drive-dependent dephasing, spurious tones.

Phase jitter enters RB through a sequence hook that sandwiches every iSWAP
between virtual-Z frame shifts, which is exactly a shift of the iSWAP phase
and leaves CZ gates alone.  This works for every gate-channel backend,
including tables of full-model channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .device import FluxPulse, envelope
from .errors import InsufficientData, InvalidNoise, NegativeSigma
from .gates import CZ, ISWAP, SimpleNoiseModel, VirtualZ, u_iswap, virtual_z
from .qmath import SuperOperator, unitary_to_superop

CLOCK_PERIOD = 1 / 1.2e9  # 1.2 GS/s AWG


# -- type B: trigger phase jitter ------------------------------------------------------


@dataclass(frozen=True)
class PhaseJitterModel:
    """Trigger delay of n clock cycles, n uniform in {1..max_cycles}, seen as a drive phase."""

    sideband_frequency: float = 0.0
    clock_period: float = CLOCK_PERIOD
    max_cycles: int = 5
    per_gate: bool = False

    def __post_init__(self):
        if not self.clock_period > 0:
            raise InvalidNoise("clock period must be positive")
        if self.max_cycles < 1:
            raise InvalidNoise("max_cycles must be at least 1")

    @property
    def step(self) -> float:
        """Phase of one clock cycle of delay, radians."""
        return 2 * math.pi * self.sideband_frequency * self.clock_period

    def support(self) -> np.ndarray:
        return self.step * np.arange(1, self.max_cycles + 1)


def sample_phase_jitter(model: PhaseJitterModel, rng: np.random.Generator, size=None):
    """delta_phi = 2 pi f_sb n T_clk with n drawn uniformly from 1..max_cycles."""
    n = rng.integers(1, model.max_cycles + 1, size=size)
    return model.step * n if size is not None else float(model.step * n)


def jitter_frame_unitary(delta_phi: float) -> np.ndarray:
    """A with A u_iswap(theta, eta) A^dag = u_iswap(theta, eta + delta_phi)."""
    return np.kron(virtual_z(-delta_phi / 2), virtual_z(delta_phi / 2))


def apply_jitter_to_channel(channel: SuperOperator, gate, delta_phi: float) -> SuperOperator:
    """Shift the iSWAP phase of a gate channel by ``delta_phi``; CZ channels pass through.

    The shift is a conjugation by local Z rotations.  Decoherence and ZZ
    terms of the channel are diagonal in the computational basis and
    commute with it, so only the exchange phase changes.
    """
    if isinstance(gate, CZ) or (isinstance(gate, str) and gate.lower() == "cz") or delta_phi == 0:
        return channel
    if not (isinstance(gate, ISWAP) or (isinstance(gate, str) and gate.lower() == "iswap")):
        raise TypeError(f"jitter applies to iSWAP or CZ gates, got {gate!r}")
    a = unitary_to_superop(jitter_frame_unitary(delta_phi))
    return SuperOperator(a.matrix @ channel.matrix @ a.matrix.conj().T)


def _sandwich(delta_phi: float) -> tuple[list, list]:
    # A^dag before the gate, A after it
    before = [VirtualZ(0, delta_phi / 2), VirtualZ(1, -delta_phi / 2)]
    after = [VirtualZ(0, -delta_phi / 2), VirtualZ(1, delta_phi / 2)]
    return before, after


class JitterHook:
    """Sequence hook for ``ChannelBackend``: one jitter draw per sequence (or per gate).

    Every drawn value is appended to ``log`` so runs can be reproduced and
    reported.
    """

    def __init__(self, model: PhaseJitterModel):
        self.model = model
        self.log: list[float] = []

    def __call__(self, gates, rng: np.random.Generator):
        if self.model.step == 0:
            return gates
        draw = None if self.model.per_gate else sample_phase_jitter(self.model, rng)
        if draw is not None:
            self.log.append(draw)
        out = []
        for g in gates:
            if isinstance(g, ISWAP):
                d = draw if draw is not None else sample_phase_jitter(self.model, rng)
                if draw is None:
                    self.log.append(d)
                before, after = _sandwich(d)
                out.extend(before)
                out.append(g)
                out.extend(after)
            else:
                out.append(g)
        return out


def cross_ramsey_phase(delta_phi: float, channel_fn=None, n_phases: int = 41) -> float:
    """iSWAP phase fitted from the X90(Q1) - iSWAP - X90(Q2) fringe versus drive phase.

    ``channel_fn(eta)`` returns the gate channel at iSWAP phase eta
    (default: ideal iSWAP).  The fringe is p = {1 - sin(eta)}/2.
    """
    from .calibration import fit_sinusoid, transfer_ramsey_population

    channel_fn = channel_fn or (lambda eta: unitary_to_superop(u_iswap(math.pi, eta)))
    drive = np.linspace(0, 2 * math.pi, n_phases, endpoint=False)
    pops = [transfer_ramsey_population(channel_fn(x + delta_phi), "I") for x in drive]
    fit = fit_sinusoid(drive, pops, omega=1.0)
    return math.remainder(fit.phase - math.pi / 2, 2 * math.pi)


@dataclass
class JitterHistogram:
    phases: np.ndarray
    peaks: list
    separations: list
    spread: float  # standard deviation of the fitted phases

    @property
    def mean_separation(self) -> float:
        return float(np.mean(self.separations)) if self.separations else math.nan

    def to_dict(self) -> dict:
        return {"phases": self.phases.tolist(), "peaks": list(map(float, self.peaks)),
                "separations": list(map(float, self.separations)), "spread": self.spread}


def cluster_peaks(values, tol: float = 1e-3) -> list[float]:
    """Centres of groups of sorted values separated by gaps larger than ``tol``."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return []
    groups = np.split(v, np.where(np.diff(v) > tol)[0] + 1)
    return [float(g.mean()) for g in groups]


def unwrap_arc(angles) -> np.ndarray:
    """Angles moved by multiples of 2 pi onto the shortest arc holding all of them.

    The circle is cut at the largest gap between sorted angles; the arc
    starts in (-pi, pi].
    """
    a = np.mod(np.asarray(angles, dtype=float), 2 * math.pi)
    if a.size < 2:
        return a
    s = np.sort(a)
    gaps = np.diff(np.append(s, s[0] + 2 * math.pi))
    start = s[(int(np.argmax(gaps)) + 1) % len(s)]
    out = start + np.mod(a - start, 2 * math.pi)
    shift = 2 * math.pi * math.floor((start + math.pi) / (2 * math.pi))
    return out - shift


def jitter_histogram(model: PhaseJitterModel, repetitions: int, rng: np.random.Generator,
                     channel_fn=None, n_phases: int = 41) -> JitterHistogram:
    """Simulated histogram of cross-Ramsey iSWAP phases over repeated runs.

    Each repetition draws one trigger delay and fits the full drive-phase
    sweep.  Phases are unwrapped onto one arc before peaks and spread are
    evaluated.
    """
    if repetitions < 2:
        raise InsufficientData("need at least two repetitions")
    draws = sample_phase_jitter(model, rng, size=repetitions)
    cache: dict = {}
    phases = []
    for d in draws:
        key = round(float(d), 12)
        if key not in cache:
            cache[key] = cross_ramsey_phase(float(d), channel_fn, n_phases)
        phases.append(cache[key])
    unwrapped = unwrap_arc(phases)
    peaks = cluster_peaks(unwrapped, tol=max(1e-6, 0.1 * model.step))
    return JitterHistogram(phases=unwrapped, peaks=peaks, separations=list(np.diff(peaks)),
                           spread=float(unwrapped.std(ddof=1)))


# -- type C: drive-amplitude-dependent dephasing -----------------------------------------------

_DEFAULT_T2_UNDRIVEN = 27e-6  # Q2 T2*
_DEFAULT_RABI_AT_4US = 4.85e6  # iSWAP Rabi rate for a 103 ns pulse


def _default_c0() -> float:
    return 1 / (2 * math.pi * _DEFAULT_T2_UNDRIVEN)


def _default_c2() -> float:
    return (1 / (2 * math.pi * 4e-6) - _default_c0()) / _DEFAULT_RABI_AT_4US**2


@dataclass(frozen=True)
class AmplitudeDephasingModel:
    """Frequency-fluctuation width sigma(Omega) = c0 + c2 Omega^2 (Hz; Omega in Hz).

    Defaults: c0 gives the undriven Q2 T2* of 27 us and c2 puts the
    effective T2 at 4 us for a 4.85 MHz Rabi rate; a 3.1 MHz drive then
    sits at 8 us.
    """

    c0: float = field(default_factory=_default_c0)
    c2: float = field(default_factory=_default_c2)

    def sigma(self, rabi: float) -> float:
        return self.c0 + self.c2 * rabi**2


def effective_t2(model: AmplitudeDephasingModel, rabi: float) -> float:
    """T2 = 1 / (2 pi sigma(Omega))."""
    if rabi < 0:
        raise ValueError("Rabi rate must be non-negative")
    s = model.sigma(rabi)
    if not s > 0:
        raise NegativeSigma(f"sigma({rabi:.4g} Hz) = {s:.4g} Hz is not positive")
    return 1 / (2 * math.pi * s)


def with_drive_dephasing(noise: SimpleNoiseModel, model: AmplitudeDephasingModel, rabi: float) -> SimpleNoiseModel:
    """Simple model whose two-qubit gates see the reduced T2 on both qubits."""
    t2 = effective_t2(model, rabi)
    drive = tuple(min(t2, t) for t in noise.t2_star)
    return noise.with_(drive_t2_star=drive)


# -- type A: spurious tones ---------------------------------------------------------------------


@dataclass(frozen=True)
class SpuriousToneModel:
    """Extra carrier tones (frequency in Hz, amplitude relative to the main tone)."""

    tones: tuple = ()

    def __post_init__(self):
        tones = tuple((float(f), float(a)) for f, a in self.tones)
        if any(a < 0 for _, a in tones):
            raise InvalidNoise("tone amplitudes must be non-negative")
        object.__setattr__(self, "tones", tones)

    @classmethod
    def harmonics(cls, sideband_frequency: float, carrier: float, orders: Sequence[int], amplitude: float):
        """Tones at carrier + k * sideband for each k in ``orders``."""
        return cls(tuple((carrier + k * sideband_frequency, amplitude) for k in orders))


def add_spurious_tones(pulse: FluxPulse, model: SpuriousToneModel, dc_flux: float = 0.0):
    """Flux waveform of the pulse plus the listed tones, all under the pulse envelope."""
    tones = [(f, a) for f, a in model.tones if a != 0]

    def wf(t):
        if t < 0 or t > pulse.duration:
            return dc_flux
        drive = math.cos(2 * math.pi * pulse.frequency * t + pulse.phase)
        for f, a in tones:
            drive += a * math.cos(2 * math.pi * f * t)
        return dc_flux + envelope(pulse, t) * pulse.amplitude * drive

    return wf
