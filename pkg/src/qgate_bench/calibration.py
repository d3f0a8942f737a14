"""Calibration pipelines for the parametric CZ and iSWAP gates.

Every pipeline talks to a pulse backend (``pulse_backends``): chevron scans
use transfer populations, phase calibrations run short circuits of ideal
single-qubit rotations around the simulated two-qubit channel and fit the
resulting fringes.  Angles follow ``gates.virtual_z``: a compensation phase
``c`` on a qubit means ``virtual_z(c)`` is applied after every gate.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, brentq, curve_fit, least_squares

from . import qmath
from .errors import ConfigError, FitFailure, InsufficientData, NoOscillationFound
from .gates import canonical_angle, on_qubit, rotation, virtual_z
from .pulse_backends import as_pulse_backend, corrected
from .qmath import SuperOperator

N_BETA = 41
RMS_REJECT = 0.1


# -- sinusoid fits ----------------------------------------------------------------------


@dataclass
class PhaseFit:
    """offset + amplitude * cos(omega x + phase) * exp(-x / decay)."""

    amplitude: float
    phase: float
    offset: float
    omega: float
    rms: float
    phase_err: float = 0.0
    omega_err: float = 0.0
    decay: float = math.inf

    @property
    def frequency(self) -> float:
        return self.omega / (2 * math.pi)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        damp = 1.0 if math.isinf(self.decay) else np.exp(-x / self.decay)
        return self.offset + self.amplitude * np.cos(self.omega * x + self.phase) * damp

    def to_dict(self) -> dict:
        return {k: _num(v) for k, v in asdict(self).items()}


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _accept(fit: PhaseFit, max_rel_rms: float) -> PhaseFit:
    if not np.isfinite(fit.rms) or fit.rms > max_rel_rms * abs(fit.amplitude) + 1e-12:
        raise FitFailure(f"sinusoid fit residual {fit.rms:.3g} exceeds {max_rel_rms} of amplitude {fit.amplitude:.3g}")
    return fit


def _fixed_frequency_fit(x, y, omega):
    a = np.column_stack([np.ones_like(x), np.cos(omega * x), np.sin(omega * x)])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    c, p, q = coef
    resid = y - a @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    amp = math.hypot(p, q)
    # p cos + q sin = amp cos(omega x + phase) with phase = atan2(-q, p)
    dof = max(len(x) - 3, 1)
    cov = np.linalg.pinv(a.T @ a) * float(resid @ resid) / dof
    phase_err = math.sqrt(max(q * q * cov[1, 1] + p * p * cov[2, 2], 0.0)) / amp if amp > 0 else math.inf
    return PhaseFit(amp, math.atan2(-q, p), float(c), omega, rms, phase_err)


def _fft_seed(x, y):
    n = len(x)
    dx = (x[-1] - x[0]) / (n - 1)
    pad = 16 * n
    spec = np.abs(np.fft.rfft(y - y.mean(), pad))
    k = int(np.argmax(spec[1:])) + 1
    return 2 * math.pi * k / (pad * dx)


def _sinusoid_curve_fit(model, x, y, p0, damped: bool):
    if damped:
        return curve_fit(model, x, y, p0=p0, method="lm", maxfev=20000)
    popt, pcov = curve_fit(lambda xx, c, p, q, w: model(xx, c, p, q, w, 0.0), x, y, p0=p0[:4],
                           method="lm", maxfev=20000)
    return np.append(popt, 0.0), np.pad(pcov, ((0, 1), (0, 1)))


def fit_sinusoid(x: Sequence[float], y: Sequence[float], omega: float | None = None, damped: bool = False,
                 max_rel_rms: float = RMS_REJECT) -> PhaseFit:
    """Least-squares sinusoid; FFT-seeded Levenberg-Marquardt when ``omega`` is free.

    With a known angular frequency the fit is linear.  Raises FitFailure if
    the residual RMS exceeds ``max_rel_rms`` times the fitted amplitude.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 4 or len(x) != len(y):
        raise InsufficientData("need at least 4 (x, y) samples of equal length")
    if omega is not None and not damped:
        return _accept(_fixed_frequency_fit(x, y, omega), max_rel_rms)
    w0 = omega if omega is not None else _fft_seed(x, y)
    seed = _fixed_frequency_fit(x, y, w0)
    span = x[-1] - x[0]

    def model(xx, c, p, q, w, g):
        return c + np.exp(-g * (xx - x[0])) * (p * np.cos(w * xx) + q * np.sin(w * xx))

    p0 = [seed.offset, seed.amplitude * math.cos(seed.phase), -seed.amplitude * math.sin(seed.phase), w0, 0.0]
    try:
        with warnings.catch_warnings():
            # exact data leaves the covariance undefined; errors then read as inf
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = _sinusoid_curve_fit(model, x, y, p0, damped)
    except (RuntimeError, ValueError) as exc:
        raise FitFailure(f"sinusoid fit did not converge: {exc}") from exc
    c, p, q, w, g = popt
    if w < 0:
        w, q = -w, -q
    amp = math.hypot(p, q)
    phase = math.atan2(-q, p)
    resid = y - model(x, c, p, q, w, g)
    rms = float(np.sqrt(np.mean(resid**2)))
    perr = np.sqrt(np.clip(np.diag(pcov), 0, None)) if np.all(np.isfinite(pcov)) else np.full(5, np.inf)
    phase_err = math.hypot(q * perr[1], p * perr[2]) / amp if amp > 0 else math.inf
    decay = 1.0 / g if g > 1e-12 / max(span, 1e-30) else math.inf
    if damped and math.isfinite(decay):
        amp *= math.exp(x[0] / decay)
    fit = PhaseFit(amp, phase, float(c), float(w), rms, phase_err, float(perr[3]), decay)
    return _accept(fit, max_rel_rms)


def angle_of_max(fit: PhaseFit) -> float:
    """x in [-pi/omega, pi/omega) where the fitted fringe peaks (for positive amplitude)."""
    return canonical_angle(-fit.phase) / fit.omega


def _circular_mean(angles) -> float:
    return math.atan2(np.mean(np.sin(angles)), np.mean(np.cos(angles)))


def _nearest_branch(value: float, reference: float, period: float) -> float:
    """value + k * period closest to reference."""
    return value + period * round((reference - value) / period)


# -- chevrons ----------------------------------------------------------------------


@dataclass
class ChevronMap:
    """Transfer population on a (drive detuning, pulse length) grid.

    ``detunings`` are relative to ``center_frequency`` (Hz); rows of
    ``population`` follow the detunings, columns the durations.
    """

    detunings: np.ndarray
    durations: np.ndarray
    population: np.ndarray
    center_frequency: float = 0.0
    gate: str = "iswap"
    amplitude: float = 0.0

    def __post_init__(self):
        self.detunings = np.asarray(self.detunings, dtype=float)
        self.durations = np.asarray(self.durations, dtype=float)
        self.population = np.asarray(self.population, dtype=float)
        if self.population.shape != (len(self.detunings), len(self.durations)):
            raise InsufficientData(
                f"population grid {self.population.shape} does not match axes "
                f"({len(self.detunings)}, {len(self.durations)})")
        if self.population.size and (self.population.min() < -1e-9 or self.population.max() > 1 + 1e-9):
            raise ValueError("populations must lie in [0, 1]")

    @property
    def frequencies(self) -> np.ndarray:
        return self.center_frequency + self.detunings

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["detuning_hz", "duration_ns", "population"])
            for i, d in enumerate(self.detunings):
                for j, t in enumerate(self.durations):
                    w.writerow([f"{d:.3f}", f"{t * 1e9:.4f}", f"{self.population[i, j]:.10f}"])


def rabi_chevron(rabi: float, detunings, durations, offset: float = 0.0) -> np.ndarray:
    """Analytic two-level transfer probability, Omega^2/W^2 sin^2(pi W t), W = sqrt(Omega^2 + Delta^2)."""
    d = np.asarray(detunings, dtype=float)[:, None] - offset
    t = np.asarray(durations, dtype=float)[None, :]
    w = np.sqrt(rabi**2 + d**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(w > 0, (rabi / np.where(w > 0, w, 1)) ** 2 * np.sin(math.pi * w * t) ** 2, 0.0)
    return out


def _lorentz(d, h, d0, w):
    return h * w**2 / (w**2 + (d - d0) ** 2)


def _resonance_from_contrast(detunings, contrast) -> float:
    k = int(np.argmax(contrast))
    if 0 < k < len(detunings) - 1:
        try:
            sel = contrast > 0.3 * contrast[k]
            if sel.sum() >= 4:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", OptimizeWarning)
                    popt, _ = curve_fit(_lorentz, detunings[sel], contrast[sel],
                                        p0=[contrast[k], detunings[k], np.ptp(detunings[sel]) / 4 + 1e-3])
                if detunings[0] <= popt[1] <= detunings[-1]:
                    return float(popt[1])
        except (RuntimeError, ValueError):
            pass
        # parabola through the top three points
        y0, y1, y2 = contrast[k - 1:k + 2]
        denom = y0 - 2 * y1 + y2
        step = detunings[k + 1] - detunings[k]
        if denom < 0:
            return float(detunings[k] + 0.5 * step * (y0 - y2) / denom)
    return float(detunings[k])


def _column_time(durations, column, target: str) -> float:
    """First transfer maximum (``full_transfer``) or first return (``full_return``) in a column."""
    fit = fit_sinusoid(durations, column, max_rel_rms=0.25)
    # amplitude >= 0: transfer maxima at w t + phase = 0, returns at pi (mod 2 pi)
    period = 2 * math.pi / fit.omega
    t_peak = (-fit.phase / fit.omega) % period
    if target == "full_transfer":
        return t_peak
    return t_peak + period / 2


def find_gate_length(cmap: ChevronMap, target: str | None = None, min_contrast: float = 0.2) -> tuple[float, float]:
    """(drive frequency, pulse length) for a full transfer or a full return.

    The resonance is the detuning of maximum contrast (Lorentzian-refined);
    the time comes from a sinusoid fit of the grid column nearest to it.
    Raises NoOscillationFound if the map never oscillates.
    """
    target = target or ("full_return" if cmap.gate == "cz" else "full_transfer")
    if target not in ("full_transfer", "full_return"):
        raise ValueError(f"unknown target {target!r}")
    pop = cmap.population
    if pop.size == 0 or pop.shape[1] < 5:
        raise NoOscillationFound("chevron has too few duration samples")
    contrast = pop.max(axis=1) - pop.min(axis=1)
    if contrast.max() < min_contrast:
        raise NoOscillationFound(f"maximum contrast {contrast.max():.3g} below {min_contrast}")
    d0 = _resonance_from_contrast(cmap.detunings, contrast)
    k = int(np.argmin(np.abs(cmap.detunings - d0)))
    column = pop[k]
    # the column must rise and come back down at least once
    if np.argmax(column) == len(column) - 1 and target == "full_transfer":
        raise NoOscillationFound("no transfer maximum inside the scanned durations")
    try:
        tau = _column_time(cmap.durations, column, target)
    except (FitFailure, ValueError) as exc:
        raise NoOscillationFound(f"could not fit the resonant column: {exc}") from exc
    if not cmap.durations[0] <= tau <= cmap.durations[-1] * 1.05:
        raise NoOscillationFound(f"{target} time {tau:.3e} s outside the scanned durations")
    return cmap.center_frequency + d0, float(tau)


def chevron_scan(model, gate: str, amplitude: float, detunings: Sequence[float], durations: Sequence[float],
                 center: float | None = None) -> ChevronMap:
    """Transfer population |01>->|10> (iSWAP) or |11>->|20> (CZ) over a grid."""
    backend = as_pulse_backend(model)
    center = backend.transition_frequency(gate) if center is None else center
    det = np.asarray(detunings, dtype=float)
    dur = np.asarray(durations, dtype=float)
    pop = np.clip(backend.scan(gate, amplitude, center + det, dur), 0.0, 1.0)
    return ChevronMap(det, dur, pop, center, gate.lower(), amplitude)


def _parabola_peak(x, y, maximize=True) -> float:
    k = int(np.argmax(y) if maximize else np.argmin(y))
    k = min(max(k, 1), len(x) - 2)
    c = np.polyfit(x[k - 1:k + 2] - x[k], y[k - 1:k + 2], 2)
    if (c[0] < 0) == maximize and c[0] != 0:
        xv = -c[1] / (2 * c[0])
        if abs(xv) <= (x[k + 1] - x[k - 1]):
            return float(x[k] + xv)
    return float(x[k])


def locate_resonance(backend, gate: str, amplitude: float, n_freq: int = 21, max_steps: int = 4):
    """Coarse chevron that follows the contrast maximum until it lies inside the window."""
    f_est, rabi_est = backend.resonance_estimate(gate, amplitude)
    rabi_est = max(rabi_est, 0.2e6)
    step = rabi_est
    cycles = 1.6 if gate == "cz" else 0.9
    durations = np.linspace(0, cycles / rabi_est, 41)[1:]
    center = f_est
    maps = []
    for _ in range(max_steps):
        det = (np.arange(n_freq) - n_freq // 2) * step
        cmap = chevron_scan(backend, gate, amplitude, det, durations, center=center)
        maps.append(cmap)
        contrast = cmap.population.max(axis=1)
        k = int(np.argmax(contrast))
        if 1 < k < n_freq - 2 and contrast[k] > 0.5:
            return cmap.center_frequency + cmap.detunings[k], maps
        center = center + det[k] + (0 if contrast[k] > 0.5 else 0)
        if not 1 < k < n_freq - 2:
            center += np.sign(det[k]) * step * (n_freq // 2 - 2)
    raise NoOscillationFound(f"no resonance found near {f_est:.6g} Hz at amplitude {amplitude}")


def fine_chevron(backend, gate: str, amplitude: float, f_guess: float, rabi_guess: float,
                 n_freq: int = 15, n_time: int = 81) -> ChevronMap:
    span = 3.0 * rabi_guess
    cycles = 1.5 if gate == "cz" else 0.9
    durations = np.linspace(0, cycles / rabi_guess, n_time)[1:]
    det = np.linspace(-span, span, n_freq)
    return chevron_scan(backend, gate, amplitude, det, durations, center=f_guess)


def measure_chevron(model, gate: str, amplitude: float) -> ChevronMap:
    """Coarse resonance search followed by a fine chevron around the first full cycle."""
    backend = as_pulse_backend(model)
    _, coarse_maps = locate_resonance(backend, gate, amplitude)
    if gate == "cz":
        f0, tau0 = find_gate_length(coarse_maps[-1], "full_return")
        return fine_chevron(backend, "cz", amplitude, f0, 1.0 / tau0)
    f0, tau0 = find_gate_length(coarse_maps[-1], "full_transfer")
    return fine_chevron(backend, "iswap", amplitude, f0, 1.0 / (2 * tau0))


def refine_pulse(backend, gate: str, amplitude: float, frequency: float, tau: float,
                 target: str, rel: float = 0.06, n: int = 9, refine_frequency: bool = True):
    """Local 1-D optimisation of length (and, for transfers, frequency) with exact pulses."""
    taus = tau * (1 + np.linspace(-rel, rel, n))
    pulses = [backend.make_pulse(gate, amplitude, frequency, t) for t in taus]
    p = backend.transfer(gate, pulses)
    tau = _parabola_peak(taus, p, maximize=(target == "full_transfer"))
    if refine_frequency and target == "full_transfer":
        width = 0.3 / tau
        freqs = frequency + np.linspace(-width, width, n)
        p = backend.transfer(gate, [backend.make_pulse(gate, amplitude, f, tau) for f in freqs])
        frequency = _parabola_peak(freqs, p, maximize=True)
        taus = tau * (1 + np.linspace(-rel / 2, rel / 2, n))
        p = backend.transfer(gate, [backend.make_pulse(gate, amplitude, frequency, t) for t in taus])
        tau = _parabola_peak(taus, p, maximize=True)
    final = float(backend.transfer(gate, [backend.make_pulse(gate, amplitude, frequency, tau)])[0])
    return frequency, tau, final


# -- calibration circuits --------------------------------------------------------------

GROUND = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)


def _x90(q):
    return on_qubit(rotation(0.0, math.pi / 2), q)


def _y90(q):
    return on_qubit(rotation(math.pi / 2, math.pi / 2), q)


def _xpi(q):
    return on_qubit(rotation(0.0, math.pi), q)


def _r90(axis, q):
    return on_qubit(rotation(axis, math.pi / 2), q)


def _vz(phi, q):
    return on_qubit(virtual_z(phi), q)


def run_circuit(ops, rho=None) -> np.ndarray:
    """Apply unitaries (4 x 4 arrays) and channels (SuperOperator) in order from |00>."""
    rho = GROUND.copy() if rho is None else np.asarray(rho, dtype=complex)
    for op in ops:
        if isinstance(op, SuperOperator):
            rho = op.apply(rho)
        else:
            rho = op @ rho @ op.conj().T
    return rho


def excited_population(rho: np.ndarray, qubit: int) -> float:
    p = np.real(np.diag(rho))
    return float(p[2] + p[3]) if qubit == 0 else float(p[1] + p[3])


def _betas(n_points: int = N_BETA) -> np.ndarray:
    return np.linspace(0, 2 * math.pi, n_points, endpoint=False)


def _as_channel(gate) -> SuperOperator:
    if isinstance(gate, SuperOperator):
        return gate
    return qmath.unitary_to_superop(np.asarray(gate, dtype=complex))


def sq_phase_fringes(gate, n_points: int = N_BETA) -> dict:
    """Fringes of X90 - G - Z_phi - G - Z_phi - X90 on each qubit (other qubit in |0>).

    Returns per qubit the swept phases, the doubled-gate populations and the
    single-gate populations (X90 - G - Z_phi - X90) used to pick the branch.
    """
    g = _as_channel(gate)
    phis = _betas(n_points)
    out = {}
    for q in (0, 1):
        double = [excited_population(run_circuit([_x90(q), g, _vz(p, q), g, _vz(p, q), _x90(q)]), q) for p in phis]
        single = [excited_population(run_circuit([_x90(q), g, _vz(p, q), _x90(q)]), q) for p in phis]
        out[q] = (phis, np.array(double), np.array(single))
    return out


def sq_phases_from_channel(gate, n_points: int = N_BETA):
    """Compensation phases (phi10, phi01) of a controlled-phase channel, plus the fits."""
    fr = sq_phase_fringes(gate, n_points)
    phases, fits = [], {}
    for q in (0, 1):
        phis, double, single = fr[q]
        f2 = fit_sinusoid(phis, double, omega=2.0)
        f1 = fit_sinusoid(phis, single, omega=1.0)
        coarse = angle_of_max(f1)
        fine = _nearest_branch(angle_of_max(f2), coarse, math.pi)
        phases.append(canonical_angle(fine))
        fits[q] = {"double": f2, "single": f1}
    return (phases[0], phases[1]), fits


def calibrate_sq_phases_cz(model, pulse, n_points: int = N_BETA) -> tuple[float, float]:
    """Single-qubit compensation phases (phi10, phi01) for a CZ pulse.

    The inverse gate of the paper's sequence is realised by repeating the
    pulse: the target controlled phase is pi, and the dispersive phases of
    the two applications add, which is what the doubled fringe measures.
    """
    backend = as_pulse_backend(model)
    gate = backend.channels([pulse], decoherence=False)[0]
    phases, _ = sq_phases_from_channel(gate, n_points)
    return phases


def controlled_phase_fringes(gate, n_points: int = N_BETA):
    g = _as_channel(gate)
    betas = _betas(n_points)
    out = {}
    for label, lead in (("I", np.eye(4)), ("X", _xpi(0))):
        out[label] = np.array([excited_population(run_circuit([lead, _x90(1), g, _r90(b, 1)]), 1) for b in betas])
    return betas, out


def measure_controlled_phase(target, pulse=None, corrections=(0.0, 0.0), n_points: int = N_BETA,
                             return_fits: bool = False):
    """Controlled phase from the pi / no-pi Ramsey pair on Q2.

    ``target`` is either a gate channel / unitary (then ``pulse`` is
    ignored) or a pulse backend or DeviceModel together with ``pulse``.
    p(beta) = 1/2 + 1/2 cos(beta + phase); the result is the fitted phase
    difference, canonicalised to (-pi, pi].
    """
    if pulse is None:
        gate = _as_channel(target)
    else:
        backend = as_pulse_backend(target)
        gate = corrected(backend.channels([pulse], decoherence=False)[0], corrections)
    betas, pops = controlled_phase_fringes(gate, n_points)
    f_i = fit_sinusoid(betas, pops["I"], omega=1.0)
    f_x = fit_sinusoid(betas, pops["X"], omega=1.0)
    phi = canonical_angle(f_x.phase - f_i.phase)
    if return_fits:
        return phi, {"I": f_i, "X": f_x}
    return phi


# -- geometric phase ------------------------------------------------------------------


def cz_cycle_time(detuning, rabi: float, zeta: float = 0.0):
    """Duration of one full |11>-|20> cycle, 1 / sqrt(Omega^2 + (Delta - zeta)^2), Hz inputs."""
    return 1.0 / np.sqrt(rabi**2 + (np.asarray(detuning, dtype=float) - zeta) ** 2)


def geometric_phase(detuning, rabi: float, zeta: float = 0.0):
    """Total controlled phase pi {1 - cos[arctan(Omega / Delta)]} + 2 pi zeta tau(Delta).

    The arctangent is taken on the branch (0, pi), i.e. the polar angle of
    the rotation axis, so the phase is pi at zero detuning and tends to 0
    for large positive and to 2 pi for large negative detuning.
    """
    d = np.asarray(detuning, dtype=float)
    cos_theta = d / np.sqrt(rabi**2 + d**2) if rabi != 0 else np.sign(d)
    return math.pi * (1 - cos_theta) + 2 * math.pi * zeta * cz_cycle_time(d, rabi, zeta)


@dataclass
class GeometricFit:
    rabi: float
    zeta: float
    rabi_err: float
    zeta_err: float
    rms: float

    def __call__(self, detuning):
        return geometric_phase(detuning, self.rabi, self.zeta)

    def detuning_for(self, phase: float = math.pi, bracket=None) -> float:
        """Detuning where the model phase equals ``phase`` (mod 2 pi)."""
        lo, hi = bracket or (-5 * abs(self.rabi), 5 * abs(self.rabi))

        def f(d):
            return canonical_angle(float(self(d)) - phase)

        grid = np.linspace(lo, hi, 801)
        vals = np.array([f(d) for d in grid])
        for k in np.argsort(np.abs(grid)):
            if k + 1 < len(grid) and vals[k] * vals[k + 1] <= 0 and abs(vals[k] - vals[k + 1]) < math.pi:
                return float(brentq(f, grid[k], grid[k + 1]))
        raise FitFailure(f"model phase never reaches {phase:.4f} rad in [{lo:.3g}, {hi:.3g}] Hz")

    def to_dict(self) -> dict:
        return {k: _num(v) for k, v in asdict(self).items()}


def fit_phase_vs_detuning(detunings: Sequence[float], phases: Sequence[float],
                          rabi_guess: float | None = None) -> GeometricFit:
    """Least-squares (Omega, zeta) from controlled phases measured against detuning.

    Residuals are wrapped onto (-pi, pi] so data straddling the +/- pi cut
    fit cleanly.  A coarse grid seeds the optimiser.
    """
    d = np.asarray(detunings, dtype=float)
    y = np.asarray(phases, dtype=float)
    if len(d) < 8 or len(d) != len(y):
        raise InsufficientData("need at least 8 (detuning, phase) points")
    if not (np.any(d < 0) and np.any(d > 0)):
        raise InsufficientData("detunings must span both signs")
    scale = float(np.max(np.abs(d)))

    def resid(params):
        r, z = params
        return np.angle(np.exp(1j * (geometric_phase(d, r * scale, z * scale) - y)))

    r0 = (rabi_guess or scale) / scale
    best = None
    for r in np.linspace(0.2, 3.0, 29) * r0:
        for z in np.linspace(-1.0, 1.0, 41) * r:
            c = float(np.sum(resid((r, z)) ** 2))
            if best is None or c < best[0]:
                best = (c, r, z)
    sol = least_squares(resid, x0=[best[1], best[2]], method="lm", xtol=1e-14, ftol=1e-14)
    if not sol.success:
        raise FitFailure(f"geometric phase fit failed: {sol.message}")
    r, z = sol.x
    res = sol.fun
    dof = max(len(d) - 2, 1)
    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac) * float(res @ res) / dof
        errs = np.sqrt(np.clip(np.diag(cov), 0, None)) * scale
    except np.linalg.LinAlgError:
        errs = np.array([math.inf, math.inf])
    return GeometricFit(abs(r) * scale, z * scale, float(errs[0]), float(errs[1]), float(np.sqrt(np.mean(res**2))))


# -- CZ pipeline -------------------------------------------------------------------------


@dataclass
class CZCalibration:
    drive_frequency: float
    gate_length: float
    phi10: float
    phi01: float
    phase: float
    detuning: float
    amplitude: float = 0.0
    resonance_frequency: float = 0.0
    rabi: float = 0.0
    zeta: float = 0.0
    return_population: float = 1.0
    geometric_fit: GeometricFit | None = None
    phase_scan: list = field(default_factory=list)

    def __post_init__(self):
        self.phase = canonical_angle(self.phase)
        if not self.gate_length > 0:
            raise ValueError("gate length must be positive")

    @property
    def corrections(self) -> tuple[float, float]:
        return (self.phi10, self.phi01)

    def pulse(self, backend):
        return backend.make_pulse("cz", self.amplitude, self.drive_frequency, self.gate_length)

    def to_dict(self) -> dict:
        d = {k: (_num(v) if isinstance(v, (int, float)) else v) for k, v in asdict(self).items()
             if k not in ("geometric_fit", "phase_scan")}
        d["geometric_fit"] = self.geometric_fit.to_dict() if self.geometric_fit else None
        d["phase_scan"] = [{"detuning_hz": _num(a), "gate_length_s": _num(b), "phase_rad": _num(c)}
                           for a, b, c in self.phase_scan]
        return d


def _cz_point(backend, amplitude, frequency, tau, n_points):
    """(length, phi10, phi01, controlled phase, return population) of one CZ pulse."""
    f, tau, _ = refine_pulse(backend, "cz", amplitude, frequency, tau, "full_return", refine_frequency=False)
    pulse = backend.make_pulse("cz", amplitude, frequency, tau)
    raw = backend.channels([pulse], decoherence=False)[0]
    (p10, p01), _ = sq_phases_from_channel(raw, n_points)
    phi = measure_controlled_phase(corrected(raw, (p10, p01)), n_points=n_points)
    ret = 1 - float(backend.transfer("cz", [pulse])[0])
    return tau, p10, p01, phi, ret


def calibrate_cz(model, amplitude: float, n_detunings: int = 10, n_points: int = N_BETA,
                 target_phase: float = math.pi, phase_tol: float = 0.01, max_iter: int = 4,
                 chevron: ChevronMap | None = None) -> CZCalibration:
    """Chevron, per-detuning controlled phase, geometric fit, then tune the detuning to pi.

    Detunings follow the published convention Delta = s (f - f_res) with the
    backend's ``detuning_sign`` s, chosen so that the phase model keeps its
    published form.
    """
    backend = as_pulse_backend(model)
    sign = getattr(backend, "detuning_sign", 1.0)
    if chevron is None:
        chevron = measure_chevron(backend, "cz", amplitude)
    f_res, tau_res = find_gate_length(chevron, "full_return")
    rabi = 1.0 / tau_res
    # phase against detuning, both signs, lengths from the analytic cycle time
    offset = tau_res - 1.0 / rabi
    dets = np.linspace(-1.2 * rabi, 1.2 * rabi, n_detunings)
    scan = []
    for dl in dets:
        tau = float(cz_cycle_time(dl, rabi)) + offset
        t, _, _, phi, _ = _cz_point(backend, amplitude, f_res + sign * dl, tau, n_points)
        scan.append((float(dl), t, phi))
    gfit = fit_phase_vs_detuning([s[0] for s in scan], [s[2] for s in scan], rabi_guess=rabi)
    delta = gfit.detuning_for(target_phase, bracket=(dets[0], dets[-1]))
    # secant on measured phases to absorb model mismatch
    history = []
    for _ in range(max_iter):
        tau = float(cz_cycle_time(delta, gfit.rabi, gfit.zeta)) + offset
        tau, p10, p01, phi, ret = _cz_point(backend, amplitude, f_res + sign * delta, tau, n_points)
        err = canonical_angle(phi - target_phase)
        history.append((delta, err))
        if abs(err) < phase_tol:
            break
        if len(history) >= 2 and history[-1][1] != history[-2][1]:
            (d1, e1), (d2, e2) = history[-2], history[-1]
            delta = d2 - e2 * (d2 - d1) / (e2 - e1)
        else:
            slope = (float(gfit(delta + 1e3)) - float(gfit(delta - 1e3))) / 2e3
            delta = delta - err / slope if slope != 0 else delta
    return CZCalibration(drive_frequency=f_res + sign * delta, gate_length=tau, phi10=p10, phi01=p01, phase=phi,
                         detuning=delta, amplitude=amplitude, resonance_frequency=f_res, rabi=gfit.rabi,
                         zeta=gfit.zeta, return_population=ret, geometric_fit=gfit, phase_scan=scan)


# -- iSWAP pipeline -----------------------------------------------------------------------


@dataclass
class ISwapCalibration:
    drive_frequency: float
    gate_length: float
    phi10: float
    phi01: float
    phase_offset: float  # phi_0: the iSWAP phase is eta = drive_phase_sign * drive phase + phi_0
    frame_correction: float  # phi01 - phi10
    zeta_total: float
    amplitude: float = 0.0
    drive_phase: float = 0.0
    phase_zz: float = 0.0
    dispersive_phase: float = 0.0
    transfer: float = 1.0
    method: str = "cross_ramsey"
    drive_phase_sign: float = 1.0
    fits: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.gate_length > 0:
            raise ValueError("gate length must be positive")

    @property
    def corrections(self) -> tuple[float, float]:
        return (self.phi10, self.phi01)

    @property
    def rabi(self) -> float:
        return 1.0 / (2 * self.gate_length)

    def pulse(self, backend, extra_phase: float = 0.0):
        """Calibrated pulse; ``extra_phase`` shifts the iSWAP phase eta."""
        return backend.make_pulse("iswap", self.amplitude, self.drive_frequency, self.gate_length,
                                  phase=self.drive_phase + self.drive_phase_sign * extra_phase)

    def to_dict(self) -> dict:
        d = {k: (_num(v) if isinstance(v, (int, float)) else v) for k, v in asdict(self).items() if k != "fits"}
        d["fits"] = {k: v.to_dict() for k, v in self.fits.items()}
        return d


def iswap_ramsey_fringes(gate, gate_inverse, n_points: int = N_BETA) -> dict:
    """X90(q) - U(other) - G - G' - R90(2 beta)(q) for U in {I, X90, Xpi}, q in {Q1, Q2}."""
    g, gi = _as_channel(gate), _as_channel(gate_inverse)
    betas = _betas(n_points)
    out = {}
    for q in (0, 1):
        other = 1 - q
        for label, lead in (("I", np.eye(4)), ("X90", _x90(other)), ("Xpi", _xpi(other))):
            out[(q, label)] = np.array([excited_population(run_circuit([_x90(q), lead, g, gi, _r90(2 * b, q)]), q)
                                        for b in betas])
    return betas, out


def iswap_phases_from_channels(gate, gate_inverse, n_points: int = N_BETA):
    """(balanced compensation per qubit, common dispersive phase, ZZ phase, fits).

    Per qubit, p(beta) = {1 + cos[2(beta + s)]}/2 with the other qubit in
    |0>, shifted by the ZZ phase z with it in |1>, and by z/2 (with
    contrast cos z) with it in superposition.  The balanced compensation
    s + z/2 comes from the superposition fringe.
    """
    betas, fr = iswap_ramsey_fringes(gate, gate_inverse, n_points)
    fits, comp, common, zz = {}, [], [], []
    for q in (0, 1):
        f_i = fit_sinusoid(betas, fr[(q, "I")], omega=2.0)
        f_x = fit_sinusoid(betas, fr[(q, "Xpi")], omega=2.0)
        f_h = fit_sinusoid(betas, fr[(q, "X90")], omega=2.0)
        s = canonical_angle(f_i.phase) / 2  # mod pi
        z = canonical_angle(f_x.phase - f_i.phase) / 2  # |z| < pi / 2 assumed
        c = _nearest_branch(canonical_angle(f_h.phase) / 2, s + z / 2, math.pi)
        if q == 1:
            # both qubits must sit on the same branch; the drive phase absorbs a common pi
            c = _nearest_branch(c, comp[0], math.pi)
            s = _nearest_branch(s, common[0], math.pi)
        comp.append(c)
        common.append(s)
        zz.append(z)
        fits.update({f"q{q + 1}_I": f_i, f"q{q + 1}_Xpi": f_x, f"q{q + 1}_X90": f_h})
    return (comp[0], comp[1]), float(np.mean(common)), float(np.mean(zz)), fits


def cross_ramsey_population(gate) -> float:
    """X90 x X90 - G - (X90 on Q1, Y90 on Q2); Q2 excited population."""
    return excited_population(run_circuit([_x90(0), _x90(1), _as_channel(gate), _x90(0), _y90(1)]), 1)


def transfer_ramsey_population(gate, lead: str) -> float:
    """X90(Q1), U(Q2) in {I, Xpi} - G - X90(Q2); Q2 excited population."""
    u = np.eye(4) if lead == "I" else _xpi(1)
    return excited_population(run_circuit([_x90(0), u, _as_channel(gate), _x90(1)]), 1)


def drive_phase_offset_from_scan(drive_phases, gates, phase_zz: float, min_signal: float = 0.05):
    """phi_0 from a drive-phase sweep of corrected gates.

    Uses the cross-Ramsey fringe p = 1/2 {1 - sin(phi + phi_0) sin(z/2)} when
    |sin(z/2)| is large enough, otherwise the pi / no-pi transfer pair
    p_I = {1 - sin(phi + phi_0 + z/2)}/2 and p_X = {1 + sin(phi + phi_0 - z/2)}/2.
    """
    x = np.asarray(drive_phases, dtype=float)
    fits = {}
    if abs(math.sin(phase_zz / 2)) >= min_signal:
        y = np.array([cross_ramsey_population(g) for g in gates])
        f = fit_sinusoid(x, y, omega=1.0)
        fits["cross_ramsey"] = f
        # -1/2 sin(z/2) sin(x + phi0) = A cos(x + phase) with A > 0  ->  phi0 = phase -/+ pi/2
        phi0 = f.phase + (-math.pi / 2 if math.sin(phase_zz / 2) > 0 else math.pi / 2)
        return canonical_angle(phi0), "cross_ramsey", fits
    y_i = np.array([transfer_ramsey_population(g, "I") for g in gates])
    y_x = np.array([transfer_ramsey_population(g, "X") for g in gates])
    f_i = fit_sinusoid(x, y_i, omega=1.0)
    f_x = fit_sinusoid(x, y_x, omega=1.0)
    fits.update({"transfer_I": f_i, "transfer_Xpi": f_x})
    est_i = f_i.phase - math.pi / 2 - phase_zz / 2
    est_x = f_x.phase + math.pi / 2 + phase_zz / 2
    return canonical_angle(_circular_mean([est_i, est_x])), "pi_no_pi", fits


def calibrate_iswap(model, amplitude: float, n_points: int = N_BETA, n_drive_phases: int = N_BETA,
                    chevron: ChevronMap | None = None) -> ISwapCalibration:
    """Chevron resonance and length, Ramsey phase compensation, then the drive phase."""
    backend = as_pulse_backend(model)
    if chevron is None:
        chevron = measure_chevron(backend, "iswap", amplitude)
    f_res, tau = find_gate_length(chevron, "full_transfer")
    f_res, tau, transfer = refine_pulse(backend, "iswap", amplitude, f_res, tau, "full_transfer")
    # Ramsey with the gate followed by its negative (drive phase + pi)
    pulses = [backend.make_pulse("iswap", amplitude, f_res, tau, phase=p) for p in (0.0, math.pi)]
    g, gi = backend.channels(pulses, decoherence=False)
    comps, common, z, fits = iswap_phases_from_channels(g, gi, n_points)
    # drive-phase sweep of the compensated gate
    phases = _betas(n_drive_phases)
    sweep = [backend.make_pulse("iswap", amplitude, f_res, tau, phase=p) for p in phases]
    gates = [corrected(ch, comps) for ch in backend.channels(sweep, decoherence=False)]
    sign = getattr(backend, "drive_phase_sign", 1.0)
    phi0, method, dfits = drive_phase_offset_from_scan(sign * phases, gates, z)
    fits.update(dfits)
    return ISwapCalibration(
        drive_frequency=f_res, gate_length=tau, phi10=canonical_angle(comps[0]), phi01=canonical_angle(comps[1]),
        phase_offset=phi0, frame_correction=canonical_angle(comps[1] - comps[0]),
        zeta_total=z / (2 * math.pi * tau), amplitude=amplitude, drive_phase=canonical_angle(-sign * phi0),
        phase_zz=z, dispersive_phase=common, transfer=transfer, method=method, fits=fits,
        drive_phase_sign=sign)


# -- ZZ measurements -----------------------------------------------------------------------


@dataclass
class ZZMeasurement:
    zeta: float
    zeta_err: float
    omega_idle: float
    omega_excited: float
    fits: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"zeta_hz": _num(self.zeta), "zeta_err_hz": _num(self.zeta_err),
                "omega_idle": _num(self.omega_idle), "omega_excited": _num(self.omega_excited),
                "fits": {k: v.to_dict() for k, v in self.fits.items()}}


def static_zz_fringes(backend, max_delay: float, n_points: int = 201, n_rot: int = 20):
    delays = np.linspace(0, max_delay, n_points)
    out = {"I": [], "Xpi": []}
    for tau in delays:
        idle = backend.idle_channel(float(tau))
        axis = 2 * math.pi * n_rot * tau / max_delay
        for label, lead in (("I", np.eye(4)), ("Xpi", _xpi(1))):
            out[label].append(excited_population(run_circuit([_x90(0), lead, idle, _r90(axis, 0)]), 0))
    return delays, {k: np.array(v) for k, v in out.items()}


def measure_static_zz(model, max_delay: float = 10e-6, n_points: int = 201, n_rot: int = 20) -> ZZMeasurement:
    """Static ZZ from the pi / no-pi Ramsey pair with a virtually rotated final pulse.

    p_U(tau) = 1/2 + 1/2 cos(omega_U tau + phi) exp(-tau / T); zeta = (omega_Xpi - omega_I) / 2 pi.
    """
    backend = as_pulse_backend(model)
    delays, fr = static_zz_fringes(backend, max_delay, n_points, n_rot)
    f_i = fit_sinusoid(delays, fr["I"], damped=True)
    f_x = fit_sinusoid(delays, fr["Xpi"], damped=True)
    zeta = (f_x.omega - f_i.omega) / (2 * math.pi)
    err = math.hypot(f_x.omega_err, f_i.omega_err) / (2 * math.pi)
    return ZZMeasurement(zeta, err, f_i.omega, f_x.omega, {"I": f_i, "Xpi": f_x})


@dataclass
class ZZDriveFit:
    rabis: list
    zetas: list
    coefficients: tuple  # (c0, c1, c2): zeta = c0 + c1 Omega + c2 Omega^2
    coefficient_errs: tuple

    @property
    def intercept(self) -> float:
        return self.coefficients[0]

    def to_dict(self) -> dict:
        return {"rabi_hz": [_num(r) for r in self.rabis], "zeta_hz": [_num(z) for z in self.zetas],
                "coefficients": [_num(c) for c in self.coefficients],
                "coefficient_errs": [_num(c) for c in self.coefficient_errs]}


def fit_zz_vs_rabi(rabis: Sequence[float], zetas: Sequence[float], linear_term: bool = True) -> ZZDriveFit:
    """Quadratic least squares zeta(Omega) = c0 (+ c1 Omega) + c2 Omega^2."""
    r = np.asarray(rabis, dtype=float)
    z = np.asarray(zetas, dtype=float)
    n_par = 3 if linear_term else 2
    if len(r) < max(4, n_par) or len(r) != len(z):
        raise InsufficientData("need at least 4 (Omega, zeta) points")
    cols = [np.ones_like(r), r, r**2] if linear_term else [np.ones_like(r), r**2]
    a = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(a, z, rcond=None)
    resid = z - a @ coef
    dof = max(len(r) - n_par, 1)
    cov = np.linalg.pinv(a.T @ a) * float(resid @ resid) / dof
    errs = np.sqrt(np.clip(np.diag(cov), 0, None))
    if not linear_term:
        coef = np.array([coef[0], 0.0, coef[1]])
        errs = np.array([errs[0], 0.0, errs[1]])
    return ZZDriveFit(list(map(float, r)), list(map(float, z)), tuple(map(float, coef)), tuple(map(float, errs)))


def measure_total_zz_vs_drive(model, amplitudes: Sequence[float], linear_term: bool = True):
    """Total ZZ during the iSWAP drive at each amplitude, and its quadratic fit in Omega."""
    amplitudes = list(amplitudes)
    if len(amplitudes) < 4:
        raise InsufficientData("need at least 4 drive amplitudes")
    backend = as_pulse_backend(model)
    cals = [calibrate_iswap(backend, a) for a in amplitudes]
    fit = fit_zz_vs_rabi([c.rabi for c in cals], [c.zeta_total for c in cals], linear_term)
    return [(c.rabi, c.zeta_total) for c in cals], fit


# -- calibrated channels and reports ---------------------------------------------------------------


def calibrated_channel(backend, cal, decoherence: bool | None = None, extra_phase: float = 0.0) -> SuperOperator:
    """Gate channel of a calibrated pulse including the post-gate virtual-Z corrections."""
    if isinstance(cal, CZCalibration):
        pulse = cal.pulse(backend)
    else:
        pulse = cal.pulse(backend, extra_phase)
    if hasattr(backend, "model") and (decoherence if decoherence is not None else backend.decoherence):
        return backend.channels([pulse], decoherence=True, corrections=[cal.corrections])[0]
    return corrected(backend.channels([pulse], decoherence=decoherence)[0], cal.corrections)


def write_report(path, payload: dict, config_hash: str | None = None) -> None:
    """Deterministic JSON report (sorted keys, fixed float formatting)."""
    body = dict(payload)
    if config_hash is not None:
        body["config_hash"] = config_hash
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def calibration_from_dict(d: dict):
    """Rebuild a calibration from its report form (fits and scans are not restored)."""
    gate = d.get("gate")
    body = d.get("calibration", d)
    try:
        if gate == "cz" or "detuning" in body:
            keys = ("drive_frequency", "gate_length", "phi10", "phi01", "phase", "detuning", "amplitude",
                    "resonance_frequency", "rabi", "zeta", "return_population")
            return CZCalibration(**{k: body[k] for k in keys if k in body})
        keys = ("drive_frequency", "gate_length", "phi10", "phi01", "phase_offset", "frame_correction",
                "zeta_total", "amplitude", "drive_phase", "phase_zz", "dispersive_phase", "transfer",
                "method", "drive_phase_sign")
        return ISwapCalibration(**{k: body[k] for k in keys if k in body})
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"not a calibration report: {exc}") from exc
