"""Lindblad integration of the three-mode device under a parametric flux pulse.

Frame and basis
---------------
States live in the dressed eigenbasis of the idle Hamiltonian (coupler at
its DC flux), each dressed state labelled by the bare product state it
overlaps most with.  Integration runs in the interaction frame of diagonal
"frame energies": the dressed energies, except that |11> rotates at
E10 + E01 - E00.  That frame is the one the qubits' own rotating frames
define, so the static ZZ shift shows up as a real phase on |11> and the
coupler drive appears as

    H(t) = diag(E - F) + 2 pi [f_c(Phi(t)) - f_c(Phi_DC)] (N_c o P(t)),
    P_jk(t) = exp(i (F_j - F_k) t),

with N_c the coupler number operator in the dressed basis.

The Hamiltonian conserves the total excitation number and the collapse
operators only lower or dephase, so an initial state with at most k
excitations never leaves that sector.  ``max_excitations`` (default 2)
restricts the integration to it, which is exact for two-qubit inputs and
shrinks 27 levels to 10.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import linear_sum_assignment

from . import qmath
from .device import TWO_PI, DeviceModel, FluxPulse, coupler_frequency, envelope, hamiltonian_parts
from .errors import DimensionMismatch, IllConditionedInversion, IntegrationFailure, InvalidNoise, InvariantViolation
from .gates import virtual_z
from .qmath import SuperOperator

TRACE_DRIFT_TOL = 1e-6
COND_LIMIT = 1e6


# -- Lindblad generator ------------------------------------------------------------


@dataclass(frozen=True)
class CollapseSet:
    """Per-mode lowering rates 1/T1 and dephasing rates 1/(2 T_phi), in 1/s.

    The dephasing term uses the operator 2 sqrt(rate) n, so a superposition
    of |0> and |1> loses coherence at 1/T_phi and, together with T1, at
    1/T2* overall.
    """

    dims: tuple
    lowering: tuple
    dephasing: tuple

    def __post_init__(self):
        if not (len(self.dims) == len(self.lowering) == len(self.dephasing)):
            raise DimensionMismatch("one rate per mode required")
        if min(self.lowering + self.dephasing, default=0.0) < 0:
            raise InvalidNoise("collapse rates must be non-negative")

    @classmethod
    def from_times(cls, dims, t1s, t2_stars) -> "CollapseSet":
        low, deph = [], []
        for t1, t2 in zip(t1s, t2_stars):
            inv_t1 = 0.0 if math.isinf(t1) else 1.0 / t1
            inv_t2 = 0.0 if math.isinf(t2) else 1.0 / t2
            inv_tphi = inv_t2 - 0.5 * inv_t1
            if inv_tphi < -1e-12 * max(inv_t2, 1e-30):
                raise InvalidNoise(f"T2* = {t2} exceeds 2 T1 = {2 * t1}")
            low.append(inv_t1)
            deph.append(max(inv_tphi, 0.0) / 2)
        return cls(tuple(dims), tuple(low), tuple(deph))

    @classmethod
    def from_model(cls, model: DeviceModel) -> "CollapseSet":
        return cls.from_times(
            model.dims,
            (model.q1.t1, model.q2.t1, model.tc.t1),
            (model.q1.t2_star, model.q2.t2_star, model.tc.t2_star),
        )

    def operators(self) -> list[np.ndarray]:
        from .device import mode_operators

        ops = []
        for a, g_low, g_z in zip(mode_operators(self.dims), self.lowering, self.dephasing):
            if g_low > 0:
                ops.append(math.sqrt(g_low) * a)
            if g_z > 0:
                ops.append(2 * math.sqrt(g_z) * (a.conj().T @ a))
        return ops

    @property
    def is_zero(self) -> bool:
        return not any(self.lowering) and not any(self.dephasing)


def lindblad_rhs(rho: np.ndarray, h: np.ndarray, collapse: CollapseSet) -> np.ndarray:
    """d rho / dt = -i [H, rho] + sum_C (C rho C^dag - {C^dag C, rho} / 2), H in rad/s."""
    rho = np.asarray(rho, dtype=complex)
    h = np.asarray(h, dtype=complex)
    n = int(np.prod(collapse.dims))
    if rho.shape != (n, n) or h.shape != (n, n):
        raise DimensionMismatch(f"rho {rho.shape} and H {h.shape} must both be {n} x {n}")
    out = -1j * (h @ rho - rho @ h)
    for c in collapse.operators():
        cd = c.conj().T
        out += c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
    return out


# -- frame ------------------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    """Dressed, excitation-truncated basis and interaction-frame data for one device."""

    dims: tuple
    index: np.ndarray  # full-space index of each kept state
    levels: tuple  # bare labels of kept states
    energies: np.ndarray  # dressed energies, rad/s
    frame: np.ndarray  # frame energies F, rad/s
    coupler_number: np.ndarray  # N_c in the dressed basis
    static_diag: np.ndarray  # E - F
    collapse: list
    f_c_dc: float  # coupler frequency at DC flux, Hz

    def position(self, levels) -> int:
        return self.levels.index(tuple(levels))

    @property
    def size(self) -> int:
        return len(self.index)

    def phases(self, t: float) -> np.ndarray:
        f = self.frame
        return np.exp(1j * (f[:, None] - f[None, :]) * t)


def _kept_states(dims, max_excitations):
    states = list(itertools.product(*[range(d) for d in dims]))
    if max_excitations is not None:
        states = [s for s in states if sum(s) <= max_excitations]
    return states


def build_frame(model: DeviceModel, max_excitations: int | None = 2) -> Frame:
    dims = model.dims
    kept = _kept_states(dims, max_excitations)
    idx = np.array([np.ravel_multi_index(s, dims) for s in kept])
    h0, nc = hamiltonian_parts(model)
    f_c = coupler_frequency(model.tc, model.tc.dc_flux)
    h = (h0 + TWO_PI * f_c * nc)[np.ix_(idx, idx)]
    vals, vecs = np.linalg.eigh(h)
    # assign each dressed state to the bare state it overlaps most with
    rows, cols = linear_sum_assignment(-np.abs(vecs) ** 2)
    order = cols[np.argsort(rows)]
    vecs = vecs[:, order]
    vals = vals[order]
    vecs = vecs * (np.abs(np.diag(vecs)) / np.diag(vecs))[None, :]
    frame = vals.copy()
    pos = {s: k for k, s in enumerate(kept)}
    if (1, 1, 0) in pos:
        frame[pos[(1, 1, 0)]] = vals[pos[(1, 0, 0)]] + vals[pos[(0, 1, 0)]] - vals[pos[(0, 0, 0)]]
    ncd = vecs.conj().T @ nc[np.ix_(idx, idx)] @ vecs
    collapse = CollapseSet.from_model(model)
    cops = [vecs.conj().T @ c[np.ix_(idx, idx)] @ vecs for c in collapse.operators()]
    return Frame(dims=dims, index=idx, levels=tuple(kept), energies=vals, frame=frame,
                 coupler_number=ncd, static_diag=vals - frame, collapse=cops, f_c_dc=f_c)


@lru_cache(maxsize=16)
def _cached_frame(model: DeviceModel, max_excitations):
    return build_frame(model, max_excitations)


# -- drive ------------------------------------------------------------------------

Waveform = Callable[[float], float]


def pulse_waveform(pulse: FluxPulse, dc_flux: float) -> Waveform:
    """Flux vs time; zero modulation outside [0, duration]."""
    def wf(t):
        if t < 0 or t > pulse.duration:
            return dc_flux
        return dc_flux + envelope(pulse, t) * pulse.amplitude * math.cos(TWO_PI * pulse.frequency * t + pulse.phase)

    return wf


def _detuning_fn(model: DeviceModel, frame: Frame, waveform: Waveform):
    tc = model.tc
    f0 = frame.f_c_dc

    def dw(t):
        return TWO_PI * (coupler_frequency(tc, waveform(t)) - f0)

    return dw


def envelope_many(plateaus: np.ndarray, flanks: np.ndarray, t: float) -> np.ndarray:
    """Envelope of several flat-top pulses at one time; zero after each pulse ends."""
    sigma = flanks / 2.5
    floor = math.exp(-0.5 * 2.5**2)
    x = np.maximum(np.clip(flanks - t, 0.0, None), np.clip(t - (plateaus + flanks), 0.0, None))
    g = (np.exp(-0.5 * (x / sigma) ** 2) - floor) / (1 - floor)
    return np.where(t > plateaus + 2 * flanks, 0.0, np.clip(g, 0.0, 1.0))


# -- integration ------------------------------------------------------------------


@dataclass(frozen=True)
class EvolveOptions:
    rtol: float = 1e-8
    atol: float = 1e-10
    method: str = "DOP853"
    max_excitations: int | None = 2
    fixed_step: float | None = None  # seconds; use classic RK4 instead of adaptive stepping
    n_samples: int = 0  # trajectory samples (0 = final state only)
    max_step: float = np.inf
    periodic: bool = True  # integrate one carrier period of the plateau and take powers


@dataclass
class EvolutionResult:
    final_state: np.ndarray  # full Hilbert space, dressed labelling, qubit frame
    leakage: float
    wall_time: float
    trajectory_times: np.ndarray | None = None
    trajectory: np.ndarray | None = None  # (n_samples, n_kept, n_kept) in the truncated basis
    levels: tuple = ()
    n_rhs: int = 0


def _rk4(fun, t0, t1, y0, dt, t_eval=None):
    n = max(1, int(math.ceil((t1 - t0) / dt)))
    h = (t1 - t0) / n
    y = y0.copy()
    t = t0
    samples = []
    eval_iter = iter(t_eval) if t_eval is not None else None
    nxt = next(eval_iter, None) if eval_iter else None
    for _ in range(n):
        k1 = fun(t, y)
        k2 = fun(t + h / 2, y + h / 2 * k1)
        k3 = fun(t + h / 2, y + h / 2 * k2)
        k4 = fun(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        while nxt is not None and nxt <= t + 1e-18:
            samples.append(y.copy())
            nxt = next(eval_iter, None)
    return y, samples


def _integrate(fun, duration, y0, options: EvolveOptions, t_eval=None):
    if duration <= 0:
        return y0.copy(), [y0.copy()] if t_eval is not None else []
    if options.fixed_step:
        return _rk4(fun, 0.0, duration, y0, options.fixed_step, t_eval)
    sol = solve_ivp(fun, (0.0, duration), y0, method=options.method, rtol=options.rtol, atol=options.atol,
                    t_eval=t_eval, max_step=options.max_step)
    if not sol.success:
        raise IntegrationFailure(sol.message)
    samples = [sol.y[:, k] for k in range(sol.y.shape[1])] if t_eval is not None else []
    return sol.y[:, -1], samples


def _density_rhs(frame: Frame, dw, batch: int, counter: list):
    n = frame.size
    d0 = frame.static_diag
    nc = frame.coupler_number
    cops = frame.collapse
    kk = sum((c.conj().T @ c for c in cops), np.zeros((n, n), dtype=complex))

    def fun(t, y):
        counter[0] += 1
        rho = y.reshape(batch, n, n)
        p = frame.phases(t)
        h = np.diag(d0) + dw(t) * (nc * p)
        heff = h - 0.5j * (kk * p)
        hr = heff @ rho
        out = -1j * (hr - np.conj(np.swapaxes(hr, -1, -2)))
        for c in cops:
            ct = c * p
            out += ct @ rho @ ct.conj().T
        return out.reshape(-1)

    return fun


def evolve_batch(model: DeviceModel, pulse: FluxPulse | None, rho0s: np.ndarray,
                 options: EvolveOptions | None = None, waveform: Waveform | None = None,
                 duration: float | None = None):
    """Evolve a stack of truncated-basis density matrices; returns (final stack, samples, n_rhs)."""
    options = options or EvolveOptions()
    frame = _cached_frame(model, options.max_excitations)
    waveform_given = waveform is not None
    if waveform is None:
        waveform = pulse_waveform(pulse, model.tc.dc_flux)
    if duration is None:
        duration = pulse.duration
    rho0s = np.asarray(rho0s, dtype=complex)
    batch = rho0s.shape[0]
    if (pulse is not None and waveform_given is False and options.periodic and not options.fixed_step
            and not options.n_samples and duration == pulse.duration):
        return _periodic_density(model, frame, pulse, rho0s, options), [], 0
    counter = [0]
    fun = _density_rhs(frame, _detuning_fn(model, frame, waveform), batch, counter)
    t_eval = np.linspace(0, duration, options.n_samples) if options.n_samples else None
    y, samples = _integrate(fun, duration, rho0s.reshape(-1), options, t_eval)
    n = frame.size
    final = y.reshape(batch, n, n)
    samples = [s.reshape(batch, n, n) for s in samples]
    return final, samples, counter[0]


def embed(frame: Frame, rho_small: np.ndarray) -> np.ndarray:
    full = int(np.prod(frame.dims))
    out = np.zeros((full, full), dtype=complex)
    out[np.ix_(frame.index, frame.index)] = rho_small
    return out


def restrict(frame: Frame, rho_full: np.ndarray) -> np.ndarray:
    rho_full = np.asarray(rho_full, dtype=complex)
    kept = rho_full[np.ix_(frame.index, frame.index)]
    if abs(np.trace(kept).real - np.trace(rho_full).real) > 1e-12:
        raise DimensionMismatch("initial state has population above the excitation cutoff")
    return kept


def evolve(model: DeviceModel, pulse: FluxPulse, rho0: np.ndarray, options: EvolveOptions | None = None,
           waveform: Waveform | None = None) -> EvolutionResult:
    """Integrate the master equation over the pulse for one full-space initial state."""
    options = options or EvolveOptions()
    frame = _cached_frame(model, options.max_excitations)
    rho0 = qmath.check_density_matrix(rho0)
    if rho0.shape[0] != int(np.prod(model.dims)):
        raise DimensionMismatch(f"state of dim {rho0.shape[0]} does not match device dims {model.dims}")
    start = time.perf_counter()
    final, samples, n_rhs = evolve_batch(model, pulse, restrict(frame, rho0)[None], options, waveform)
    rho = final[0]
    drift = abs(np.trace(rho).real - 1.0)
    if drift > TRACE_DRIFT_TOL:
        raise InvariantViolation(f"trace drifted by {drift:.2e}")
    rho = 0.5 * (rho + rho.conj().T)
    full = embed(frame, rho)
    _, leak = qmath.project_computational(full, model.dims, renormalize=False)
    traj = np.array([s[0] for s in samples]) if samples else None
    times = np.linspace(0, pulse.duration, options.n_samples) if options.n_samples else None
    return EvolutionResult(final_state=full, leakage=float(leak), wall_time=time.perf_counter() - start,
                           trajectory_times=times, trajectory=traj, levels=frame.levels, n_rhs=n_rhs)


def write_trajectory_csv(result: EvolutionResult, path, labels: Sequence[tuple] | None = None) -> None:
    """CSV with time_ns, one population column per labelled state, and leakage."""
    if result.trajectory is None:
        raise ValueError("evolution was run without trajectory samples")
    levels = list(result.levels)
    labels = list(labels) if labels is not None else [s for s in levels if sum(s) <= 2]
    comp = [levels.index(s) for s in levels if s[2] == 0 and s[0] < 2 and s[1] < 2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_ns"] + ["p_" + "".join(map(str, s)) for s in labels] + ["leakage"])
        for t, rho in zip(result.trajectory_times, result.trajectory):
            pops = np.real(np.diag(rho))
            row = [f"{t * 1e9:.6f}"] + [f"{pops[levels.index(s)]:.10f}" for s in labels]
            row.append(f"{1 - pops[comp].sum():.10f}")
            w.writerow(row)


# -- unitary propagation (no decoherence) ------------------------------------------


def propagate_unitaries(model: DeviceModel, pulses: Sequence[FluxPulse], options: EvolveOptions | None = None,
                        waveforms: Sequence[Waveform] | None = None,
                        sample_times: Sequence[float] | None = None) -> tuple[Frame, np.ndarray]:
    """Decoherence-free propagators of several pulses, integrated side by side.

    Returns the frame and an array (n_pulses, n_kept, n_kept) of interaction-
    frame unitaries at each pulse's own end time.  Collapse rates of the
    model are ignored.  With ``sample_times`` the propagators are instead
    returned at those times, shape (n_times, n_pulses, n_kept, n_kept),
    integrating up to the last sample (used for chevron scans, where a long
    pulse sampled mid-plateau stands in for a family of shorter pulses).
    """
    options = options or EvolveOptions()
    frame = _cached_frame(model, options.max_excitations)
    n = frame.size
    pulses = list(pulses)
    b = len(pulses)
    durations = np.array([p.duration for p in pulses])
    t_end = float(durations.max()) if b else 0.0
    tc = model.tc
    if waveforms is None:
        amps = np.array([p.amplitude for p in pulses])
        freqs = np.array([p.frequency for p in pulses])
        phases = np.array([p.phase for p in pulses])
        flanks = np.array([p.flank for p in pulses])
        plateaus = np.array([p.plateau for p in pulses])

        def fluxes(t):
            env = envelope_many(plateaus, flanks, t)
            return tc.dc_flux + env * amps * np.cos(TWO_PI * freqs * t + phases)
    else:
        def fluxes(t):
            return np.array([wf(t) for wf in waveforms])

    d0 = frame.static_diag
    nc = frame.coupler_number
    f0 = frame.f_c_dc

    def fun(t, y):
        u = y.reshape(b, n, n)
        dw = TWO_PI * (coupler_frequency(tc, fluxes(t)) - f0)
        mp = nc * frame.phases(t)
        out = d0[None, :, None] * u + dw[:, None, None] * (mp @ u)
        return (-1j * out).reshape(-1)

    if waveforms is None and options.periodic and not options.fixed_step and b:
        return frame, _periodic_unitaries(model, frame, pulses, options, sample_times)
    y0 = np.broadcast_to(np.eye(n, dtype=complex), (b, n, n)).reshape(-1).copy()
    if sample_times is not None:
        ts = np.asarray(sample_times, dtype=float)
        _, samples = _integrate(fun, float(ts[-1]), y0, options, t_eval=ts)
        return frame, np.array([s.reshape(b, n, n) for s in samples])
    y, _ = _integrate(fun, t_end, y0, options)
    u = y.reshape(b, n, n)
    # after its pulse ends each item only picks up exp(-i (E - F) dt); rewind it
    rewind = np.exp(1j * d0[None, :] * (t_end - durations)[:, None])
    return frame, rewind[:, :, None] * u


# -- periodic plateau ------------------------------------------------------------------
#
# On the plateau the lab-frame Hamiltonian diag(E) + dw(t) N_c repeats with
# the carrier period T = 1 / f, so the plateau propagator is the one-period
# map raised to a power, times a partial period.  Interaction-frame and lab
# propagators are related by V(t2, t1) = exp(i F t2) L(t2, t1) exp(-i F t1).
# Each stage integrates over s in [0, 1] with item-specific times
# t_i = t0_i + s * scale_i so pulses of different length and frequency share
# one solver call.


def _pulse_arrays(pulses):
    return (np.array([p.amplitude for p in pulses]), np.array([p.frequency for p in pulses]),
            np.array([p.phase for p in pulses]), np.array([p.flank for p in pulses]),
            np.array([p.plateau for p in pulses]))


def _scaled_unitary_rhs(model: DeviceModel, frame: Frame, arrays, t0, scale):
    amps, freqs, phases, flanks, plateaus = arrays
    b, n = len(amps), frame.size
    tc = model.tc
    d0 = frame.static_diag
    nc = frame.coupler_number
    f0 = frame.f_c_dc
    gaps = frame.frame[:, None] - frame.frame[None, :]

    def fun(s, y):
        u = y.reshape(b, n, n)
        t = t0 + s * scale
        flux = tc.dc_flux + envelope_many(plateaus, flanks, t) * amps * np.cos(TWO_PI * freqs * t + phases)
        dw = TWO_PI * (coupler_frequency(tc, flux) - f0)
        mp = nc[None] * np.exp(1j * gaps[None] * t[:, None, None])
        out = d0[None, :, None] * u + dw[:, None, None] * (mp @ u)
        return (-1j * scale[:, None, None] * out).reshape(-1)

    return fun


def _solve_stage(fun, y0, options: EvolveOptions, t_eval=None, dense=False):
    sol = solve_ivp(fun, (0.0, 1.0), y0, method=options.method, rtol=options.rtol, atol=options.atol,
                    t_eval=t_eval, dense_output=dense)
    if not sol.success:
        raise IntegrationFailure(sol.message)
    return sol


def _periodic_unitaries(model: DeviceModel, frame: Frame, pulses, options: EvolveOptions, sample_times=None):
    arrays = _pulse_arrays(pulses)
    amps, freqs, phases, flanks, plateaus = arrays
    b, n = len(pulses), frame.size
    f = frame.frame
    eye = np.broadcast_to(np.eye(n, dtype=complex), (b, n, n)).reshape(-1).copy()
    tight = EvolveOptions(rtol=min(options.rtol, 1e-10), atol=min(options.atol, 1e-12), method=options.method)

    def rot(t):  # exp(i F t) as (b, n) diagonals
        return np.exp(1j * f[None, :] * np.asarray(t, dtype=float)[:, None])

    # rising flank, all items from t = 0 (flank lengths may differ)
    early = None
    if sample_times is not None:
        ts = np.asarray(sample_times, dtype=float)
        if np.any(np.abs(flanks - flanks[0]) > 0):
            raise ValueError("sampled propagation needs equal flanks")
        early = ts[ts < flanks[0]]
    rise = _solve_stage(_scaled_unitary_rhs(model, frame, arrays, np.zeros(b), flanks), eye, options,
                        t_eval=None if early is None or not len(early) else np.append(early / flanks[0], 1.0))
    v_rise = rise.y[:, -1].reshape(b, n, n)
    t_a = flanks
    period = 1.0 / np.abs(freqs)
    span = np.where(plateaus > period, period, plateaus)
    per = _solve_stage(_scaled_unitary_rhs(model, frame, arrays, t_a, span), eye, tight, dense=True)
    v_per = per.y[:, -1].reshape(b, n, n)
    # lab-frame one-period map L(t_a + span, t_a)
    m_lab = np.conj(rot(t_a + span))[:, :, None] * v_per * rot(t_a)[:, None, :]

    def lab_partial(i, r):
        if r <= 0:
            return np.eye(n, dtype=complex)
        v = per.sol(r / span[i]).reshape(b, n, n)[i]
        return np.exp(-1j * f * (t_a[i] + r))[:, None] * v * np.exp(1j * f * t_a[i])[None, :]

    def plateau_interaction(i, elapsed, powers):
        # V(t_a + elapsed, 0) for item i
        if plateaus[i] <= period[i]:
            k, r = (1, 0.0) if elapsed >= plateaus[i] else (0, elapsed)
        else:
            k = int(elapsed // period[i])
            r = elapsed - k * period[i]
            if r > period[i] * (1 - 1e-12):
                k, r = k + 1, 0.0
        lab = lab_partial(i, r) @ powers(i, k)
        t = t_a[i] + elapsed
        return np.exp(1j * f * t)[:, None] * lab * np.exp(-1j * f * t_a[i])[None, :] @ v_rise[i]

    cache = {}

    def powers(i, k):
        if (i, k) not in cache:
            cache[(i, k)] = np.linalg.matrix_power(m_lab[i], k)
        return cache[(i, k)]

    if sample_times is not None:
        out = np.empty((len(ts), b, n, n), dtype=complex)
        n_early = len(early)
        for j in range(n_early):
            out[j] = rise.y[:, j].reshape(b, n, n)
        for j, t in enumerate(ts[n_early:], start=n_early):
            for i in range(b):
                if t > t_a[i] + plateaus[i] + 1e-15:
                    raise ValueError("sample times must lie before the falling flank")
                out[j, i] = plateau_interaction(i, t - t_a[i], powers)
        return out
    v_b = np.array([plateau_interaction(i, plateaus[i], powers) for i in range(b)])
    fall = _solve_stage(_scaled_unitary_rhs(model, frame, arrays, t_a + plateaus, flanks),
                        np.eye(n, dtype=complex)[None].repeat(b, 0).reshape(-1), options)
    v_fall = fall.y[:, -1].reshape(b, n, n)
    return v_fall @ v_b


def _scaled_density_rhs(frame: Frame, dw, batch: int, t0: float, scale: float):
    n = frame.size
    d0 = frame.static_diag
    nc = frame.coupler_number
    cops = frame.collapse
    kk = sum((c.conj().T @ c for c in cops), np.zeros((n, n), dtype=complex))

    def fun(s, y):
        t = t0 + s * scale
        rho = y.reshape(batch, n, n)
        p = frame.phases(t)
        h = np.diag(d0) + dw(t) * (nc * p)
        heff = h - 0.5j * (kk * p)
        # general form: the basis matrices of the one-period map are not Hermitian
        out = -1j * (heff @ rho - rho @ heff.conj().T)
        for c in cops:
            ct = c * p
            out += ct @ rho @ ct.conj().T
        return (scale * out).reshape(-1)

    return fun


def _periodic_density(model: DeviceModel, frame: Frame, pulse: FluxPulse, rho0s: np.ndarray,
                      options: EvolveOptions) -> np.ndarray:
    """Master-equation counterpart of ``_periodic_unitaries`` for one pulse."""
    n = frame.size
    batch = rho0s.shape[0]
    dw = _detuning_fn(model, frame, pulse_waveform(pulse, model.tc.dc_flux))
    tight = EvolveOptions(rtol=min(options.rtol, 1e-10), atol=min(options.atol, 1e-12), method=options.method)
    fl, pl = pulse.flank, pulse.plateau
    rho = _solve_stage(_scaled_density_rhs(frame, dw, batch, 0.0, fl), rho0s.reshape(-1), options).y[:, -1]
    rho = rho.reshape(batch, n, n)
    if pl > 0:
        period = 1.0 / abs(pulse.frequency)
        span = min(period, pl)
        basis = np.eye(n * n, dtype=complex).reshape(n * n, n, n)
        # basis element e_m as a matrix: row-major reshape of the identity
        sol = _solve_stage(_scaled_density_rhs(frame, dw, n * n, fl, span), basis.reshape(-1), tight, dense=True)

        def lab_map(s):
            # lab-frame map from t_a over s * span, on row-major vec
            out = sol.sol(s).reshape(n * n, n, n) if s < 1 else sol.y[:, -1].reshape(n * n, n, n)
            t1, t2 = fl, fl + s * span
            cols = out * np.conj(frame.phases(t2))[None]
            return cols.reshape(n * n, n * n).T * frame.phases(t1).reshape(-1)[None, :]

        if pl <= period:
            k, r = 1, 0.0
        else:
            k = int(pl // period)
            r = pl - k * period
        total = np.linalg.matrix_power(lab_map(1.0), k)
        if r > 0:
            total = lab_map(r / span) @ total
        lab = (rho * np.conj(frame.phases(fl))[None]).reshape(batch, -1)
        rho = (lab @ total.T).reshape(batch, n, n) * frame.phases(fl + pl)[None]
    fun = _scaled_density_rhs(frame, dw, batch, fl + pl, fl)
    return _solve_stage(fun, rho.reshape(-1), options).y[:, -1].reshape(batch, n, n)


def idle_superop(model: DeviceModel, tau: float, max_excitations: int | None = 2) -> SuperOperator:
    """Two-qubit map of free evolution for ``tau`` with the model's decoherence.

    Without drive the Liouvillian is constant in the dressed (non-rotating)
    basis, so the map is a matrix exponential; the result is rotated into
    the qubit frame and projected like the tomography outputs (coupler
    traced out, no renormalisation).
    """
    from scipy.linalg import expm

    frame = _cached_frame(model, max_excitations)
    n = frame.size
    eye = np.eye(n)
    # energies relative to the ground state keep the exponent small
    h = np.diag(frame.energies - frame.energies.min())
    # column-stacked vec: vec(A X B) = (B^T kron A) vec(X)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for c in frame.collapse:
        cdc = c.conj().T @ c
        gen += np.kron(c.conj(), c) - 0.5 * (np.kron(eye, cdc) + np.kron(cdc.T, eye))
    prop = expm(gen * tau)
    comp = computational_indices(frame)
    outs = []
    inputs = tomography_inputs()
    for r in inputs:
        rho = np.zeros((n, n), dtype=complex)
        rho[np.ix_(comp, comp)] = r
        out = qmath.unvec(prop @ qmath.vec(rho), n)
        out = out * frame.phases(tau)
        sub, _ = qmath.project_computational(embed(frame, out), model.dims, renormalize=False)
        outs.append(sub)
    return linear_inversion(inputs, outs)


def computational_indices(frame: Frame) -> list[int]:
    return [frame.position((a, b, 0)) for a in (0, 1) for b in (0, 1)]


def computational_block(frame: Frame, u: np.ndarray) -> np.ndarray:
    """4 x 4 block of a truncated-basis propagator on |q1 q2 coupler=0>."""
    idx = computational_indices(frame)
    return np.asarray(u)[..., idx, :][..., :, idx]


# -- process tomography ---------------------------------------------------------------

_SINGLE_INPUTS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / math.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / math.sqrt(2),
}


def tomography_inputs() -> list[np.ndarray]:
    """The 16 product input states {0, 1, +, +i}^(x2) as 4 x 4 density matrices."""
    out = []
    for a in _SINGLE_INPUTS.values():
        for b in _SINGLE_INPUTS.values():
            out.append(qmath.projector(np.kron(a, b)))
    return out


def linear_inversion(inputs: Sequence[np.ndarray], outputs: Sequence[np.ndarray]) -> SuperOperator:
    """Superoperator S with S vec(in_k) = vec(out_k) for an informationally complete input set."""
    a = np.array([qmath.vec(r) for r in inputs]).T
    b = np.array([qmath.vec(r) for r in outputs]).T
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedInversion(f"input basis condition number {cond:.3g}")
    return SuperOperator(b @ np.linalg.inv(a))


def frame_correction_unitary(corrections) -> np.ndarray:
    phi1, phi2 = corrections
    return np.kron(virtual_z(phi1), virtual_z(phi2))


@dataclass
class GateTomography:
    superop: SuperOperator
    leakage: float  # worst case over the inputs
    leakages: list = field(default_factory=list)
    wall_time: float = 0.0


def gate_tomography(model: DeviceModel, pulse: FluxPulse, frame_corrections=(0.0, 0.0),
                    options: EvolveOptions | None = None, waveform: Waveform | None = None,
                    renormalize: bool = True) -> GateTomography:
    options = options or EvolveOptions()
    frame = _cached_frame(model, options.max_excitations)
    start = time.perf_counter()
    inputs = tomography_inputs()
    comp = computational_indices(frame)
    n = frame.size
    stack = np.zeros((len(inputs), n, n), dtype=complex)
    for k, r in enumerate(inputs):
        stack[k][np.ix_(comp, comp)] = r
    final, _, _ = evolve_batch(model, pulse, stack, options, waveform)
    fc = frame_correction_unitary(frame_corrections)
    outs, leaks = [], []
    for rho in final:
        drift = abs(np.trace(rho).real - 1.0)
        if drift > TRACE_DRIFT_TOL:
            raise InvariantViolation(f"trace drifted by {drift:.2e}")
        sub, leak = qmath.project_computational(embed(frame, rho), model.dims, renormalize=renormalize)
        outs.append(fc @ sub @ fc.conj().T)
        leaks.append(float(leak))
    s = linear_inversion(inputs, outs)
    return GateTomography(superop=s, leakage=max(leaks), leakages=leaks, wall_time=time.perf_counter() - start)


def simulate_gate_superop(model: DeviceModel, pulse: FluxPulse, frame_corrections=(0.0, 0.0),
                          options: EvolveOptions | None = None) -> SuperOperator:
    """Two-qubit Liouville map of one pulse from 16-state tomography of the full model."""
    return gate_tomography(model, pulse, frame_corrections, options).superop
