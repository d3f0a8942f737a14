"""Two fixed-frequency transmons coupled through a flux-tunable transmon coupler.

All frequencies are stored in Hz (cycles per second) and converted to
angular units only where a Hamiltonian is assembled.  Mode order in the
joint Hilbert space is q1 (x) q2 (x) coupler, first mode most significant.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, ConfigNotFound, FluxOutOfRange, ResonantDenominator, TimeOutOfRange

TWO_PI = 2 * math.pi
FLANK_SIGMAS = 2.5
RESONANCE_GUARD = 1e3  # Hz


@dataclass(frozen=True)
class TransmonParams:
    frequency: float
    anharmonicity: float
    coupling_to_tc: float
    t1: float = math.inf
    t2_echo: float = math.inf
    t2_star: float = math.inf

    def __post_init__(self):
        if self.frequency <= 0:
            raise ConfigError(f"transmon frequency must be positive, got {self.frequency}")
        if self.anharmonicity >= 0:
            raise ConfigError(f"transmon anharmonicity must be negative, got {self.anharmonicity}")
        if self.t1 <= 0 or self.t2_star <= 0:
            raise ConfigError("T1 and T2* must be positive")
        if self.t2_star > 2 * self.t1:
            warnings.warn(f"T2* = {self.t2_star} exceeds 2 T1 = {2 * self.t1}", stacklevel=2)


@dataclass(frozen=True)
class CouplerParams:
    max_frequency: float
    anharmonicity: float
    asymmetry: float = 0.0
    dc_flux: float = 0.0
    t1: float = math.inf
    t2_star: float = math.inf

    def __post_init__(self):
        if not 0 <= self.asymmetry < 1:
            raise ConfigError(f"SQUID asymmetry must lie in [0, 1), got {self.asymmetry}")
        if abs(self.dc_flux) >= 0.5:
            raise FluxOutOfRange(f"DC flux {self.dc_flux} outside (-0.5, 0.5)")


@dataclass(frozen=True)
class DeviceModel:
    q1: TransmonParams
    q2: TransmonParams
    tc: CouplerParams
    direct_coupling_g12: float = 0.0
    levels_per_mode: int = 3

    def __post_init__(self):
        if self.levels_per_mode < 2:
            raise ConfigError("need at least two levels per mode")
        if self.q1.frequency == self.q2.frequency:
            raise ConfigError("qubit frequencies must differ")

    @property
    def dims(self) -> tuple[int, int, int]:
        n = self.levels_per_mode
        return (n, n, n)

    def with_(self, **changes) -> "DeviceModel":
        return replace(self, **changes)

    def without_decoherence(self) -> "DeviceModel":
        inf = math.inf
        return replace(
            self,
            q1=replace(self.q1, t1=inf, t2_echo=inf, t2_star=inf),
            q2=replace(self.q2, t1=inf, t2_echo=inf, t2_star=inf),
            tc=replace(self.tc, t1=inf, t2_star=inf),
        )


@dataclass(frozen=True)
class FluxPulse:
    """Flat-top parametric flux drive with Gaussian flanks.

    ``amplitude`` is in units of the flux quantum, ``frequency`` in Hz and
    ``phase`` in radians.  The total duration is ``plateau + 2 * flank``.
    """

    amplitude: float
    frequency: float
    phase: float = 0.0
    plateau: float = 0.0
    flank: float = 5e-9

    def __post_init__(self):
        if self.amplitude < 0 or self.plateau < 0:
            raise ConfigError("pulse amplitude and plateau must be non-negative")
        if self.flank <= 0:
            raise ConfigError("pulse flank must be positive")

    @property
    def duration(self) -> float:
        return self.plateau + 2 * self.flank

    def with_(self, **changes) -> "FluxPulse":
        return replace(self, **changes)


# -- coupler and drive --------------------------------------------------------


def coupler_frequency(tc: CouplerParams, flux, periodic: bool = False):
    """SQUID-tuned coupler frequency in Hz.

    Uses gamma |cos| = sqrt(cos^2 + d^2 sin^2), which equals the usual
    sqrt(1 + d^2 tan^2) |cos| but stays finite near half a flux quantum.
    With ``periodic`` the flux is first folded into one period.
    """
    phi = np.asarray(flux, dtype=float)
    if periodic:
        phi = phi - np.round(phi)
    if np.any(~np.isfinite(phi)) or np.any(np.abs(phi) >= 0.5):
        raise FluxOutOfRange(f"flux must satisfy |flux| < 0.5, got {flux}")
    c = np.cos(np.pi * phi)
    s = np.sin(np.pi * phi)
    f = tc.max_frequency * (c * c + tc.asymmetry**2 * s * s) ** 0.25
    return float(f) if f.ndim == 0 else f


def envelope(pulse: FluxPulse, t):
    """Flat-top envelope: Gaussian flanks (sigma = flank / 2.5) clipped to start and end at 0."""
    t = np.asarray(t, dtype=float)
    fl = pulse.flank
    sigma = fl / FLANK_SIGMAS
    floor = math.exp(-0.5 * FLANK_SIGMAS**2)
    # distance into the flank region, zero on the plateau
    rise = np.clip(fl - t, 0.0, None)
    fall = np.clip(t - (pulse.plateau + fl), 0.0, None)
    x = np.maximum(rise, fall)
    g = (np.exp(-0.5 * (x / sigma) ** 2) - floor) / (1 - floor)
    g = np.clip(g, 0.0, 1.0)
    return float(g) if g.ndim == 0 else g


def flux_waveform(pulse: FluxPulse, tc: CouplerParams, t):
    """Phi(t) = Phi_DC + env(t) * amplitude * cos(2 pi f t + phase)."""
    tt = np.asarray(t, dtype=float)
    eps = 1e-15 + 1e-12 * pulse.duration
    if np.any(tt < -eps) or np.any(tt > pulse.duration + eps):
        raise TimeOutOfRange(f"t outside [0, {pulse.duration}]")
    out = tc.dc_flux + envelope(pulse, tt) * pulse.amplitude * np.cos(TWO_PI * pulse.frequency * tt + pulse.phase)
    return float(out) if np.ndim(out) == 0 else out


# -- Hamiltonian ----------------------------------------------------------------


def lowering(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)


def mode_operators(dims) -> list[np.ndarray]:
    """Lowering operators of every mode embedded in the joint space."""
    ops = []
    for k, n in enumerate(dims):
        parts = [np.eye(d, dtype=complex) for d in dims]
        parts[k] = lowering(n)
        out = parts[0]
        for p in parts[1:]:
            out = np.kron(out, p)
        ops.append(out)
    return ops


def hamiltonian_parts(model: DeviceModel) -> tuple[np.ndarray, np.ndarray]:
    """(H without the coupler frequency term, coupler number operator), angular units.

    The full Hamiltonian at flux Phi is ``H0 + 2 pi f_c(Phi) N_c``.
    """
    a1, a2, ac = mode_operators(model.dims)
    n1, n2, nc = (a.conj().T @ a for a in (a1, a2, ac))
    eye = np.eye(n1.shape[0])
    h = model.q1.frequency * n1 + model.q2.frequency * n2
    h = h + 0.5 * model.q1.anharmonicity * n1 @ (n1 - eye)
    h = h + 0.5 * model.q2.anharmonicity * n2 @ (n2 - eye)
    h = h + 0.5 * model.tc.anharmonicity * nc @ (nc - eye)
    h = h + model.q1.coupling_to_tc * (a1.conj().T @ ac + a1 @ ac.conj().T)
    h = h + model.q2.coupling_to_tc * (a2.conj().T @ ac + a2 @ ac.conj().T)
    h = h + model.direct_coupling_g12 * (a1.conj().T @ a2 + a1 @ a2.conj().T)
    return TWO_PI * h, nc


def build_hamiltonian(model: DeviceModel, flux: float) -> np.ndarray:
    """Duffing + exchange Hamiltonian H / hbar in rad/s at the given coupler flux."""
    h0, nc = hamiltonian_parts(model)
    return h0 + TWO_PI * coupler_frequency(model.tc, flux) * nc


def basis_index(levels, dims) -> int:
    idx = 0
    for lv, d in zip(levels, dims):
        idx = idx * d + lv
    return idx


def dressed_energies(model: DeviceModel, flux: float | None = None) -> dict:
    """Eigenenergies (Hz) labelled by the bare state they overlap most with."""
    flux = model.tc.dc_flux if flux is None else flux
    h = build_hamiltonian(model, flux)
    vals, vecs = np.linalg.eigh(h)
    labels = np.argmax(np.abs(vecs) ** 2, axis=0)
    out = {}
    dims = model.dims
    for val, lab in zip(vals, labels):
        levels = np.unravel_index(lab, dims)
        out[tuple(int(x) for x in levels)] = val / TWO_PI
    return out


def exact_zz_shift(model: DeviceModel, flux: float | None = None) -> float:
    """zeta = E11 - E10 - E01 + E00 from exact diagonalisation (Hz)."""
    e = dressed_energies(model, flux)
    return e[(1, 1, 0)] - e[(1, 0, 0)] - e[(0, 1, 0)] + e[(0, 0, 0)]


def static_zz_shift(model: DeviceModel) -> float:
    """Perturbative static ZZ shift (Hz) at the coupler DC flux.

    zeta = 2 [g12^2 + (g1 g2 (D1 + D2) / (D1 D2))^2] (a1 + a2) / ((D12 + a1)(D12 - a2))
    with D_i = f_i - f_c and D12 = f1 - f2.  The second denominator factor is
    written so that the sign agrees with exact diagonalisation.
    """
    fc = coupler_frequency(model.tc, model.tc.dc_flux)
    d1 = model.q1.frequency - fc
    d2 = model.q2.frequency - fc
    d12 = model.q1.frequency - model.q2.frequency
    a1 = model.q1.anharmonicity
    a2 = model.q2.anharmonicity
    den1 = d12 + a1
    den2 = d12 - a2
    if abs(den1) < RESONANCE_GUARD or abs(den2) < RESONANCE_GUARD:
        raise ResonantDenominator("qubit detuning resonant with an anharmonicity")
    g1 = model.q1.coupling_to_tc
    g2 = model.q2.coupling_to_tc
    mediated = g1 * g2 * (d1 + d2) / (d1 * d2)
    return 2 * (model.direct_coupling_g12**2 + mediated**2) * (a1 + a2) / (den1 * den2)


def tune_direct_coupling(model: DeviceModel, target_zz: float, bracket=(-30e6, 0.0)) -> DeviceModel:
    """Return ``model`` with g12 chosen so the exact static ZZ equals ``target_zz`` (Hz)."""
    def resid(g):
        return exact_zz_shift(replace(model, direct_coupling_g12=g)) - target_zz

    lo, hi = bracket
    if resid(lo) * resid(hi) > 0:
        raise ConfigError(f"target ZZ {target_zz} Hz not reachable with g12 in {bracket}")
    return replace(model, direct_coupling_g12=brentq(resid, lo, hi, xtol=1.0))


# -- configuration ------------------------------------------------------------

GHZ, MHZ, KHZ, US, NS = 1e9, 1e6, 1e3, 1e-6, 1e-9
DATA_DIR = Path(__file__).parent / "data"
DEFAULT_DEVICE = DATA_DIR / "device_paper.json"

_TRANSMON_KEYS = {"frequency_ghz", "anharmonicity_mhz", "coupling_mhz", "t1_us", "t2_echo_us", "t2_star_us"}
_COUPLER_KEYS = {"max_frequency_ghz", "anharmonicity_mhz", "asymmetry", "dc_flux", "t1_us", "t2_star_us"}
_DEVICE_KEYS = {"q1", "q2", "tc", "g12_mhz", "levels_per_mode", "description"}


def _time(us) -> float:
    return math.inf if us is None else float(us) * US


def _check_keys(section: dict, allowed: set, name: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")


def device_from_dict(d: dict) -> DeviceModel:
    """Build a DeviceModel from the GHz / MHz / us config layout."""
    _check_keys(d, _DEVICE_KEYS, "device")
    try:
        qs = []
        for name in ("q1", "q2"):
            q = d[name]
            _check_keys(q, _TRANSMON_KEYS, name)
            qs.append(TransmonParams(
                frequency=q["frequency_ghz"] * GHZ,
                anharmonicity=q["anharmonicity_mhz"] * MHZ,
                coupling_to_tc=q["coupling_mhz"] * MHZ,
                t1=_time(q.get("t1_us")),
                t2_echo=_time(q.get("t2_echo_us")),
                t2_star=_time(q.get("t2_star_us")),
            ))
        c = d["tc"]
        _check_keys(c, _COUPLER_KEYS, "tc")
        tc = CouplerParams(
            max_frequency=c["max_frequency_ghz"] * GHZ,
            anharmonicity=c["anharmonicity_mhz"] * MHZ,
            asymmetry=c.get("asymmetry", 0.0),
            dc_flux=c.get("dc_flux", 0.0),
            t1=_time(c.get("t1_us")),
            t2_star=_time(c.get("t2_star_us")),
        )
    except KeyError as exc:
        raise ConfigError(f"missing device key {exc}") from exc
    return DeviceModel(q1=qs[0], q2=qs[1], tc=tc, direct_coupling_g12=d.get("g12_mhz", 0.0) * MHZ,
                       levels_per_mode=int(d.get("levels_per_mode", 3)))


def _us(t: float):
    return None if math.isinf(t) else t / US


def device_to_dict(model: DeviceModel) -> dict:
    def q(p: TransmonParams):
        return {"frequency_ghz": p.frequency / GHZ, "anharmonicity_mhz": p.anharmonicity / MHZ,
                "coupling_mhz": p.coupling_to_tc / MHZ, "t1_us": _us(p.t1), "t2_echo_us": _us(p.t2_echo),
                "t2_star_us": _us(p.t2_star)}

    tc = model.tc
    return {
        "q1": q(model.q1),
        "q2": q(model.q2),
        "tc": {"max_frequency_ghz": tc.max_frequency / GHZ, "anharmonicity_mhz": tc.anharmonicity / MHZ,
               "asymmetry": tc.asymmetry, "dc_flux": tc.dc_flux, "t1_us": _us(tc.t1), "t2_star_us": _us(tc.t2_star)},
        "g12_mhz": model.direct_coupling_g12 / MHZ,
        "levels_per_mode": model.levels_per_mode,
    }


def load_device(path=None) -> DeviceModel:
    path = Path(DEFAULT_DEVICE if path is None else path)
    if not path.exists():
        raise ConfigNotFound(str(path))
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return device_from_dict(data)


def paper_device() -> DeviceModel:
    return load_device(DEFAULT_DEVICE)


def pulse_to_dict(p: FluxPulse) -> dict:
    return asdict(p)
