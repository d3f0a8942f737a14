"""Randomized benchmarking: sequences, standard/interleaved/purity RB, fits.

Every (length, randomization) item draws its Cliffords from its own RNG
stream seeded by ``(seed, m, r)``, so results do not depend on the order in
which items are evaluated.  The interleaved run reuses the reference
Cliffords of the same item.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from .clifford import clifford_group, equal_up_to_phase
from .errors import FitFailure, InsufficientData
from .gates import CZ, ISWAP, Barrier, GateKind, SimpleNoiseModel, gate_unitary
from .qmath import purity

DIM = 4
MEAN_ENTANGLERS = 1.5
DEFAULT_LENGTHS = (1, 2, 4, 8, 12, 16, 24, 32, 48, 64)


@dataclass(frozen=True)
class RBSequence:
    m: int
    elements: tuple[int, ...]
    recovery: int
    seed: tuple[int, ...]

    def ideal_unitary(self, interleave: GateKind | None = None) -> np.ndarray:
        grp = clifford_group()
        u = np.eye(DIM, dtype=complex)
        for idx in self.elements:
            u = grp.unitaries[idx] @ u
            if interleave is not None:
                u = gate_unitary(interleave) @ u
        return grp.unitaries[self.recovery] @ u

    def gates(self, native: str, interleave: GateKind | None = None) -> list:
        grp = clifford_group()
        out: list = []
        for idx in self.elements:
            out.extend(grp.decompositions[native][idx])
            out.append(Barrier("clifford"))
            if interleave is not None:
                out.append(interleave)
                out.append(Barrier("interleaved"))
        out.extend(grp.decompositions[native][self.recovery])
        out.append(Barrier("clifford"))
        return out


def sample_sequence(m: int, rng_seed, interleave: GateKind | None = None) -> RBSequence:
    """m uniform Cliffords plus the recovery element (optionally with an interleaved gate)."""
    grp = clifford_group()
    seed = tuple(np.atleast_1d(rng_seed).astype(int).tolist())
    rng = np.random.default_rng(list(seed))
    elements = tuple(int(i) for i in rng.integers(0, len(grp), size=m))
    u = np.eye(DIM, dtype=complex)
    g = None if interleave is None else gate_unitary(interleave)
    for idx in elements:
        u = grp.unitaries[idx] @ u
        if g is not None:
            u = g @ u
    recovery = grp.lookup(u.conj().T)
    return RBSequence(m=m, elements=elements, recovery=recovery, seed=seed)


def rb_decay(m, a, p, b):
    return a * np.power(p, m) + b


@dataclass
class DecayFit:
    a: float
    p: float
    b: float
    a_err: float = math.nan
    p_err: float = math.nan
    b_err: float = math.nan

    def as_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def fit_decay(lengths: Sequence[float], values: np.ndarray, b_guess: float = 1 / DIM,
              power: int = 1) -> DecayFit:
    """Least-squares fit of ``A p**(power*m) + B`` to per-randomization data.

    ``values`` has shape (len(lengths), n_random).  The decay is seeded by a
    log-linear regression of (F - B_guess); bounds keep 0 < p <= 1.
    """
    m = np.asarray(lengths, dtype=float)
    y = np.asarray(values, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    mean = y.mean(axis=1)
    if np.allclose(y, 1.0, atol=1e-12):
        return DecayFit(a=1 - b_guess, p=1.0, b=b_guess, a_err=0.0, p_err=0.0, b_err=0.0)
    shifted = mean - b_guess
    ok = shifted > 1e-6
    if ok.sum() >= 2:
        slope, icpt = np.polyfit(power * m[ok], np.log(shifted[ok]), 1)
        p0 = float(np.clip(np.exp(slope), 1e-3, 1.0))
        a0 = float(np.clip(np.exp(icpt), 0.0, 1.0))
    else:
        p0, a0 = 0.9, 1 - b_guess
    xs = np.repeat(power * m, y.shape[1])
    ys = y.reshape(-1)
    try:
        popt, pcov = curve_fit(rb_decay, xs, ys, p0=[a0, p0, b_guess],
                               bounds=([0.0, 1e-6, 0.0], [1.0, 1.0, 1.0]), maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitFailure(f"RB decay fit failed: {exc}") from exc
    errs = np.sqrt(np.clip(np.diag(pcov), 0, None)) if np.all(np.isfinite(pcov)) else [math.nan] * 3
    return DecayFit(*map(float, popt), *map(float, errs))


def epc_from_p(p: float, d: int = DIM) -> float:
    return (d - 1) * (1 - p) / d


def interleaved_epg(p_ref: float, p_int: float, d: int = DIM) -> float:
    return (d - 1) * (1 - p_int / p_ref) / d


def purity_epg(gamma: float, d: int = DIM, mean_gates: float = MEAN_ENTANGLERS) -> float:
    return (1 - gamma ** (1 / mean_gates)) * (d - 1) / d


@dataclass
class RBResult:
    lengths: list[int]
    fidelities: np.ndarray
    fit: DecayFit
    epc: float
    epg_reference: float
    native: str
    interleave: GateKind | None = None
    interleaved_fidelities: np.ndarray | None = None
    interleaved_fit: DecayFit | None = None
    epg: float = math.nan
    epg_err: float = math.nan
    seed: int = 0
    jitter_log: list = field(default_factory=list)

    def __post_init__(self):
        if math.isnan(self.epg):
            self.epg = self.epg_reference

    def std(self, interleaved: bool = False) -> np.ndarray:
        data = self.interleaved_fidelities if interleaved else self.fidelities
        return data.std(axis=1, ddof=1) if data.shape[1] > 1 else np.zeros(len(self.lengths))

    def to_dict(self) -> dict:
        out = {
            "native": self.native,
            "seed": self.seed,
            "lengths": list(self.lengths),
            "reference": {"fit": self.fit.as_dict(), "fidelities": self.fidelities.tolist()},
            "epc": self.epc,
            "epg_reference": self.epg_reference,
            "epg": self.epg,
            "epg_err": self.epg_err,
        }
        if self.interleave is not None:
            out["interleave"] = repr(self.interleave)
            out["interleaved"] = {
                "fit": self.interleaved_fit.as_dict(),
                "fidelities": self.interleaved_fidelities.tolist(),
            }
        if self.jitter_log:
            out["jitter"] = self.jitter_log
        return out


@dataclass
class PurityRBResult:
    lengths: list[int]
    purities: np.ndarray
    fit: DecayFit
    gamma: float
    epg: float
    native: str
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "native": self.native,
            "seed": self.seed,
            "lengths": list(self.lengths),
            "purities": self.purities.tolist(),
            "fit": self.fit.as_dict(),
            "gamma": self.gamma,
            "purity_epg": self.epg,
        }


def _native_for(interleave: GateKind | None, native: str | None) -> str:
    if native is not None:
        return native
    if isinstance(interleave, ISWAP):
        return "iswap"
    return "cz"


def _measure(rho: np.ndarray, shots: int | None, rng: np.random.Generator) -> float:
    p = float(np.clip(rho[0, 0].real, 0.0, 1.0))
    if not shots:
        return p
    return rng.binomial(shots, p) / shots


def _item_rng(seed: int, m: int, r: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, m, r, stream])


def run_sequences(backend, lengths, n_random: int, native: str, interleave: GateKind | None = None,
                  rng_seed: int = 0, shots: int | None = None, state_fn=None) -> np.ndarray:
    """Evaluate RB sequences; returns an array (len(lengths), n_random).

    ``state_fn(rho)`` maps each final state to the recorded number; it
    defaults to the |00> population (optionally shot-sampled).
    """
    out = np.empty((len(lengths), n_random))
    for i, m in enumerate(lengths):
        for r in range(n_random):
            seq = sample_sequence(m, (rng_seed, m, r), interleave=interleave)
            gates = seq.gates(native, interleave)
            rho = backend.final_state(gates, rng=_item_rng(rng_seed, m, r, 1))
            if state_fn is None:
                out[i, r] = _measure(rho, shots, _item_rng(rng_seed, m, r, 2))
            else:
                out[i, r] = state_fn(rho)
    return out


def run_rb(backend, lengths: Sequence[int] = DEFAULT_LENGTHS, n_random: int = 10,
           interleave: GateKind | None = None, rng_seed: int = 0, native: str | None = None,
           shots: int | None = None) -> RBResult:
    """Reference (and optionally interleaved) RB against a gate-channel backend."""
    if n_random < 1:
        raise InsufficientData("need at least one randomization")
    if len(lengths) < 3:
        raise InsufficientData("need at least three sequence lengths for a decay fit")
    native = _native_for(interleave, native)
    lengths = [int(m) for m in lengths]
    ref = run_sequences(backend, lengths, n_random, native, None, rng_seed, shots)
    inter = None
    if interleave is not None:
        inter = run_sequences(backend, lengths, n_random, native, interleave, rng_seed, shots)
    try:
        fit_ref = fit_decay(lengths, ref)
        fit_int = fit_decay(lengths, inter) if inter is not None else None
    except FitFailure as exc:
        # keep the raw data so callers can still write it out
        exc.partial = {"lengths": lengths, "reference": ref, "interleaved": inter}
        raise
    epc = epc_from_p(fit_ref.p)
    result = RBResult(lengths=lengths, fidelities=ref, fit=fit_ref, epc=epc,
                      epg_reference=epc / MEAN_ENTANGLERS, native=native, seed=rng_seed)
    if interleave is not None:
        result.interleave = interleave
        result.interleaved_fidelities = inter
        result.interleaved_fit = fit_int
        result.epg = interleaved_epg(fit_ref.p, fit_int.p)
        ratio_err = (fit_int.p / fit_ref.p) * math.hypot(
            fit_int.p_err / fit_int.p if fit_int.p else 0.0, fit_ref.p_err / fit_ref.p if fit_ref.p else 0.0
        )
        result.epg_err = (DIM - 1) / DIM * ratio_err
    return result


def run_purity_rb(backend, lengths: Sequence[int] = DEFAULT_LENGTHS, n_random: int = 10,
                  rng_seed: int = 0, native: str = "cz") -> PurityRBResult:
    """Purity RB with exact (simulated) state tomography of the final state."""
    if n_random < 1:
        raise InsufficientData("need at least one randomization")
    lengths = [int(m) for m in lengths]
    pur = run_sequences(backend, lengths, n_random, native, None, rng_seed, state_fn=purity)
    # purity = A gamma^(2m) + B; fit p = gamma^2 per Clifford
    if np.allclose(pur, 1.0, atol=1e-12):
        fit = DecayFit(a=0.75, p=1.0, b=0.25, a_err=0.0, p_err=0.0, b_err=0.0)
    else:
        fit = fit_decay(lengths, pur, power=2)
    gamma = fit.p
    return PurityRBResult(lengths=lengths, purities=pur, fit=fit, gamma=gamma, epg=purity_epg(gamma),
                          native=native, seed=rng_seed)


@dataclass
class FidelityHistogram:
    m: int
    counts: np.ndarray
    edges: np.ndarray
    mean: float
    std: float
    shape: float
    scale: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "counts": self.counts.tolist(),
            "edges": self.edges.tolist(),
            "mean": self.mean,
            "std": self.std,
            "gamma_shape": self.shape,
            "gamma_scale": self.scale,
            "degenerate": self.degenerate,
        }


def fidelity_histogram(result: RBResult, m: int, bins: int = 20, min_random: int = 50,
                       interleaved: bool = False) -> FidelityHistogram:
    """Histogram of sequence fidelities at length m with a method-of-moments Gamma fit.

    The Gamma distribution is fitted to the sequence infidelity 1 - F,
    shape = mean^2 / var and scale = var / mean.
    """
    data = result.interleaved_fidelities if interleaved else result.fidelities
    return histogram_from_fidelities(result.lengths, data, m, bins, min_random)


def histogram_from_fidelities(lengths: Sequence[int], data: np.ndarray, m: int, bins: int = 20,
                              min_random: int = 50) -> FidelityHistogram:
    """Same as ``fidelity_histogram`` on a raw (len(lengths), n_random) array."""
    lengths = list(lengths)
    if m not in lengths:
        raise InsufficientData(f"length {m} not in result")
    f = np.asarray(data)[lengths.index(m)]
    if len(f) < min_random:
        raise InsufficientData(f"{len(f)} randomizations < {min_random}")
    x = 1.0 - f
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    std = float(np.sqrt(var))
    lo, hi = float(f.min()), float(f.max())
    degenerate = var <= 1e-24 or mean <= 0
    if hi - lo < 1e-12:
        edges = np.array([lo - 0.5 / bins, lo + 0.5 / bins])
        counts = np.array([len(f)])
    else:
        counts, edges = np.histogram(f, bins=bins)
    shape = math.nan if degenerate else mean**2 / var
    scale = math.nan if degenerate else var / mean
    return FidelityHistogram(m=m, counts=counts, edges=edges, mean=float(f.mean()), std=std,
                             shape=shape, scale=scale, degenerate=degenerate)


def emulate_rb_simple(noise: SimpleNoiseModel, gate: str = "cz", lengths: Sequence[int] = DEFAULT_LENGTHS,
                      n_random: int = 10, rng_seed: int = 0, sequence_hook=None,
                      shots: int | None = None) -> RBResult:
    """Interleaved RB of the calibrated CZ or iSWAP under the two-level noise model."""
    from .backends import SimpleModelBackend

    kind = {"cz": CZ(math.pi), "iswap": ISWAP(math.pi, 0.0)}[gate.lower()]
    backend = SimpleModelBackend(noise, sequence_hook=sequence_hook)
    return run_rb(backend, lengths, n_random, interleave=kind, rng_seed=rng_seed, native=gate.lower(),
                  shots=shots)


def check_sequence_identity(seq: RBSequence, interleave: GateKind | None = None, tol: float = 1e-8) -> bool:
    return equal_up_to_phase(seq.ideal_unitary(interleave), np.eye(DIM), tol)
