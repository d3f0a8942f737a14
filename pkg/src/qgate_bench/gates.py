"""Ideal two-qubit gate unitaries and the two-level noisy channel model.

Qubit order is (Q1, Q2) with Q1 the most significant bit, so the
computational basis reads |00>, |01>, |10>, |11>.  Frequencies are in Hz
(cycles per second) and times in seconds throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from . import qmath
from .errors import InvalidNoise
from .qmath import SuperOperator


def canonical_angle(phi: float) -> float:
    """Map an angle onto (-pi, pi]."""
    a = math.remainder(float(phi), 2 * math.pi)
    if a <= -math.pi:
        a += 2 * math.pi
    return a


@dataclass(frozen=True)
class CZ:
    phi: float = math.pi

    def __post_init__(self):
        object.__setattr__(self, "phi", canonical_angle(self.phi))


@dataclass(frozen=True)
class ISWAP:
    theta: float = math.pi
    eta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", canonical_angle(self.theta))
        object.__setattr__(self, "eta", canonical_angle(self.eta))


@dataclass(frozen=True)
class VirtualZ:
    qubit: int
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "phi", canonical_angle(self.phi))


@dataclass(frozen=True)
class SQRot:
    """Rotation by ``angle`` about the equatorial axis cos(axis) X + sin(axis) Y."""

    qubit: int
    axis: float
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "axis", canonical_angle(self.axis))
        object.__setattr__(self, "angle", canonical_angle(self.angle))


@dataclass(frozen=True)
class Barrier:
    """Marker between Cliffords in a sequence; no physical action."""

    tag: str = "clifford"


GateKind = Union[CZ, ISWAP, VirtualZ, SQRot]
TWO_QUBIT_KINDS = (CZ, ISWAP)


def u_cz(phi: float) -> np.ndarray:
    return np.diag([1, 1, 1, np.exp(-1j * phi)]).astype(complex)


def u_iswap(theta: float, eta: float = 0.0) -> np.ndarray:
    c = math.cos(theta / 2)
    s = math.sin(theta / 2)
    u = np.eye(4, dtype=complex)
    u[1, 1] = u[2, 2] = c
    u[1, 2] = 1j * np.exp(1j * eta) * s
    u[2, 1] = 1j * np.exp(-1j * eta) * s
    return u


def virtual_z(phi: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def rotation(axis: float, angle: float) -> np.ndarray:
    n = math.cos(axis) * qmath.X + math.sin(axis) * qmath.Y
    return math.cos(angle / 2) * qmath.I2 - 1j * math.sin(angle / 2) * n


def zz_phase_unitary(zeta: float, tau: float) -> np.ndarray:
    """Evolution under zeta |11><11| for time tau (zeta in Hz)."""
    return np.diag([1, 1, 1, np.exp(-2j * math.pi * zeta * tau)]).astype(complex)


def on_qubit(u1: np.ndarray, qubit: int) -> np.ndarray:
    if qubit == 0:
        return np.kron(u1, qmath.I2)
    if qubit == 1:
        return np.kron(qmath.I2, u1)
    raise ValueError(f"qubit index must be 0 or 1, got {qubit}")


def gate_unitary(kind: GateKind) -> np.ndarray:
    """Ideal 4 x 4 unitary of any gate kind."""
    if isinstance(kind, CZ):
        return u_cz(kind.phi)
    if isinstance(kind, ISWAP):
        return u_iswap(kind.theta, kind.eta)
    if isinstance(kind, VirtualZ):
        return on_qubit(virtual_z(kind.phi), kind.qubit)
    if isinstance(kind, SQRot):
        return on_qubit(rotation(kind.axis, kind.angle), kind.qubit)
    if isinstance(kind, Barrier):
        return np.eye(4, dtype=complex)
    raise TypeError(f"unknown gate kind {kind!r}")


def sequence_unitary(gates) -> np.ndarray:
    """Product of gate unitaries, first gate applied first."""
    u = np.eye(4, dtype=complex)
    for g in gates:
        u = gate_unitary(g) @ u
    return u


# -- decoherence channels ----------------------------------------------------


def amplitude_damping(p: float) -> SuperOperator:
    k0 = np.array([[1, 0], [0, math.sqrt(1 - p)]], dtype=complex)
    k1 = np.array([[0, math.sqrt(p)], [0, 0]], dtype=complex)
    return qmath.kraus_to_superop([k0, k1])


def phase_damping(coherence: float) -> SuperOperator:
    """Pure dephasing multiplying the off-diagonal element by ``coherence``."""
    lam = 1 - coherence**2
    k0 = np.array([[1, 0], [0, math.sqrt(1 - lam)]], dtype=complex)
    k1 = np.array([[0, 0], [0, math.sqrt(lam)]], dtype=complex)
    return qmath.kraus_to_superop([k0, k1])


def tensor_channels(a: SuperOperator, b: SuperOperator) -> SuperOperator:
    """Channel ``a`` on Q1 and ``b`` on Q2 acting jointly on 4 x 4 states."""
    cols = []
    for j in range(4):
        for i in range(4):
            # column index i + 4 j of the column-stacked basis E_ij
            ea = np.zeros((2, 2), dtype=complex)
            eb = np.zeros((2, 2), dtype=complex)
            ea[i // 2, j // 2] = 1
            eb[i % 2, j % 2] = 1
            cols.append(qmath.vec(np.kron(a.apply(ea), b.apply(eb))))
    return SuperOperator(np.array(cols).T)


def dephasing_rate(t1: float, t2_star: float) -> float:
    """1/T_phi = 1/T2* - 1/(2 T1); zero for infinite times."""
    inv_t1 = 0.0 if math.isinf(t1) else 1.0 / t1
    inv_t2 = 0.0 if math.isinf(t2_star) else 1.0 / t2_star
    rate = inv_t2 - 0.5 * inv_t1
    if rate < -1e-12 * max(inv_t2, 1e-30):
        raise InvalidNoise(f"T2* = {t2_star} exceeds 2 T1 = {2 * t1}")
    return max(rate, 0.0)


def decoherence_channel(tau: float, t1: float, t2_star: float) -> SuperOperator:
    """Single-qubit amplitude damping followed by pure dephasing over ``tau``."""
    if tau <= 0:
        return SuperOperator.identity(2)
    p1 = 0.0 if math.isinf(t1) else 1.0 - math.exp(-tau / t1)
    coh = math.exp(-tau * dephasing_rate(t1, t2_star))
    return amplitude_damping(p1).then(phase_damping(coh))


@dataclass(frozen=True)
class SimpleNoiseModel:
    """Two-level, two-qubit noise: T1/T2* per qubit plus static ZZ.

    ``calibrated`` mirrors the calibration pipelines: the CZ drive phase is
    chosen so that the total controlled phase (geometric plus ZZ) equals the
    target, and the iSWAP frame corrections absorb half of the ZZ phase on
    each qubit (the balanced choice).  ``drive_t2_star`` replaces T2* during
    two-qubit gates (amplitude-dependent dephasing).
    """

    t1: tuple[float, float] = (math.inf, math.inf)
    t2_star: tuple[float, float] = (math.inf, math.inf)
    zeta: float = 0.0
    tau_2q: float = 200e-9
    tau_1q: float = 0.0
    calibrated: bool = True
    split_decoherence: bool = False
    drive_t2_star: tuple[float, float] | None = None

    def __post_init__(self):
        for t1, t2 in zip(self.t1, self.t2_star):
            if t1 <= 0 or t2 <= 0:
                raise InvalidNoise("T1 and T2* must be positive")
            dephasing_rate(t1, t2)
        if self.drive_t2_star is not None:
            for t1, t2 in zip(self.t1, self.drive_t2_star):
                dephasing_rate(t1, t2)
        if self.tau_2q < 0 or self.tau_1q < 0:
            raise InvalidNoise("gate durations must be non-negative")

    def with_(self, **changes) -> "SimpleNoiseModel":
        return replace(self, **changes)

    @classmethod
    def paper_table(cls, zeta: float = -200e3, tau_2q: float = 200e-9, **kw) -> "SimpleNoiseModel":
        """Q1/Q2 T1 and T2* of the reference device."""
        return cls(t1=(70e-6, 23e-6), t2_star=(50e-6, 27e-6), zeta=zeta, tau_2q=tau_2q, **kw)


def idle_channel(tau: float, noise: SimpleNoiseModel, t2_star=None) -> SuperOperator:
    """Free evolution for ``tau``: static ZZ phase then T1/T2* decay."""
    t2s = noise.t2_star if t2_star is None else t2_star
    dec = tensor_channels(
        decoherence_channel(tau, noise.t1[0], t2s[0]),
        decoherence_channel(tau, noise.t1[1], t2s[1]),
    )
    return qmath.unitary_to_superop(zz_phase_unitary(noise.zeta, tau)).then(dec)


def _coherent_part(kind: GateKind, noise: SimpleNoiseModel, tau: float) -> np.ndarray:
    phase_zz = 2 * math.pi * noise.zeta * tau
    if isinstance(kind, CZ):
        drive_phi = kind.phi - phase_zz if noise.calibrated else kind.phi
        return zz_phase_unitary(noise.zeta, tau) @ u_cz(drive_phi)
    u = zz_phase_unitary(noise.zeta, tau) @ gate_unitary(kind)
    if isinstance(kind, ISWAP) and noise.calibrated:
        comp = np.kron(virtual_z(phase_zz / 2), virtual_z(phase_zz / 2))
        u = comp @ u
    return u


def noisy_gate_channel(kind: GateKind, noise: SimpleNoiseModel) -> SuperOperator:
    """Liouville map of one gate under the simple model.

    Two-qubit gates last ``noise.tau_2q`` and single-qubit gates
    ``noise.tau_1q``.  The ideal gate is followed by the ZZ phase for the
    gate duration; T1/T2* decay acts after the unitary part, or half before
    and half after when ``split_decoherence`` is set.
    """
    two_q = isinstance(kind, TWO_QUBIT_KINDS)
    tau = noise.tau_2q if two_q else noise.tau_1q
    if isinstance(kind, (VirtualZ, Barrier)):
        tau = 0.0
    unitary = qmath.unitary_to_superop(_coherent_part(kind, noise, tau))
    if tau == 0:
        return unitary
    t2s = noise.drive_t2_star if (two_q and noise.drive_t2_star is not None) else noise.t2_star
    if noise.split_decoherence:
        half = tensor_channels(
            decoherence_channel(tau / 2, noise.t1[0], t2s[0]),
            decoherence_channel(tau / 2, noise.t1[1], t2s[1]),
        )
        return half.then(unitary).then(half)
    dec = tensor_channels(
        decoherence_channel(tau, noise.t1[0], t2s[0]),
        decoherence_channel(tau, noise.t1[1], t2s[1]),
    )
    return unitary.then(dec)
