"""Dense complex linear algebra for states, channels and process matrices.

Conventions used everywhere in the package:

* Liouville vectors are column-stacked, ``vec(rho) = rho.flatten(order="F")``,
  so ``vec(A rho B) = (B.T kron A) vec(rho)`` and a unitary channel is
  ``conj(U) kron U``.
* The two-qubit Pauli basis is ordered II, IX, IY, IZ, XI, ..., ZZ with the
  second qubit running fastest.
* Basis states are ordered with the first subsystem most significant, i.e.
  ``|q1 q2>`` -> index ``2*q1 + q2``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidState, LeakageDominates, NonUnitaryInput

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
EIG_FLOOR = -1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X, Y, Z)
PAULI_LABELS = ("I", "X", "Y", "Z")


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of any number of matrices (left operand most significant)."""
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, np.asarray(op))
    return out


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def is_hermitian(m: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.allclose(m, dagger(m), atol=tol, rtol=0))


def is_unitary(u: np.ndarray, tol: float = 1e-10) -> bool:
    u = np.asarray(u)
    return bool(np.linalg.norm(dagger(u) @ u - np.eye(u.shape[0])) <= tol)


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    return v.reshape(dim, dim, order="F")


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def check_density_matrix(rho: np.ndarray, trace_tol: float = TRACE_TOL) -> np.ndarray:
    """Validate ``rho`` as a density matrix and return it as a complex array.

    Eigenvalues down to ``EIG_FLOOR`` are accepted as numerical zeros.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch(f"density matrix must be square, got {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=HERMITIAN_TOL, rtol=0):
        raise InvalidState("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise InvalidState(f"density matrix trace {tr} != 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lo < EIG_FLOOR:
        raise InvalidState(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


@dataclass(frozen=True)
class SuperOperator:
    """Linear map on d x d matrices in column-stacked Liouville form."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = m.shape[0]
        d = int(round(np.sqrt(n)))
        if m.ndim != 2 or m.shape[1] != n or d * d != n:
            raise DimensionMismatch(f"superoperator must be d^2 x d^2, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho)
        if rho.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"state {rho.shape} does not match channel dim {self.dim}")
        return unvec(self.matrix @ vec(rho), self.dim)

    def then(self, other: "SuperOperator") -> "SuperOperator":
        """Channel that applies ``self`` first and ``other`` second."""
        if other.dim != self.dim:
            raise DimensionMismatch("cannot compose channels of different dimension")
        return SuperOperator(other.matrix @ self.matrix)

    def __matmul__(self, other: "SuperOperator") -> "SuperOperator":
        # operator-style composition: (A @ B) applies B first
        return other.then(self)

    @classmethod
    def identity(cls, dim: int) -> "SuperOperator":
        return cls(np.eye(dim * dim, dtype=complex))


@dataclass(frozen=True)
class ProcessMatrix:
    """chi matrix in the (unnormalised) Pauli basis; trace 1 for a TP map."""

    chi: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.chi, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionMismatch(f"chi must be square, got {c.shape}")
        object.__setattr__(self, "chi", c)

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.chi.shape[0])))


def unitary_to_superop(u: np.ndarray) -> SuperOperator:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionMismatch(f"unitary must be square, got {u.shape}")
    if np.linalg.norm(dagger(u) @ u - np.eye(u.shape[0])) > 1e-8:
        raise NonUnitaryInput("matrix is not unitary within 1e-8")
    return SuperOperator(np.kron(u.conj(), u))


def kraus_to_superop(kraus: Sequence[np.ndarray]) -> SuperOperator:
    return SuperOperator(sum(np.kron(np.conj(k), k) for k in kraus))


@lru_cache(maxsize=None)
def pauli_basis(n_qubits: int = 2) -> np.ndarray:
    """Stack of the 4**n Pauli strings, second (last) qubit fastest."""
    return np.array([kron(*ops) for ops in itertools.product(PAULIS, repeat=n_qubits)])


@lru_cache(maxsize=None)
def _chi_transform(n_qubits: int) -> np.ndarray:
    # row (m, n) holds conj(P_n) kron P_m flattened; rows orthogonal, squared norm d^2
    P = pauli_basis(n_qubits)
    k = len(P)
    T = np.einsum("nab,mcd->mnacbd", P.conj(), P).reshape(k * k, k * k)
    return T


def superop_to_chi(s: SuperOperator) -> ProcessMatrix:
    """Convert a 2-qubit Liouville superoperator to its Pauli chi matrix.

    With ``E(rho) = sum_mn chi_mn P_m rho P_n^dagger``, the Liouville matrix is
    ``sum_mn chi_mn conj(P_n) kron P_m``; those operators are orthogonal with
    squared norm d**2, so chi follows from Hilbert-Schmidt projections.
    """
    if s.dim != 4:
        raise DimensionMismatch(f"chi conversion needs Hilbert dim 4, got {s.dim}")
    T = _chi_transform(2)
    k = 16
    chi = (T.conj() @ s.matrix.reshape(-1)) / 16.0
    return ProcessMatrix(chi.reshape(k, k))


def chi_to_superop(chi: ProcessMatrix) -> SuperOperator:
    if chi.dim != 4:
        raise DimensionMismatch(f"chi conversion needs Hilbert dim 4, got {chi.dim}")
    T = _chi_transform(2)
    return SuperOperator((T.T @ chi.chi.reshape(-1)).reshape(16, 16))


def process_fidelity(chi: ProcessMatrix, chi_ideal: ProcessMatrix) -> float:
    """tr(chi chi_ideal), real part clamped to [0, 1]."""
    if chi.chi.shape != chi_ideal.chi.shape or chi.dim != 4:
        raise DimensionMismatch("process matrices must both be 16 x 16")
    f = np.trace(chi.chi @ chi_ideal.chi).real
    return float(min(1.0, max(0.0, f)))


def qpt_infidelity(s: SuperOperator, u_ideal: np.ndarray) -> float:
    """1 - tr(chi chi_0) of a channel against an ideal unitary."""
    return 1.0 - process_fidelity(superop_to_chi(s), superop_to_chi(unitary_to_superop(u_ideal)))


def average_gate_fidelity(s: SuperOperator, u_ideal: np.ndarray) -> float:
    d = s.dim
    fp = process_fidelity(superop_to_chi(s), superop_to_chi(unitary_to_superop(u_ideal)))
    return (d * fp + 1) / (d + 1)


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    dims = list(dims)
    n = len(dims)
    t = np.asarray(rho).reshape(dims + dims)
    keep = sorted(keep)
    drop = [i for i in range(n) if i not in keep]
    # contract dropped axes pairwise
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[i] for i in range(n)]
    col = [letters[i + n] for i in range(n)]
    for i in drop:
        col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dk = int(np.prod([dims[i] for i in keep]))
    return res.reshape(dk, dk)


def project_computational(
    rho_full: np.ndarray, dims: Sequence[int] = (3, 3, 3), renormalize: bool = True
) -> tuple[np.ndarray, float]:
    """Map a joint (q1, q2, coupler) state onto the two-qubit computational space.

    The coupler (last mode) is traced out, then qubit levels above 1 are
    discarded.  Returns ``(rho_4x4, leakage)`` where leakage is one minus the
    trace kept before renormalisation.
    """
    rho_full = np.asarray(rho_full, dtype=complex)
    dims = list(dims)
    total = int(np.prod(dims))
    if rho_full.shape != (total, total) or len(dims) < 2 or min(dims[:2]) < 2:
        raise DimensionMismatch(f"state shape {rho_full.shape} inconsistent with dims {dims}")
    reduced = partial_trace(rho_full, dims, keep=[0, 1]) if len(dims) > 2 else rho_full
    d1, d2 = dims[0], dims[1]
    idx = [a * d2 + b for a in (0, 1) for b in (0, 1)]
    sub = reduced[np.ix_(idx, idx)]
    kept = float(np.trace(sub).real)
    leakage = 1.0 - kept
    if not renormalize:
        return sub, leakage
    if kept < 1e-9:
        raise LeakageDominates(f"computational subspace population {kept:.2e} after projection")
    return sub / kept, leakage


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with phase fix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
