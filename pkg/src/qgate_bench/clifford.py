"""Two-qubit Clifford group with native decompositions over CZ or iSWAP.

Elements are stored as global-phase-fixed unitaries and looked up through a
hash of their rounded entries, which is exact because Clifford matrix
entries live on a small discrete set.  Decompositions are found by a
breadth-first search over the number of entangling gates, so every element
uses the minimal count: 0, 1, 2 or 3 entanglers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .gates import CZ, ISWAP, SQRot, GateKind, gate_unitary, on_qubit, rotation, u_cz, u_iswap

GROUP_ORDER = 11520
NATIVE_GATES = {"cz": CZ(math.pi), "iswap": ISWAP(math.pi, 0.0)}
CLASS_NAMES = ("single-qubit", "CNOT-like", "iSWAP-like", "SWAP-like")


def canonical_phase(u: np.ndarray) -> np.ndarray:
    """Fix the global phase so the first non-negligible entry is positive real."""
    flat = u.reshape(-1)
    k = int(np.argmax(np.abs(flat) > 1e-6))
    return u * (abs(flat[k]) / flat[k])


def unitary_key(u: np.ndarray) -> bytes:
    c = canonical_phase(np.asarray(u, dtype=complex))
    grid = np.round(np.concatenate([c.real.ravel(), c.imag.ravel()]) * 1e6).astype(np.int64)
    return grid.tobytes()


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    overlap = np.vdot(a, b)
    if abs(overlap) < 1e-12:
        return False
    return bool(np.linalg.norm(a * (overlap / abs(overlap)) - b) < tol)


@lru_cache(maxsize=None)
def single_qubit_cliffords() -> tuple[tuple[np.ndarray, tuple[tuple[float, float], ...]], ...]:
    """The 24 one-qubit Cliffords as (unitary, ((axis, angle), ...)) with shortest pulse words."""
    pulses = [(0.0, math.pi / 2), (math.pi / 2, math.pi / 2), (0.0, -math.pi / 2),
              (math.pi / 2, -math.pi / 2), (0.0, math.pi), (math.pi / 2, math.pi)]
    found = {unitary_key(np.eye(2)): (np.eye(2, dtype=complex), ())}
    frontier = [(np.eye(2, dtype=complex), ())]
    while frontier:
        nxt = []
        for u, word in frontier:
            for p in pulses:
                v = rotation(*p) @ u
                k = unitary_key(v)
                if k not in found:
                    found[k] = (v, word + (p,))
                    nxt.append((v, word + (p,)))
        frontier = nxt
    assert len(found) == 24
    return tuple(found.values())


@dataclass(frozen=True)
class CliffordElement:
    index: int
    unitary: np.ndarray
    cls: str
    decompositions: dict

    def gates(self, native: str = "cz") -> list:
        return self.decompositions[native]


class CliffordGroup:
    """The 11520-element two-qubit Clifford group (modulo global phase)."""

    def __init__(self):
        c1 = single_qubit_cliffords()
        self._local_gates = []
        local_u = []
        for ua, wa in c1:
            for ub, wb in c1:
                local_u.append(np.kron(ua, ub))
                self._local_gates.append(
                    tuple(SQRot(0, ax, ang) for ax, ang in wa) + tuple(SQRot(1, ax, ang) for ax, ang in wb)
                )
        self._local_u = np.array(local_u)

        units: list[np.ndarray] = []
        self._index: dict[bytes, int] = {}
        decomp = {"cz": {}, "iswap": {}}
        for native, gate in NATIVE_GATES.items():
            g = gate_unitary(gate)
            reps = [(np.eye(4, dtype=complex), ())]
            seen = set()
            level = 0
            # level 0 coset = the local group itself
            self._add_coset(np.eye(4, dtype=complex), (), level, native, units, decomp, seen)
            while len(seen) < GROUP_ORDER:
                level += 1
                new_reps = []
                for r, rgates in reps:
                    for li, lu in enumerate(self._local_u):
                        t = g @ lu @ r
                        if unitary_key(t) in seen:
                            continue
                        tg = rgates + self._local_gates[li] + (gate,)
                        self._add_coset(t, tg, level, native, units, decomp, seen)
                        new_reps.append((t, tg))
                reps = new_reps
        self.unitaries = np.array(units)
        n = len(units)
        self.decompositions = {nat: [decomp[nat][i] for i in range(n)] for nat in decomp}
        cz_count = np.array([sum(isinstance(x, CZ) for x in d) for d in self.decompositions["cz"]])
        self.classes = [CLASS_NAMES[c] for c in cz_count]
        self._inverse = np.array([self.lookup(u.conj().T) for u in self.unitaries])

    def _add_coset(self, t, tgates, level, native, units, decomp, seen):
        for li, lu in enumerate(self._local_u):
            u = lu @ t
            key = unitary_key(u)
            seen.add(key)
            idx = self._index.get(key)
            if idx is None:
                idx = len(units)
                self._index[key] = idx
                units.append(canonical_phase(u))
            if idx not in decomp[native]:
                decomp[native][idx] = list(tgates + self._local_gates[li])

    def __len__(self) -> int:
        return len(self.unitaries)

    def lookup(self, u: np.ndarray) -> int:
        return self._index[unitary_key(u)]

    def inverse(self, idx: int) -> int:
        return int(self._inverse[idx])

    def element(self, idx: int) -> CliffordElement:
        return CliffordElement(
            index=idx,
            unitary=self.unitaries[idx],
            cls=self.classes[idx],
            decompositions={k: v[idx] for k, v in self.decompositions.items()},
        )

    @property
    def identity_index(self) -> int:
        return self.lookup(np.eye(4))

    def entangler_counts(self, native: str) -> np.ndarray:
        two_q = (CZ, ISWAP)
        return np.array([sum(isinstance(g, two_q) for g in d) for d in self.decompositions[native]])


@lru_cache(maxsize=1)
def clifford_group() -> CliffordGroup:
    return CliffordGroup()


def generate_clifford_group() -> list[CliffordElement]:
    grp = clifford_group()
    return [grp.element(i) for i in range(len(grp))]
