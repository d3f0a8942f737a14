"""Gate-channel backends: turn a list of gate kinds into a final two-qubit state.

A backend needs one method, ``final_state(gates, rng=None)``, returning the
4 x 4 density matrix reached from |00><00|.  The RB engine and the
calibration circuits only talk to this interface.  ``Barrier`` markers
separate Cliffords; ordinary backends ignore them.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from . import qmath
from .errors import BackendError
from .gates import TWO_QUBIT_KINDS, Barrier, GateKind, SimpleNoiseModel, gate_unitary, noisy_gate_channel
from .qmath import SuperOperator

SEGMENT_CACHE_SIZE = 50000
GROUND = np.diag([1.0, 0, 0, 0]).astype(complex)

SequenceHook = Callable[[Sequence[GateKind], np.random.Generator], Sequence[GateKind]]


class ChannelBackend:
    """Applies memoised Liouville maps gate by gate.

    ``channel_for`` maps a gate kind to its SuperOperator.  ``sequence_hook``
    may rewrite the whole gate list once per sequence, which is how
    per-trigger phase jitter is injected.
    """

    ideal_single_qubit = True

    def __init__(self, channel_for: Callable[[GateKind], SuperOperator], sequence_hook: SequenceHook | None = None):
        self._channel_for = channel_for
        self._cache: dict = {}
        self._segments: dict = {}
        self.sequence_hook = sequence_hook

    def channel(self, kind: GateKind) -> SuperOperator:
        ch = self._cache.get(kind)
        if ch is None:
            ch = self._channel_for(kind)
            if ch.dim != 4:
                raise BackendError(f"backend produced a {ch.dim}-dim channel for {kind}")
            self._cache[kind] = ch
        return ch

    def barrier(self, tag: str) -> SuperOperator | None:
        return None

    def segment_matrix(self, segment: tuple) -> np.ndarray:
        """Liouville matrix of a gate run without barriers, first gate applied first."""
        m = self._segments.get(segment)
        if m is not None:
            return m
        out = np.eye(16, dtype=complex)
        pending = np.eye(4, dtype=complex)
        dirty = False
        for g in segment:
            if isinstance(g, TWO_QUBIT_KINDS) or not self.ideal_single_qubit:
                if dirty:
                    out = np.kron(pending.conj(), pending) @ out
                    pending = np.eye(4, dtype=complex)
                    dirty = False
                out = self.channel(g).matrix @ out
            else:
                # merge runs of ideal single-qubit gates into one unitary
                pending = gate_unitary(g) @ pending
                dirty = True
        if dirty:
            out = np.kron(pending.conj(), pending) @ out
        if len(self._segments) < SEGMENT_CACHE_SIZE:
            self._segments[segment] = out
        return out

    def final_state(self, gates: Sequence[GateKind], rng: np.random.Generator | None = None,
                    rho0: np.ndarray | None = None) -> np.ndarray:
        if self.sequence_hook is not None:
            gates = self.sequence_hook(gates, rng if rng is not None else np.random.default_rng())
        v = qmath.vec(GROUND if rho0 is None else np.asarray(rho0, dtype=complex))
        segment: list = []
        for g in list(gates) + [None]:
            if g is not None and not isinstance(g, Barrier):
                segment.append(g)
                continue
            if segment:
                v = self.segment_matrix(tuple(segment)) @ v
                segment = []
            if g is not None:
                extra = self.barrier(g.tag)
                if extra is not None:
                    v = extra.matrix @ v
        return qmath.unvec(v, 4)


class SimpleModelBackend(ChannelBackend):
    """Two-level model: every gate goes through ``noisy_gate_channel``."""

    def __init__(self, noise: SimpleNoiseModel, sequence_hook: SequenceHook | None = None):
        self.noise = noise
        super().__init__(lambda k: noisy_gate_channel(k, noise), sequence_hook)
        self.ideal_single_qubit = noise.tau_1q == 0


class IdealBackend(ChannelBackend):
    def __init__(self, sequence_hook: SequenceHook | None = None):
        super().__init__(lambda k: qmath.unitary_to_superop(gate_unitary(k)), sequence_hook)


class TableBackend(ChannelBackend):
    """Two-qubit gates from a fixed table of channels (e.g. full-model tomography); 1q gates ideal."""

    def __init__(self, table: Mapping[GateKind, SuperOperator], sequence_hook: SequenceHook | None = None):
        def lookup(kind):
            if kind in table:
                return table[kind]
            if isinstance(kind, TWO_QUBIT_KINDS):
                raise BackendError(f"no channel for two-qubit gate {kind}")
            return qmath.unitary_to_superop(gate_unitary(kind))

        super().__init__(lookup, sequence_hook)


def depolarizing_superop(survival: float) -> SuperOperator:
    """rho -> survival * rho + (1 - survival) * tr(rho) I / 4."""
    eye = qmath.vec(np.eye(4))
    return SuperOperator(survival * np.eye(16) + (1 - survival) * np.outer(eye, eye) / 4)


class DepolarizingBackend(IdealBackend):
    """Analytic oracle: ideal gates plus global depolarization at every Clifford boundary.

    The interleaved gate gets its own survival through the ``"interleaved"``
    barrier tag.
    """

    def __init__(self, survival: float, interleaved_survival: float = 1.0):
        super().__init__()
        self._maps = {
            "clifford": depolarizing_superop(survival),
            "interleaved": depolarizing_superop(interleaved_survival),
        }

    def barrier(self, tag: str) -> SuperOperator | None:
        return self._maps.get(tag)
