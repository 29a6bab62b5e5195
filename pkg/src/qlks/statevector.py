"""Deterministic statevector simulator with the gate set the QLKS circuits use.

Bit ordering: qubit 0 is the least significant bit of the basis index. The
register layout places the spatial registers in the low bits (x, then y,
then z), the velocity register above them and the single ancilla on top, so
a basis index decomposes as ``index = (a * 2**n_q + alpha) * M + k`` with
``k = x + mx * (y + my * z)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

_INV_SQRT2 = 1.0 / math.sqrt(2.0)

Controls = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class RegisterLayout:
    n_q: int
    n_x: int
    n_y: int
    n_z: int = 0
    n_a: int = 1

    @property
    def n_spatial(self) -> int:
        return self.n_x + self.n_y + self.n_z

    @property
    def n_total(self) -> int:
        return self.n_a + self.n_q + self.n_spatial

    @property
    def dim(self) -> int:
        return 1 << self.n_total

    @property
    def offsets(self) -> dict[str, int]:
        x = 0
        y = x + self.n_x
        z = y + self.n_y
        q = z + self.n_z
        a = q + self.n_q
        return {"x": x, "y": y, "z": z, "q": q, "a": a}

    @property
    def widths(self) -> dict[str, int]:
        return {"x": self.n_x, "y": self.n_y, "z": self.n_z, "q": self.n_q, "a": self.n_a}

    def bits(self, register: str) -> tuple[int, ...]:
        off = self.offsets[register]
        return tuple(range(off, off + self.widths[register]))

    @property
    def spatial_bits(self) -> tuple[int, ...]:
        return tuple(range(self.n_spatial))

    @property
    def ancilla(self) -> int:
        return self.offsets["a"]

    def axis_register(self, axis: int) -> str:
        return "xyz"[axis]

    @classmethod
    def for_mesh(cls, q: int, shape: Sequence[int]) -> "RegisterLayout":
        nbits = []
        for n in shape:
            if n < 1 or n & (n - 1):
                raise ValueError(f"mesh size {n} is not a power of two")
            nbits.append(n.bit_length() - 1)
        nbits += [0] * (3 - len(nbits))
        return cls(n_q=math.ceil(math.log2(q)), n_x=nbits[0], n_y=nbits[1], n_z=nbits[2])


# -- gates -----------------------------------------------------------------

@dataclass(frozen=True)
class Hadamard:
    target: int
    controls: Controls = ()


@dataclass(frozen=True)
class PauliX:
    target: int


@dataclass(frozen=True)
class MultiControlledX:
    """X on ``target`` when every ``(qubit, value)`` control matches."""

    controls: Controls
    target: int


@dataclass(frozen=True)
class Swap:
    a: int
    b: int


@dataclass(frozen=True, eq=False)
class DiagonalUnitary:
    """Diagonal on ``targets`` (entry index bit i = qubit targets[i])."""

    targets: tuple[int, ...]
    entries: np.ndarray
    controls: Controls = ()

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.shape != (1 << len(self.targets),):
            raise ValueError("diagonal length must be 2**len(targets)")
        if entries.size and np.max(np.abs(entries.real ** 2 + entries.imag ** 2 - 1.0)) > 2e-12:
            raise ValueError("diagonal entries must have unit modulus")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True, eq=False)
class AmplitudeLoad:
    """State preparation |0> -> sum_k v_k |k> on ``targets`` (real unit vector)."""

    targets: tuple[int, ...]
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float)
        if v.shape != (1 << len(self.targets),):
            raise ValueError("vector length must be 2**len(targets)")
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("amplitude vector must have unit norm")
        object.__setattr__(self, "vector", v)


Gate = Union[Hadamard, PauliX, MultiControlledX, Swap, DiagonalUnitary, AmplitudeLoad]


# -- state -----------------------------------------------------------------

@dataclass
class StateVector:
    layout: RegisterLayout
    amplitudes: np.ndarray = None
    scale_log: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.amplitudes is None:
            self.amplitudes = np.zeros(self.layout.dim, dtype=complex)
            self.amplitudes[0] = 1.0
        elif self.amplitudes.shape != (self.layout.dim,):
            raise ValueError("amplitude count must be 2**n_total")

    @property
    def n(self) -> int:
        return self.layout.n_total

    @property
    def scale(self) -> float:
        return math.prod(v for _, v in self.scale_log)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.layout, self.amplitudes.copy(), list(self.scale_log))


def _check_qubits(n: int, qubits: Iterable[int]) -> None:
    for q in qubits:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n}-qubit state")


def _index(n: int, fixed: dict[int, int]) -> tuple:
    # axis i of the (2,)*n view is qubit n-1-i
    idx = [slice(None)] * n
    for q, v in fixed.items():
        idx[n - 1 - q] = v
    return tuple(idx)


def _compact(n: int, fixed: dict[int, int]) -> tuple[tuple[int, ...], tuple]:
    """View shape with one axis per fixed qubit and merged runs of free qubits."""
    shape, idx = [], []
    run = 1
    for q in range(n - 1, -1, -1):
        if q in fixed:
            if run > 1:
                shape.append(run)
                idx.append(slice(None))
            run = 1
            shape.append(2)
            idx.append(fixed[q])
        else:
            run *= 2
    if run > 1 or not any(isinstance(i, slice) for i in idx):
        # keep at least one sliced axis so indexing yields a writable view
        shape.append(run)
        idx.append(slice(None))
    return tuple(shape), tuple(idx)


@lru_cache(maxsize=65536)
def _pair_index(n: int, controls: Controls, target: int) -> tuple[tuple, tuple, tuple]:
    ctrl = dict(controls)
    _check_qubits(n, [target, *ctrl])
    if target in ctrl:
        raise ValueError("target cannot also be a control")
    shape, i0 = _compact(n, {**ctrl, target: 0})
    _, i1 = _compact(n, {**ctrl, target: 1})
    return shape, i0, i1


def _apply_diagonal(amps: np.ndarray, n: int, gate: DiagonalUnitary) -> None:
    ctrl = dict(gate.controls)
    free = sorted(set(range(n)) - set(ctrl))
    if not ctrl and tuple(gate.targets) == tuple(range(n)):
        amps *= gate.entries
        return
    view = amps.reshape((2,) * n)
    sub = view[_index(n, ctrl)]
    if tuple(gate.targets) == tuple(free):
        sub *= gate.entries.reshape((2,) * len(free))
        return
    # general case: gather the entry index of every basis state in the block
    m = len(free)
    local = np.arange(1 << m)
    bitvals = {q: (local >> i) & 1 for i, q in enumerate(free)}
    sel = np.zeros(1 << m, dtype=np.int64)
    for i, t in enumerate(gate.targets):
        if t not in bitvals:
            raise ValueError("diagonal targets overlap its controls")
        sel |= bitvals[t] << i
    sub *= gate.entries[sel].reshape((2,) * m)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Apply ``gate`` in place and return the state."""
    n = state.n
    amps = state.amplitudes
    if isinstance(gate, (Hadamard, MultiControlledX, PauliX)):
        shape, i0, i1 = _pair_index(n, getattr(gate, "controls", ()), gate.target)
        view = amps.reshape(shape)
        lo, hi = view[i0], view[i1]
        if isinstance(gate, Hadamard):
            a = lo * _INV_SQRT2
            hi *= _INV_SQRT2
            np.add(a, hi, out=lo)
            np.subtract(a, hi, out=hi)
        else:
            a = lo.copy()
            lo[...] = hi
            hi[...] = a
    elif isinstance(gate, Swap):
        _check_qubits(n, [gate.a, gate.b])
        view = amps.reshape((2,) * n)
        i01 = _index(n, {gate.a: 0, gate.b: 1})
        i10 = _index(n, {gate.a: 1, gate.b: 0})
        tmp = view[i01].copy()
        view[i01] = view[i10]
        view[i10] = tmp
    elif isinstance(gate, DiagonalUnitary):
        _check_qubits(n, [*gate.targets, *dict(gate.controls)])
        _apply_diagonal(amps, n, gate)
    elif isinstance(gate, AmplitudeLoad):
        _check_qubits(n, gate.targets)
        _apply_load(state, gate)
    else:
        raise TypeError(f"unknown gate {gate!r}")
    return state


def _apply_load(state: StateVector, gate: AmplitudeLoad) -> None:
    n = state.n
    targets = tuple(gate.targets)
    if targets != tuple(range(len(targets))):
        raise ValueError("AmplitudeLoad supports the low contiguous register only")
    m = len(targets)
    block = state.amplitudes.reshape(-1, 1 << m)
    head = block[:, 0].copy()
    total = np.vdot(state.amplitudes, state.amplitudes).real
    if total - np.vdot(head, head).real > 1e-24 * max(total, 1.0):
        raise ValueError("AmplitudeLoad requires its target register in |0>")
    np.multiply.outer(head, gate.vector, out=block)


def apply_gates(state: StateVector, gates: Iterable[Gate]) -> StateVector:
    for g in gates:
        apply_gate(state, g)
    return state


def encode_amplitudes(state: StateVector, bits: Sequence[int], data, label: str = "norm") -> StateVector:
    data = np.asarray(data, dtype=float).ravel()
    if data.shape != (1 << len(bits),):
        raise ValueError(f"data length {data.size} != 2**{len(bits)}")
    if np.any(data < 0):
        raise ValueError("amplitude encoding expects non-negative data")
    norm = float(np.linalg.norm(data))
    if norm == 0:
        raise ValueError("cannot encode the zero vector")
    apply_gate(state, AmplitudeLoad(tuple(bits), data / norm))
    state.scale_log.append((label, norm))
    return state


def project_ancilla_zero(state: StateVector) -> tuple[StateVector, float]:
    """Zero the ancilla-|1> branch without renormalising.

    Returns the probability of the |0> outcome relative to the norm before
    projection.
    """
    a = state.layout.ancilla
    view = state.amplitudes.reshape((2,) * state.n)
    total = float(np.vdot(state.amplitudes, state.amplitudes).real)
    view[_index(state.n, {a: 1})] = 0.0
    kept = float(np.vdot(state.amplitudes, state.amplitudes).real)
    return state, kept / total


def read_subspace(state: StateVector, pattern: dict[str, int]) -> np.ndarray:
    """Amplitudes of all basis states whose named registers hold fixed values.

    ``pattern`` maps register names (``"a"``, ``"q"``, ``"x"``, ``"y"``,
    ``"z"``) to integer values; the result is ordered by the basis index of
    the remaining bits.
    """
    lay = state.layout
    fixed: dict[int, int] = {}
    for reg, value in pattern.items():
        bits = lay.bits(reg)
        if not 0 <= value < (1 << len(bits)):
            raise ValueError(f"value {value} out of range for register {reg!r}")
        for i, b in enumerate(bits):
            fixed[b] = (value >> i) & 1
    view = state.amplitudes.reshape((2,) * state.n)
    return np.array(view[_index(state.n, fixed)]).reshape(-1)


def dense_matrix(gates: Sequence[Gate], n: int) -> np.ndarray:
    """Dense unitary of a gate list, built column by column (small n only)."""
    lay = RegisterLayout(n_q=0, n_x=n, n_y=0, n_a=0)
    cols = []
    for k in range(1 << n):
        amps = np.zeros(1 << n, dtype=complex)
        amps[k] = 1.0
        cols.append(apply_gates(StateVector(lay, amps), gates).amplitudes)
    return np.stack(cols, axis=1)


def dump_csv(state: StateVector, path: str | Path) -> None:
    """Write ``basis_index,re,im`` rows at full double precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["basis_index", "re", "im"])
        for k, amp in enumerate(state.amplitudes):
            w.writerow([k, repr(float(amp.real)), repr(float(amp.imag))])
