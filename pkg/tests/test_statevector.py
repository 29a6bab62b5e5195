import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlks.statevector import (AmplitudeLoad, DiagonalUnitary, Hadamard, MultiControlledX, PauliX, RegisterLayout,
                              StateVector, Swap, apply_gate, apply_gates, dense_matrix, dump_csv, encode_amplitudes,
                              project_ancilla_zero, read_subspace)


def flat(n):
    return RegisterLayout(n_q=0, n_x=n, n_y=0, n_a=0)


def basis(n, k):
    a = np.zeros(1 << n, complex)
    a[k] = 1
    return StateVector(flat(n), a)


# Independent oracle: the matrix of one gate built entry by entry from its
# textbook definition on basis states (bit i of the index is qubit i).
def gate_matrix(gate, n):
    dim = 1 << n
    m = np.zeros((dim, dim), complex)
    bit = lambda k, q: (k >> q) & 1  # noqa: E731

    def active(k, controls):
        return all(bit(k, q) == v for q, v in controls)

    for k in range(dim):
        if isinstance(gate, Hadamard):
            if not active(k, gate.controls):
                m[k, k] = 1
                continue
            t = gate.target
            k0, k1 = k & ~(1 << t), k | (1 << t)
            m[k0, k] += 1 / math.sqrt(2)
            m[k1, k] += (-1 if bit(k, t) else 1) / math.sqrt(2)
        elif isinstance(gate, (MultiControlledX, PauliX)):
            ctrls = getattr(gate, "controls", ())
            m[k ^ (1 << gate.target) if active(k, ctrls) else k, k] = 1
        elif isinstance(gate, Swap):
            j = k
            if bit(k, gate.a) != bit(k, gate.b):
                j = k ^ (1 << gate.a) ^ (1 << gate.b)
            m[j, k] = 1
        elif isinstance(gate, DiagonalUnitary):
            if active(k, gate.controls):
                idx = sum(bit(k, q) << i for i, q in enumerate(gate.targets))
                m[k, k] = gate.entries[idx]
            else:
                m[k, k] = 1
    return m


@st.composite
def random_gate(draw, n):
    kind = draw(st.sampled_from(["h", "ch", "x", "mcx", "swap", "diag"]))
    qubits = draw(st.permutations(range(n)))
    if kind == "h":
        return Hadamard(qubits[0])
    if kind == "x":
        return PauliX(qubits[0])
    if kind == "swap":
        return Swap(qubits[0], qubits[1])
    ncontrol = draw(st.integers(1, n - 1))
    ctrls = tuple((q, draw(st.integers(0, 1))) for q in qubits[1:1 + ncontrol])
    if kind == "ch":
        return Hadamard(qubits[0], ctrls)
    if kind == "mcx":
        return MultiControlledX(ctrls, qubits[0])
    ntarget = draw(st.integers(1, n))
    targets = tuple(draw(st.permutations(range(n)))[:ntarget])
    phases = draw(st.lists(st.floats(-np.pi, np.pi), min_size=1 << ntarget, max_size=1 << ntarget))
    dctrls = tuple(c for c in ctrls if c[0] not in targets)
    return DiagonalUnitary(targets, np.exp(1j * np.array(phases)), dctrls)


@st.composite
def circuit(draw):
    n = draw(st.integers(2, 6))
    gates = draw(st.lists(random_gate(n), min_size=1, max_size=8))
    return n, gates


@settings(max_examples=60, deadline=None)
@given(circuit())
def test_gate_lists_match_dense_oracle(nc):
    n, gates = nc
    want = np.eye(1 << n, dtype=complex)
    for g in gates:
        want = gate_matrix(g, n) @ want
    np.testing.assert_allclose(dense_matrix(gates, n), want, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(circuit(), st.integers(0, 2 ** 32 - 1))
def test_norm_preserved(nc, seed):
    n, gates = nc
    r = np.random.default_rng(seed)
    amps = r.standard_normal(1 << n) + 1j * r.standard_normal(1 << n)
    s = StateVector(flat(n), amps / np.linalg.norm(amps))
    for g in gates:
        apply_gate(s, g)
        assert s.norm() == pytest.approx(1.0, abs=1e-12)


def test_qubit_zero_is_least_significant():
    s = apply_gate(basis(3, 0), PauliX(0))
    assert s.amplitudes[1] == 1
    s = apply_gate(basis(3, 0), PauliX(2))
    assert s.amplitudes[4] == 1


def test_hadamard_squared_is_identity(rng):
    amps = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    s = StateVector(flat(5), amps.copy())
    apply_gates(s, [Hadamard(3), Hadamard(3)])
    np.testing.assert_allclose(s.amplitudes, amps, atol=1e-14)


def test_hadamard_all_gives_uniform():
    n = 6
    s = apply_gates(basis(n, 0), [Hadamard(q) for q in range(n)])
    np.testing.assert_allclose(s.amplitudes, 2 ** (-n / 2), atol=1e-15)


def test_mcx_flips_only_when_all_controls_set():
    g = MultiControlledX(((0, 1), (1, 1)), 2)
    for k in range(8):
        s = apply_gate(basis(3, k), g)
        want = k ^ 4 if k & 3 == 3 else k
        assert s.amplitudes[want] == 1


def test_mcx_negative_polarity():
    g = MultiControlledX(((0, 0), (1, 1)), 2)
    assert apply_gate(basis(3, 0b010), g).amplitudes[0b110] == 1
    assert apply_gate(basis(3, 0b011), g).amplitudes[0b011] == 1


def test_mcx_is_involution(rng):
    g = MultiControlledX(((0, 1), (2, 0), (4, 1)), 3)
    amps = rng.standard_normal(32).astype(complex)
    s = StateVector(flat(5), amps.copy())
    apply_gates(s, [g, g])
    assert np.array_equal(s.amplitudes, amps)
    m = dense_matrix([g], 5)
    assert np.array_equal(m @ m, np.eye(32))


def test_identity_diagonal(rng):
    amps = rng.standard_normal(16).astype(complex)
    s = StateVector(flat(4), amps.copy())
    apply_gate(s, DiagonalUnitary((0, 1, 2, 3), np.ones(16)))
    assert np.array_equal(s.amplitudes, amps)


def test_gate_validation():
    with pytest.raises(ValueError):
        DiagonalUnitary((0,), [1.0, 1.0 + 1e-9])
    with pytest.raises(ValueError):
        DiagonalUnitary((0, 1), [1.0, 1.0])
    with pytest.raises(ValueError):
        AmplitudeLoad((0,), [1.0, 0.1])
    with pytest.raises(IndexError):
        apply_gate(basis(3, 0), Hadamard(3))
    with pytest.raises(IndexError):
        apply_gate(basis(3, 0), MultiControlledX(((7, 1),), 0))


def test_layout_registers():
    lay = RegisterLayout.for_mesh(9, (8, 4))
    assert (lay.n_q, lay.n_x, lay.n_y, lay.n_z, lay.n_a) == (4, 3, 2, 0, 1)
    assert lay.n_total == 10 and lay.dim == 1024
    assert lay.bits("x") == (0, 1, 2) and lay.bits("y") == (3, 4)
    assert lay.bits("q") == (5, 6, 7, 8) and lay.ancilla == 9
    allbits = sorted(b for r in "xyzqa" for b in lay.bits(r))
    assert allbits == list(range(lay.n_total))
    assert (1 << lay.n_x) * (1 << lay.n_y) * (1 << lay.n_z) == 32
    assert RegisterLayout.for_mesh(27, (16, 16, 16)).n_total == 18
    with pytest.raises(ValueError):
        RegisterLayout.for_mesh(9, (12, 8))


def test_encode_examples(rng):
    lay = RegisterLayout(n_q=1, n_x=2, n_y=0)
    s = encode_amplitudes(StateVector(lay), lay.spatial_bits, [1, 0, 0, 0])
    assert s.amplitudes[0] == 1 and s.scale == 1
    s = encode_amplitudes(StateVector(lay), lay.spatial_bits, [1, 1, 1, 1])
    np.testing.assert_allclose(s.amplitudes[:4], 0.5)
    assert s.scale == 2
    rho = 1 + 0.1 * rng.random(64)
    lay = RegisterLayout.for_mesh(9, (8, 8))
    s = encode_amplitudes(StateVector(lay), lay.spatial_bits, rho)
    np.testing.assert_allclose(read_subspace(s, {"a": 0, "q": 0}), rho / np.linalg.norm(rho), atol=1e-15)
    assert s.norm() == pytest.approx(1.0, abs=1e-12)


def test_encode_errors():
    lay = RegisterLayout(n_q=1, n_x=2, n_y=0)
    with pytest.raises(ValueError):
        encode_amplitudes(StateVector(lay), lay.spatial_bits, [0, 0, 0, 0])
    with pytest.raises(ValueError):
        encode_amplitudes(StateVector(lay), lay.spatial_bits, [1, 1, 1])


def test_project_examples():
    lay = RegisterLayout(n_q=1, n_x=1, n_y=0)
    s = StateVector(lay)
    apply_gate(s, Hadamard(0))
    s, p = project_ancilla_zero(s)
    assert p == 1
    s = StateVector(lay)
    apply_gates(s, [Hadamard(1), Hadamard(lay.ancilla)])
    before = s.amplitudes.copy()
    s, p = project_ancilla_zero(s)
    assert p == pytest.approx(0.5)
    np.testing.assert_array_equal(s.amplitudes[:4], before[:4])
    assert np.all(s.amplitudes[4:] == 0)


def test_read_subspace():
    lay = RegisterLayout(n_q=2, n_x=2, n_y=1)
    amps = np.arange(lay.dim, dtype=complex)
    s = StateVector(lay, amps)
    # index = ((a * 4 + q) * 2 + y) * 4 + x
    assert read_subspace(s, {"a": 1, "q": 2, "x": 3, "y": 1}).tolist() == [((1 * 4 + 2) * 2 + 1) * 4 + 3]
    block = read_subspace(s, {"a": 0, "q": 0})
    assert block.tolist() == list(range(8))
    block = read_subspace(s, {"a": 0, "q": 3})
    assert block.tolist() == list(range(24, 32))
    with pytest.raises(ValueError):
        read_subspace(s, {"q": 4})


def test_dump_csv_round_trip(tmp_path, rng):
    lay = RegisterLayout(n_q=1, n_x=2, n_y=0)
    amps = rng.standard_normal(lay.dim) + 1j * rng.standard_normal(lay.dim)
    s = StateVector(lay, amps)
    dump_csv(s, tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["basis_index", "re", "im"]
    back = np.array([float(r[1]) + 1j * float(r[2]) for r in rows[1:]])
    assert np.array_equal(back, amps)
