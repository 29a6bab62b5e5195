"""Hybrid quantum lattice kinetic scheme on the statevector simulator.

Each time step runs ``1 + D`` circuits of identical shape (density, then one
per momentum component):

    encode rho -> duplicate over the velocity register -> LCU collision
    -> controlled shifts (streaming) -> Hadamards on the velocity register
    -> rescaled readout of the (ancilla=0, velocity=0) block

Velocity gradients and cavity walls are handled classically between steps.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .classical import BoundarySpec, MacroFields, Mesh, apply_dirichlet, check_density, compute_gradients
from .lattice import FlowParams, VelocitySet, normalized_equilibrium
from .statevector import (
    DiagonalUnitary,
    Gate,
    Hadamard,
    MultiControlledX,
    RegisterLayout,
    StateVector,
    apply_gate,
    apply_gates,
    encode_amplitudes,
    project_ancilla_zero,
)

# Hadamard depth h of each velocity subspace after duplication; the
# amplitude of subspace alpha is 2**(-h/2).
DUPLICATION_DEPTHS = {
    "D2Q9": (2, 3, 3, 3, 4, 4, 4, 4, 3),
    "D3Q27": (3, 3, 3, 3) + (5,) * 8 + (6,) * 4 + (5,) * 4 + (6, 6, 7, 7, 8, 8, 7),
}

MOMENTS = ("density", "momentum_x", "momentum_y", "momentum_z")


# -- duplication -------------------------------------------------------------

@dataclass(frozen=True)
class DuplicationLayout:
    lattice: str
    n_q: int
    amplitudes: np.ndarray      # c_alpha over all 2**n_q subspaces (0 if unused)
    hadamard_counts: tuple[int, ...]
    compensation: np.ndarray    # C_alpha = 1 / c_alpha for used subspaces
    subspace: tuple[int, ...]   # velocity alpha -> subspace index
    unused: tuple[int, ...]
    gates: tuple[Gate, ...] = field(default=(), repr=False)


def _transposition(a: int, b: int, nq: int, off: int) -> list[Gate]:
    """Swap basis states ``a`` and ``b`` of the register, fixing all others."""
    path = [a]
    cur = a
    for bit in range(nq):
        if (a ^ b) >> bit & 1:
            cur ^= 1 << bit
            path.append(cur)

    def hop(s, t):
        bit = (s ^ t).bit_length() - 1
        ctrls = tuple((off + i, s >> i & 1) for i in range(nq) if i != bit)
        return MultiControlledX(ctrls, off + bit)

    fwd = [hop(path[i], path[i + 1]) for i in range(len(path) - 1)]
    back = [hop(path[i], path[i + 1]) for i in range(len(path) - 3, -1, -1)]
    return fwd + back


def _minimal_controls(p: int, t: int, occupied, nq: int, off: int):
    ctrls = {i: p >> i & 1 for i in range(nq) if i != t}
    for i in sorted(ctrls, reverse=True):
        trial = {k: v for k, v in ctrls.items() if k != i}
        ok = True
        for q in range(1 << nq):
            if q >> t & 1 or q == p:
                continue
            if any((q >> k & 1) != v for k, v in trial.items()):
                continue
            if q in occupied or (q | 1 << t) in occupied:
                ok = False
                break
        if ok:
            ctrls = trial
    return tuple((off + k, v) for k, v in sorted(ctrls.items()))


def _merge_controls(gates: list[Gate]) -> list[Gate]:
    """Fuse adjacent gates that differ only in the polarity of one control."""
    changed = True
    while changed:
        changed = False
        out: list[Gate] = []
        i = 0
        while i < len(gates):
            g = gates[i]
            if i + 1 < len(gates):
                h = gates[i + 1]
                if type(g) is type(h) and g.target == h.target:
                    cg, ch = dict(g.controls), dict(h.controls)
                    diff = [k for k in cg if ch.get(k) != cg[k]]
                    if cg.keys() == ch.keys() and len(diff) == 1:
                        rest = tuple((k, v) for k, v in g.controls if k != diff[0])
                        out.append(type(g)(target=g.target, controls=rest))
                        i += 2
                        changed = True
                        continue
            out.append(g)
            i += 1
        gates = out
    return gates


def _synthesize_duplication(depths, nq: int, off: int) -> list[Gate]:
    """Hadamard / controlled-Hadamard tree plus relabelling transpositions.

    Each controlled Hadamard splits one occupied basis state ``p`` (with the
    target bit clear) into ``p`` and a free partner, halving its probability.
    Labels are assigned greedily and fixed by a final permutation.
    """
    if sum(2.0 ** -h for h in depths) != 1.0:
        raise ValueError("duplication depths do not form a complete tree")
    target = dict(enumerate(depths))
    need = Counter(depths)
    occ = {0: 0}
    gates: list[Gate] = []
    size = 1 << nq

    def prefer(label, d):
        want = target.get(label, -1)
        return (want != d + 1, want < d + 1, label)

    for d in range(max(depths) + 1):
        level = [lab for lab, h in occ.items() if h == d]
        if len(level) < need[d]:
            raise RuntimeError("duplication synthesis failed")
        keep = sorted(level, key=lambda lab: (target.get(lab) != d, lab))[: need[d]]
        todo = set(level) - set(keep)
        while todo:
            free = sorted((lab for lab in range(size) if lab not in occ), key=lambda lab: prefer(lab, d))
            choice = None
            for m in free:
                for t in range(nq):
                    if m >> t & 1 and (m ^ 1 << t) in todo:
                        choice = (m, t, m ^ 1 << t)
                        break
                if choice:
                    break
            if choice is None:
                # no free partner next to a pending node: move one into place
                m = next(lab for lab in free if lab)
                t = (m & -m).bit_length() - 1
                p = m ^ 1 << t
                s = min(todo)
                gates += _transposition(s, p, nq, off)
                node = occ.pop(s)
                if p in occ:
                    occ[s] = occ.pop(p)
                    keep = [s if k == p else k for k in keep]
                occ[p] = node
                todo.discard(s)
                todo.add(p)
                choice = (m, t, p)
            m, t, p = choice
            gates.append(Hadamard(off + t, _minimal_controls(p, t, occ, nq, off)))
            occ[p] = d + 1
            occ[m] = d + 1
            todo.discard(p)
        # leaves at this depth are final; mark them so later splits skip them
        for lab in keep:
            occ[lab] = -1 - d
    leaves = {lab: -1 - h for lab, h in occ.items()}
    # route every leaf to a subspace of the same depth
    by_depth: dict[int, list[int]] = {}
    for lab, h in leaves.items():
        by_depth.setdefault(h, []).append(lab)
    dest = {}
    for h, labs in by_depth.items():
        wanted = [a for a, ha in target.items() if ha == h]
        fixed = set(labs) & set(wanted)
        rest_l = sorted(set(labs) - fixed)
        rest_w = sorted(set(wanted) - fixed)
        dest.update({lab: lab for lab in fixed})
        dest.update(dict(zip(rest_l, rest_w)))
    where = {lab: lab for lab in range(size)}   # content label -> position
    at = {lab: lab for lab in range(size)}      # position -> content label
    for lab in sorted(dest, key=lambda x: dest[x]):
        src, dst = where[lab], dest[lab]
        if src == dst:
            continue
        gates += _transposition(src, dst, nq, off)
        other = at[dst]
        at[dst], at[src] = lab, other
        where[lab], where[other] = dst, src
    return _merge_controls(gates)


@lru_cache(maxsize=None)
def _duplication_cached(name: str, n_q: int, off: int) -> DuplicationLayout:
    depths = DUPLICATION_DEPTHS[name]
    size = 1 << n_q
    amps = np.zeros(size)
    amps[: len(depths)] = [2.0 ** (-h / 2.0) for h in depths]
    comp = np.ones(size)
    comp[: len(depths)] = [2.0 ** (h / 2.0) for h in depths]
    gates = tuple(_synthesize_duplication(depths, n_q, off))
    return DuplicationLayout(
        lattice=name,
        n_q=n_q,
        amplitudes=amps,
        hadamard_counts=tuple(depths),
        compensation=comp,
        subspace=tuple(range(len(depths))),
        unused=tuple(range(len(depths), size)),
        gates=gates,
    )


def build_duplication(vset: VelocitySet, layout: RegisterLayout | None = None) -> tuple[DuplicationLayout, list[Gate]]:
    """Duplication amplitudes and the gate list that prepares them on the velocity register."""
    if vset.name not in DUPLICATION_DEPTHS:
        raise ValueError(f"unsupported lattice {vset.name}")
    n_q = math.ceil(math.log2(vset.q))
    off = layout.offsets["q"] if layout is not None else 0
    dup = _duplication_cached(vset.name, n_q, off)
    return dup, list(dup.gates)


# -- collision -----------------------------------------------------------------

@dataclass(frozen=True)
class CollisionDiagonal:
    entries: np.ndarray     # shape (2**n_q, M): subspace-major, site-minor
    lcu_scale: float
    moment: str

    @property
    def scaled(self) -> np.ndarray:
        return self.entries / self.lcu_scale


def _lcu_scale(max_abs: float) -> float:
    if max_abs <= 1.0:
        return 1.0
    return float(2.0 ** math.ceil(math.log2(max_abs)))


def _moment_axis(moment: str, dimension: int) -> int | None:
    if moment not in MOMENTS:
        raise ValueError(f"unknown moment {moment!r}")
    if moment == "density":
        return None
    axis = MOMENTS.index(moment) - 1
    if axis >= dimension:
        raise ValueError(f"{moment} requested for a {dimension}D lattice")
    return axis


def _diagonal_from_fhat(fhat: np.ndarray, vset: VelocitySet, dup: DuplicationLayout, moment: str) -> CollisionDiagonal:
    axis = _moment_axis(moment, vset.dimension)
    if not np.all(np.isfinite(fhat)):
        raise ValueError("non-finite equilibrium in collision diagonal")
    q, m = vset.q, fhat[0].size
    body = fhat.reshape(q, m, order="F") if fhat.ndim > 2 else fhat.reshape(q, m)
    body = body * dup.compensation[:q, None]
    if axis is not None:
        body = body * vset.velocities[:, axis].astype(float)[:, None]
    s = _lcu_scale(float(np.max(np.abs(body))))
    entries = np.full((1 << dup.n_q, m), s)
    entries[:q] = body
    return CollisionDiagonal(entries, s, moment)


def build_collision_diagonal(fields: MacroFields, gradients: np.ndarray, vset: VelocitySet, params: FlowParams,
                             dup: DuplicationLayout, moment: str = "density") -> CollisionDiagonal:
    """Diagonal ``d[alpha, k] = C_alpha * fhat_alpha(x_k)`` (times ``e_alpha,d`` for momentum).

    Applied to the duplicated state, this leaves ``f_eq(x_k)/(s*|rho|)`` in
    subspace ``alpha`` at site ``k``.
    """
    fhat = normalized_equilibrium(fields.rho, fields.u, gradients, vset, params)
    return _diagonal_from_fhat(_sites_last(fhat), vset, dup, moment)


def _sites_last(per_direction: np.ndarray) -> np.ndarray:
    # (Q, mx, my[, mz]) -> (Q, M) with x fastest
    q = per_direction.shape[0]
    return np.stack([per_direction[a].ravel(order="F") for a in range(q)])


def lcu_unitaries(diag: CollisionDiagonal, layout: RegisterLayout) -> tuple[DiagonalUnitary, DiagonalUnitary]:
    """Unitaries B1, B2 with (B1 + B2)/2 = D/s, each controlled on one ancilla value."""
    d = diag.scaled.reshape(-1)
    if np.max(np.abs(d)) > 1.0 + 1e-15:
        raise ValueError("collision diagonal exceeds LCU admissibility |d/s| <= 1")
    d = np.clip(d, -1.0, 1.0)
    root = np.sqrt(1.0 - d * d)
    targets = tuple(range(layout.n_total - 1))
    anc = layout.ancilla
    b1 = DiagonalUnitary(targets, d + 1j * root, controls=((anc, 0),))
    b2 = DiagonalUnitary(targets, d - 1j * root, controls=((anc, 1),))
    return b1, b2


def apply_lcu_collision(state: StateVector, b1: DiagonalUnitary, b2: DiagonalUnitary,
                        scale: float = 1.0) -> tuple[StateVector, float]:
    """H(anc) . [|0><0| B1 + |1><1| B2] . H(anc), then keep the ancilla-0 branch."""
    anc = state.layout.ancilla
    apply_gate(state, Hadamard(anc))
    apply_gate(state, b1)
    apply_gate(state, b2)
    apply_gate(state, Hadamard(anc))
    state, p = project_ancilla_zero(state)
    state.scale_log.append(("lcu", scale))
    return state, p


# -- streaming and moments ----------------------------------------------------

def shift_gates(bits: tuple[int, ...], direction: int, extra=()) -> list[MultiControlledX]:
    """Cyclic +1 (``direction=1``) or -1 shift of the register ``bits``."""
    polarity = 1 if direction > 0 else 0
    gates = []
    for j in range(len(bits) - 1, -1, -1):
        ctrls = tuple((bits[i], polarity) for i in range(j)) + tuple(extra)
        gates.append(MultiControlledX(ctrls, bits[j]))
    return gates


def build_streaming(vset: VelocitySet, layout: RegisterLayout, mesh: Mesh | None = None) -> list[Gate]:
    """Shift every direction's subspace by e_alpha with periodic wrap."""
    if mesh is not None and not mesh.is_power_of_two():
        raise ValueError("streaming needs power-of-two mesh sizes")
    qbits = layout.bits("q")
    gates: list[Gate] = []
    for alpha in range(vset.q):
        ctrl = tuple((b, alpha >> i & 1) for i, b in enumerate(qbits))
        for axis, e in enumerate(vset.velocities[alpha]):
            if e:
                reg = layout.bits(layout.axis_register(axis))
                gates += shift_gates(reg, int(e), ctrl)
    return gates


def apply_moment_extraction(state: StateVector, layout: RegisterLayout | None = None) -> StateVector:
    """Sum the velocity subspaces into subspace 0 (up to 1/sqrt(2)**n_q)."""
    layout = layout or state.layout
    for b in layout.bits("q"):
        apply_gate(state, Hadamard(b))
    state.scale_log.append(("moment", math.sqrt(2.0) ** layout.n_q))
    return state


def readout_field(state: StateVector, shape: tuple[int, ...]) -> np.ndarray:
    """Rescaled real amplitudes of the (ancilla=0, velocity=0) block as a grid."""
    m = 1 << state.layout.n_spatial
    block = state.amplitudes[:m]
    return (state.scale * block.real).reshape(shape, order="F")


# -- hybrid step ---------------------------------------------------------------

@dataclass
class StepReport:
    success_prob: dict[str, float] = field(default_factory=dict)
    field_norms: dict[str, float] = field(default_factory=dict)
    lcu_scale: dict[str, float] = field(default_factory=dict)
    gate_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


@lru_cache(maxsize=16)
def _circuit_parts(name: str, shape: tuple[int, ...]):
    from .lattice import make_velocity_set

    vset = make_velocity_set(name)
    reg = RegisterLayout.for_mesh(vset.q, shape)
    dup, dgates = build_duplication(vset, reg)
    sgates = tuple(build_streaming(vset, reg))
    return reg, dup, tuple(dgates), sgates


def run_circuit(fields: MacroFields, fhat_sites: np.ndarray, vset: VelocitySet, moment: str,
                report: StepReport | None = None) -> np.ndarray:
    """One density or momentum circuit; returns the rescaled readout grid."""
    shape = fields.rho.shape
    reg, dup, dgates, sgates = _circuit_parts(vset.name, shape)
    state = StateVector(reg)
    encode_amplitudes(state, reg.spatial_bits, fields.rho.ravel(order="F"))
    apply_gates(state, dgates)
    diag = _diagonal_from_fhat(fhat_sites, vset, dup, moment)
    b1, b2 = lcu_unitaries(diag, reg)
    state, p = apply_lcu_collision(state, b1, b2, diag.lcu_scale)
    apply_gates(state, sgates)
    apply_moment_extraction(state, reg)
    if report is not None:
        report.success_prob[moment] = p
        report.field_norms[moment] = state.scale_log[0][1]
        report.lcu_scale[moment] = diag.lcu_scale
        report.gate_counts = {
            "initialization": 1 + len(dgates),
            "collision": 4,
            "streaming": len(sgates),
            "moments": reg.n_q,
        }
    return readout_field(state, shape)


def qlks_step(fields: MacroFields, vset: VelocitySet, params: FlowParams,
              bc: BoundarySpec = BoundarySpec()) -> tuple[MacroFields, StepReport]:
    """One hybrid step: classical gradients, 1 + D circuits, classical walls."""
    mesh = fields.mesh
    if not mesh.is_power_of_two():
        raise ValueError("quantum backend needs power-of-two mesh sizes")
    grad = compute_gradients(fields, mesh, bc)
    fhat = _sites_last(normalized_equilibrium(fields.rho, fields.u, grad, vset, params))
    report = StepReport()
    rho = run_circuit(fields, fhat, vset, "density", report)
    check_density(rho)
    mom = [run_circuit(fields, fhat, vset, MOMENTS[1 + d], report) for d in range(vset.dimension)]
    out = MacroFields(rho, np.stack(mom) / rho)
    if bc.kind == "cavity":
        out = apply_dirichlet(out, bc)
    return out, report


# -- resources -----------------------------------------------------------------

def resource_estimate(vset: VelocitySet, mesh: Mesh) -> dict:
    """Gate-count scalings per stage plus counts of gates this implementation emits."""
    reg = RegisterLayout.for_mesh(vset.q, mesh.shape)
    ns = reg.n_spatial
    q, sigma = vset.q, vset.n_moving
    formula = {
        "initialization": 2 ** ns,
        "collision": q * 2 ** (ns + 1),
        "streaming": sigma * reg.n_x,
        "moments": 2 * reg.n_q,
    }
    formula["total"] = (2 * q + 1) * 2 ** ns + sigma * reg.n_x + 2 * reg.n_q
    _, dgates = build_duplication(vset, reg)
    sgates = build_streaming(vset, reg)
    emitted = {
        "amplitude_load": 1,
        "duplication": len(dgates),
        "collision_hadamard": 2,
        "collision_diagonal": 2,
        "streaming_mcx": len(sgates),
        "moment_hadamard": reg.n_q,
    }
    return {
        "lattice": vset.name,
        "mesh": list(mesh.shape),
        "qubits": {"n_a": reg.n_a, "n_q": reg.n_q, "n_x": reg.n_x, "n_y": reg.n_y, "n_z": reg.n_z,
                   "n_total": reg.n_total},
        "sigma": sigma,
        "formula": formula,
        "emitted": emitted,
    }
