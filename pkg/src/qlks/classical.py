"""Classical lattice kinetic scheme: gradients, one-step update, walls, time loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import FlowParams, VelocitySet, check_mach, equilibrium

logger = logging.getLogger(__name__)

STEADY_THRESHOLD = 1e-9


class InstabilityError(RuntimeError):
    """Raised when a step produces a non-positive or non-finite density."""

    def __init__(self, message: str, node: tuple[int, ...] | None = None, step: int | None = None):
        super().__init__(message)
        self.node = node
        self.step = step


@dataclass(frozen=True)
class Mesh:
    mx: int
    my: int
    mz: int = 1
    dx: float = 1.0
    origin: tuple[float, ...] = (0.0, 0.0, 0.0)

    @property
    def dimension(self) -> int:
        return 2 if self.mz == 1 else 3

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.mx, self.my) if self.dimension == 2 else (self.mx, self.my, self.mz)

    @property
    def size(self) -> int:
        return self.mx * self.my * self.mz

    def is_power_of_two(self) -> bool:
        return all(n > 0 and n & (n - 1) == 0 for n in (self.mx, self.my, self.mz))

    @classmethod
    def from_shape(cls, shape) -> "Mesh":
        if len(shape) == 2:
            return cls(shape[0], shape[1])
        return cls(*shape)


@dataclass
class MacroFields:
    rho: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (self.rho.ndim,) + self.rho.shape:
            raise ValueError(f"velocity shape {self.u.shape} does not match density {self.rho.shape}")

    @property
    def mesh(self) -> Mesh:
        return Mesh.from_shape(self.rho.shape)

    def copy(self) -> "MacroFields":
        return MacroFields(self.rho.copy(), self.u.copy())

    @classmethod
    def uniform(cls, mesh: Mesh, rho0: float = 1.0, velocity=None) -> "MacroFields":
        rho = np.full(mesh.shape, float(rho0))
        u = np.zeros((mesh.dimension,) + mesh.shape)
        if velocity is not None:
            u += np.reshape(np.asarray(velocity, float), (-1,) + (1,) * mesh.dimension)
        return cls(rho, u)


@dataclass(frozen=True)
class BoundarySpec:
    """Periodic box, or a closed cavity whose lid is the top wall.

    The lid is the wall at the high end of the last axis (y in 2D, z in 3D).
    """

    kind: str = "periodic"
    lid_velocity: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("periodic", "cavity"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "cavity" and self.lid_velocity:
            if self.lid_velocity[-1] != 0:
                raise ValueError("lid velocity must be tangential to the lid")


def compute_gradients(fields: MacroFields, mesh: Mesh | None = None, bc: BoundarySpec = BoundarySpec()) -> np.ndarray:
    """Second-order finite-difference velocity gradient ``g[i, j] = du_i/dx_j``.

    Periodic boundaries wrap the central stencil; cavity walls use
    second-order one-sided differences.
    """
    u = fields.u
    dim = u.shape[0]
    dx = mesh.dx if mesh is not None else 1.0
    for ax, n in enumerate(u.shape[1:]):
        if n < 3:
            raise ValueError(f"need at least 3 nodes along axis {ax}, got {n}")
    grad = np.empty((dim, dim) + u.shape[1:])
    for i in range(dim):
        for j in range(dim):
            if bc.kind == "periodic":
                grad[i, j] = (np.roll(u[i], -1, axis=j) - np.roll(u[i], 1, axis=j)) / (2.0 * dx)
            else:
                grad[i, j] = np.gradient(u[i], dx, axis=j, edge_order=2)
    return grad


def stream(f: np.ndarray, vset: VelocitySet) -> np.ndarray:
    """Periodic shift of each direction so that ``out[a, x] = f[a, x - e_a]``."""
    out = np.empty_like(f)
    axes = tuple(range(vset.dimension))
    for a in range(vset.q):
        out[a] = np.roll(f[a], shift=tuple(int(c) for c in vset.velocities[a]), axis=axes)
    return out


def moments(f: np.ndarray, vset: VelocitySet) -> tuple[np.ndarray, np.ndarray]:
    rho = f.sum(axis=0)
    mom = np.tensordot(vset.velocities.T.astype(float), f, axes=(1, 0))
    return rho, mom


def check_density(rho: np.ndarray, step: int | None = None) -> None:
    bad = ~np.isfinite(rho) | (rho <= 0)
    if bad.any():
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InstabilityError(f"non-positive or non-finite density at node {node}", node=node, step=step)


def apply_dirichlet(fields: MacroFields, bc: BoundarySpec) -> MacroFields:
    """Overwrite wall velocities and copy wall density from the nearest interior node."""
    if bc.kind != "cavity":
        raise ValueError("apply_dirichlet requires a cavity boundary spec")
    rho, u = fields.rho, fields.u.copy()
    dim = rho.ndim
    for ax in range(dim):
        lo = [slice(None)] * dim
        hi = [slice(None)] * dim
        lo[ax], hi[ax] = 0, -1
        u[(slice(None), *lo)] = 0.0
        u[(slice(None), *hi)] = 0.0
    lid = [slice(None)] * dim
    lid[-1] = -1
    lid_u = np.zeros(dim)
    lid_u[: len(bc.lid_velocity)] = bc.lid_velocity
    for c in range(dim):
        u[(c, *lid)] = lid_u[c]
    nearest = np.ix_(*[np.clip(np.arange(n), 1, n - 2) for n in rho.shape])
    return MacroFields(rho[nearest], u)


def lks_step(fields: MacroFields, vset: VelocitySet, params: FlowParams,
             bc: BoundarySpec = BoundarySpec(), grad: np.ndarray | None = None) -> MacroFields:
    """Advance one step: collide to equilibrium, stream, take moments."""
    if grad is None:
        grad = compute_gradients(fields, None, bc)
    feq = equilibrium(fields.rho, fields.u, grad, vset, params)
    rho, mom = moments(stream(feq, vset), vset)
    check_density(rho)
    out = MacroFields(rho, mom / rho)
    if bc.kind == "cavity":
        out = apply_dirichlet(out, bc)
    return out


def residual(new: MacroFields, old: MacroFields, u0: float) -> float:
    diff = new.u - old.u
    return float(np.sqrt(np.sum(diff * diff)) / (u0 * np.sqrt(new.rho.size)))


@dataclass
class RunResult:
    fields: MacroFields
    steps: int
    residuals: list[float] = field(default_factory=list)
    snapshots: dict[int, MacroFields] = field(default_factory=dict)
    reports: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return bool(self.residuals) and self.residuals[-1] < STEADY_THRESHOLD


Stepper = Callable[[MacroFields, VelocitySet, FlowParams, BoundarySpec], object]


def run(fields: MacroFields, vset: VelocitySet, params: FlowParams, bc: BoundarySpec = BoundarySpec(), *,
        steps: int | None = None, threshold: float | None = None, max_steps: int = 1_000_000,
        stepper: Stepper | None = None, snapshot_every: int = 0,
        on_step: Callable[[int, MacroFields], None] | None = None) -> RunResult:
    """Time loop for either backend.

    Runs ``steps`` steps, or until the velocity residual drops below
    ``threshold`` (at most ``max_steps``). ``stepper`` defaults to
    :func:`lks_step`; a stepper may return ``(fields, report)``, in which case
    the reports are collected.
    """
    if steps is None and threshold is None:
        raise ValueError("give steps or threshold")
    stepper = stepper or lks_step
    check_mach(fields.u, vset.cs2)
    result = RunResult(fields.copy(), 0)
    limit = steps if steps is not None else max_steps
    current = result.fields
    for n in range(1, limit + 1):
        try:
            out = stepper(current, vset, params, bc)
        except InstabilityError as exc:
            exc.step = n
            raise
        if isinstance(out, tuple):
            out, report = out
            result.reports.append(report)
        res = residual(out, current, params.u0) if params.u0 > 0 else 0.0
        result.residuals.append(res)
        current = out
        result.steps = n
        if on_step is not None:
            on_step(n, current)
        if snapshot_every and n % snapshot_every == 0:
            result.snapshots[n] = current.copy()
        if threshold is not None and res < threshold:
            logger.info("converged after %d steps (residual %.3e)", n, res)
            break
    result.fields = current
    return result
