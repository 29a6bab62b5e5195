"""Lattice models, equilibrium distributions and viscosity relations.

Grids follow one convention throughout the package: a scalar field has
shape ``(mx, my)`` or ``(mx, my, mz)``, a vector field carries the component
axis first, ``(D, mx, my[, mz])``, and a velocity gradient is stored as
``grad[i, j] = du_i / dx_j`` with shape ``(D, D, mx, my[, mz])``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

CS2 = Fraction(1, 3)

# Direction tables are frozen: the quantum velocity register maps subspace
# index alpha to row alpha of these tables.
_D2Q9_VELOCITIES = (
    (0, 0),
    (1, 0), (0, 1), (-1, 0), (0, -1),
    (1, 1), (-1, 1), (-1, -1), (1, -1),
)
_D2Q9_WEIGHTS = (Fraction(4, 9),) + (Fraction(1, 9),) * 4 + (Fraction(1, 36),) * 4

_D3Q27_VELOCITIES = (
    (0, 0, 0),
    # axis directions
    (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
    # edge directions, in opposite pairs
    (1, 1, 0), (-1, -1, 0), (-1, 0, 1), (1, 0, -1), (1, 0, 1), (-1, 0, -1),
    (0, 1, 1), (0, -1, -1), (1, -1, 0), (-1, 1, 0), (0, 1, -1), (0, -1, 1),
    # corner directions, in opposite pairs
    (1, 1, 1), (-1, -1, -1), (1, 1, -1), (-1, -1, 1),
    (1, -1, 1), (-1, 1, -1), (-1, 1, 1), (1, -1, -1),
)
_D3Q27_WEIGHTS = (
    (Fraction(8, 27),)
    + (Fraction(2, 27),) * 6
    + (Fraction(1, 54),) * 12
    + (Fraction(1, 216),) * 8
)

MACH_WARNING = 0.3


@dataclass(frozen=True)
class VelocitySet:
    name: str
    dimension: int
    velocities: np.ndarray
    weights: np.ndarray
    exact_weights: tuple[Fraction, ...]
    cs2: float = float(CS2)

    @property
    def q(self) -> int:
        return len(self.exact_weights)

    @property
    def n_moving(self) -> int:
        """Number of directions with a non-zero velocity."""
        return int(np.count_nonzero(np.any(self.velocities != 0, axis=1)))

    def opposite(self, alpha: int) -> int:
        target = -self.velocities[alpha]
        return int(np.flatnonzero(np.all(self.velocities == target, axis=1))[0])


def make_velocity_set(model: str) -> VelocitySet:
    """Return the canonical D2Q9 or D3Q27 lattice (index 0 is the rest velocity)."""
    key = model.upper()
    if key == "D2Q9":
        vel, w, dim = _D2Q9_VELOCITIES, _D2Q9_WEIGHTS, 2
    elif key == "D3Q27":
        vel, w, dim = _D3Q27_VELOCITIES, _D3Q27_WEIGHTS, 3
    else:
        raise ValueError(f"unsupported lattice model {model!r}")
    velocities = np.array(vel, dtype=np.int64)
    velocities.setflags(write=False)
    weights = np.array([float(x) for x in w])
    weights.setflags(write=False)
    return VelocitySet(key, dim, velocities, weights, tuple(w), float(CS2))


def a_from_viscosity(nu: float, dt: float = 1.0, cs2: float = float(CS2)) -> float:
    """Equilibrium constant A giving kinematic viscosity ``nu`` at tau = 1."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if cs2 <= 0:
        raise ValueError("cs2 must be positive")
    return (0.5 - nu / (cs2 * dt)) / (2.0 * cs2)


def viscosity_from_a(a: float, dt: float = 1.0, cs2: float = float(CS2), tau: float = 1.0) -> float:
    return (tau - 0.5 - 2.0 * a * cs2) * cs2 * dt


def pressure(rho, cs2: float = float(CS2)):
    return np.multiply(rho, cs2)


@dataclass(frozen=True)
class FlowParams:
    """Physical and numerical parameters of one run, in lattice units.

    Exactly one of ``nu`` / ``a_coeff`` may be left as ``None``; the other is
    derived so that the viscosity relation holds. ``re`` is derived from
    ``u0``, ``length`` and ``nu`` when not given.
    """

    u0: float = 0.0
    nu: float | None = None
    a_coeff: float | None = None
    length: float = 1.0
    rho0: float = 1.0
    dt: float = 1.0
    dx: float = 1.0
    cs2: float = float(CS2)
    tau: float = 1.0
    re: float | None = field(default=None)

    def __post_init__(self):
        if self.tau != 1.0:
            raise ValueError("only tau = 1 is supported")
        if self.dx != self.dt:
            raise ValueError("dx must equal c*dt with c = 1")
        if self.nu is None and self.a_coeff is None:
            raise ValueError("one of nu or a_coeff is required")
        if self.a_coeff is None:
            object.__setattr__(self, "a_coeff", a_from_viscosity(self.nu, self.dt, self.cs2))
        nu = viscosity_from_a(self.a_coeff, self.dt, self.cs2)
        if self.nu is not None and not np.isclose(nu, self.nu, rtol=1e-12, atol=0.0):
            raise ValueError(f"nu={self.nu} inconsistent with a_coeff={self.a_coeff}")
        object.__setattr__(self, "nu", nu)
        if nu <= 0:
            raise ValueError(f"non-positive viscosity {nu} (a_coeff must be < 1/(4 cs2))")
        if self.re is None and self.u0 > 0:
            object.__setattr__(self, "re", self.u0 * self.length / nu)

    @classmethod
    def from_reynolds(cls, u0: float, re: float, length: float, **kw) -> "FlowParams":
        nu = u0 * length / re
        return cls(u0=u0, nu=nu, length=length, re=re, **kw)


def symmetric_gradient(grad_u: np.ndarray) -> np.ndarray:
    return grad_u + np.swapaxes(grad_u, 0, 1)


def check_mach(u: np.ndarray, cs2: float = float(CS2)) -> float:
    """Return max |u| / c_s and warn when it exceeds the low-Mach guard."""
    speed = np.sqrt(np.sum(np.asarray(u) ** 2, axis=0))
    mach = float(speed.max() / np.sqrt(cs2)) if speed.size else 0.0
    if mach > MACH_WARNING:
        warnings.warn(f"Mach number {mach:.3f} exceeds {MACH_WARNING}", RuntimeWarning, stacklevel=2)
    return mach


def equilibrium(rho, u, grad_u, vset: VelocitySet, params: FlowParams, alpha: int | None = None):
    """Modified equilibrium distribution with the velocity-gradient term.

    ``rho`` may be a scalar or a grid; ``u`` has the component axis first and
    ``grad_u`` the two tensor axes first. With ``alpha=None`` all ``q``
    directions are returned stacked on a new leading axis.
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    s = symmetric_gradient(np.asarray(grad_u, dtype=float))
    cs2 = vset.cs2
    usq = np.einsum("i...,i...->...", u, u)
    if alpha is None:
        alphas = range(vset.q)
    else:
        if not 0 <= alpha < vset.q:
            raise IndexError(f"direction {alpha} out of range for {vset.name}")
        alphas = (alpha,)
    out = []
    for a in alphas:
        e = vset.velocities[a].astype(float)
        eu = np.tensordot(e, u, axes=(0, 0))
        ese = np.tensordot(e, np.tensordot(e, s, axes=(0, 0)), axes=(0, 0))
        poly = 1.0 + eu / cs2 + eu * eu / (2.0 * cs2 * cs2) - usq / (2.0 * cs2)
        poly = poly + params.a_coeff * params.dt * ese
        out.append(vset.weights[a] * rho * poly)
    return out[0] if alpha is not None else np.stack(out)


def normalized_equilibrium(rho, u, grad_u, vset: VelocitySet, params: FlowParams, alpha: int | None = None):
    """Equilibrium divided by density."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho == 0):
        raise ValueError("zero density: normalized equilibrium is undefined")
    return equilibrium(rho, u, grad_u, vset, params, alpha) / rho
