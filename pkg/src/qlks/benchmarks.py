"""Analytic Taylor-Green solutions, reference profiles and error diagnostics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .classical import MacroFields, Mesh
from .lattice import CS2

TG2D = "TG2D"
TG3D = "TG3D"
SOURCES = ("Ghia", "Wong-Baker", "Jiang")


@dataclass(frozen=True)
class AnalyticCase:
    """Taylor-Green vortex in a periodic box ``[-L, L)`` per axis."""

    kind: str
    L: float
    u0: float
    re: float
    rho0: float = 1.0
    cs2: float = float(CS2)

    def __post_init__(self):
        if self.kind not in (TG2D, TG3D):
            raise ValueError(f"unknown analytic case {self.kind!r}")
        if self.L <= 0 or self.re <= 0:
            raise ValueError("L and re must be positive")

    @property
    def nu(self) -> float:
        return self.u0 * self.L / self.re

    @property
    def dimension(self) -> int:
        return 2 if self.kind == TG2D else 3

    @classmethod
    def for_mesh(cls, kind: str, n: int, u0: float, nu: float, rho0: float = 1.0) -> "AnalyticCase":
        """Case on an ``n``-node periodic mesh with unit spacing, so ``L = n / 2``."""
        L = n / 2.0
        return cls(kind, L, u0, u0 * L / nu, rho0)


def _decay(case: AnalyticCase, t, power: int):
    return np.exp(-power * np.pi ** 2 * case.u0 * np.asarray(t, float) / (case.re * case.L))


def taylor_green_2d(x, y, t, case: AnalyticCase):
    if case.kind != TG2D:
        raise ValueError("taylor_green_2d needs a TG2D case")
    return _tg(x, y, t, case)


def taylor_green_3d(x, y, z, t, case: AnalyticCase):
    """No flow along z and no z dependence: the 2D vortex extruded."""
    if case.kind != TG3D:
        raise ValueError("taylor_green_3d needs a TG3D case")
    x, y, z = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(z, float))
    u, v, rho = _tg(x, y, t, case)
    return u, v, np.zeros_like(u), rho


def _tg(x, y, t, case):
    k = np.pi / case.L
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    d1 = _decay(case, t, 2)
    d2 = _decay(case, t, 4)
    u = -case.u0 * np.cos(k * x) * np.sin(k * y) * d1
    v = case.u0 * np.sin(k * x) * np.cos(k * y) * d1
    amp = case.rho0 * case.u0 ** 2 / (4.0 * case.cs2)
    rho = case.rho0 - amp * (np.cos(2 * k * x) + np.cos(2 * k * y)) * d2
    return u, v, rho


def node_coordinates(n: int, L: float) -> np.ndarray:
    """Periodic nodes ``x_i = -L + i dx`` with ``2L = n dx``; node ``n`` aliases node 0."""
    return -L + np.arange(n) * (2.0 * L / n)


def _grid(case: AnalyticCase, mesh: Mesh):
    axes = [node_coordinates(n, case.L) for n in mesh.shape]
    return np.meshgrid(*axes, indexing="ij")


def exact_fields(case: AnalyticCase, mesh: Mesh, t: float) -> MacroFields:
    pts = _grid(case, mesh)
    if case.kind == TG2D:
        u, v, rho = taylor_green_2d(*pts, t, case)
        return MacroFields(rho, np.stack([u, v]))
    u, v, w, rho = taylor_green_3d(*pts, t, case)
    return MacroFields(rho, np.stack([u, v, w]))


def initial_fields(case: AnalyticCase, mesh: Mesh, density: str = "uniform") -> MacroFields:
    """Analytic velocity at t = 0 with a uniform ``rho0`` (default) or the analytic density."""
    exact = exact_fields(case, mesh, 0.0)
    if density == "analytic":
        return exact
    if density != "uniform":
        raise ValueError(f"unknown density initialisation {density!r}")
    return MacroFields(np.full(mesh.shape, case.rho0), exact.u)


def steps_for_tstar(tstar: float, L: float, u0: float) -> int:
    """Steps to reach ``t* = u0 t / L`` with unit time step."""
    if u0 <= 0:
        raise ValueError("u0 must be positive")
    return int(round(tstar * L / u0))


# -- error metrics ---------------------------------------------------------------

def l2_relative_error(numerical, exact, u0: float) -> float:
    numerical = np.asarray(numerical, float)
    exact = np.asarray(exact, float)
    if numerical.shape != exact.shape:
        raise ValueError(f"shape mismatch {numerical.shape} vs {exact.shape}")
    if u0 <= 0:
        raise ValueError("u0 must be positive")
    d = (numerical - exact) / u0
    return float(np.sqrt(np.sum(d * d) / d.size))


def convergence_order(sizes, errors) -> float:
    """Least-squares slope of log(error) against log(1/N)."""
    n = np.asarray(sizes, float)
    e = np.asarray(errors, float)
    if n.shape != e.shape or n.size < 2:
        raise ValueError("need at least two (size, error) pairs")
    if np.any(n <= 0) or np.any(e <= 0):
        raise ValueError("sizes and errors must be positive")
    x = np.log(1.0 / n)
    if np.ptp(x) == 0:
        raise ValueError("all mesh sizes are equal")
    return float(np.polyfit(x, np.log(e), 1)[0])


def measured_viscosity(times, amplitudes, L: float) -> float:
    """Viscosity from the exponential decay ``exp(-2 nu pi^2 t / L^2)`` of peak speed."""
    t = np.asarray(times, float)
    a = np.asarray(amplitudes, float)
    if t.size < 2 or t.shape != a.shape:
        raise ValueError("need at least two matching samples")
    if np.any(a <= 0):
        raise ValueError("amplitudes must be positive")
    slope = np.polyfit(t, np.log(a), 1)[0]
    return float(-slope * L ** 2 / (2.0 * np.pi ** 2))


@dataclass
class ErrorReport:
    l2: dict[str, float] = field(default_factory=dict)
    order: float | None = None
    residual_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if any(v < 0 for v in self.l2.values()):
            raise ValueError("L2 errors are non-negative")

    @property
    def l2_u(self) -> float:
        return self.l2["u"]

    @property
    def l2_v(self) -> float:
        return self.l2["v"]


def tg_error_report(fields: MacroFields, case: AnalyticCase, t: float,
                    residuals: list[float] | None = None) -> ErrorReport:
    exact = exact_fields(case, fields.mesh, t)
    names = "uvw"[: fields.u.shape[0]]
    l2 = {c: l2_relative_error(fields.u[i], exact.u[i], case.u0) for i, c in enumerate(names)}
    return ErrorReport(l2, None, list(residuals or []))


# -- reference profiles ----------------------------------------------------------

@dataclass(frozen=True)
class ReferenceProfile:
    """Centerline velocity samples normalised by the lid speed, sorted by coordinate."""

    source: str
    re: float
    quantity: str
    coords: np.ndarray
    values: np.ndarray
    version: str = ""

    def __post_init__(self):
        c = np.asarray(self.coords, float)
        v = np.asarray(self.values, float)
        if c.shape != v.shape or c.ndim != 1:
            raise ValueError("coords and values must be matching 1-D arrays")
        if c.size == 0:
            raise ValueError("empty reference profile")
        if np.any(c < 0) or np.any(c > 1):
            raise ValueError("reference coordinates must lie in [0, 1]")
        order = np.argsort(c, kind="stable")
        c, v = c[order], v[order]
        if np.any(np.diff(c) <= 0):
            raise ValueError("reference coordinates must be strictly monotone")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "values", v)


def read_reference_csv(path) -> ReferenceProfile:
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip()]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, val = ln[1:].partition(":")
            meta[key.strip()] = val.strip()
        else:
            body.append(ln)
    reader = csv.DictReader(body)
    if reader.fieldnames != ["coord", "value"]:
        raise ValueError(f"{path}: expected columns coord,value, got {reader.fieldnames}")
    for row in reader:
        rows.append((float(row["coord"]), float(row["value"])))
    for key in ("source", "re", "quantity"):
        if key not in meta:
            raise ValueError(f"{path}: missing header field {key!r}")
    if meta["source"] not in SOURCES:
        raise ValueError(f"{path}: unknown source tag {meta['source']!r}")
    if not rows:
        raise ValueError(f"{path}: empty reference profile")
    c, v = map(np.array, zip(*rows))
    return ReferenceProfile(meta["source"], float(meta["re"]), meta["quantity"], c, v, meta.get("version", ""))


def load_reference(source: str, re: int, quantity: str) -> ReferenceProfile:
    """Load a shipped reference profile, e.g. ``load_reference("Ghia", 100, "u")``."""
    name = f"{source.lower().replace('-', '_')}_re{int(re)}_{quantity}.csv"
    res = resources.files("qlks") / "data" / name
    if not res.is_file():
        raise FileNotFoundError(f"no reference data {name}")
    with resources.as_file(res) as p:
        return read_reference_csv(p)


def compare_profile(coords, values, reference: ReferenceProfile, u0: float = 1.0) -> dict[str, float]:
    """Interpolate a solution profile onto the reference points; deviations are in units of u0."""
    if reference.coords.size == 0:
        raise ValueError("empty reference profile")
    coords = np.asarray(coords, float)
    order = np.argsort(coords)
    sol = np.interp(reference.coords, coords[order], np.asarray(values, float)[order]) / u0
    dev = sol - reference.values
    return {"max": float(np.max(np.abs(dev))), "rms": float(np.sqrt(np.mean(dev * dev)))}


# -- cavity diagnostics ----------------------------------------------------------

def cavity_coordinates(n: int) -> np.ndarray:
    """Wall nodes sit at 0 and 1."""
    return np.arange(n) / (n - 1.0)


def _mid_line(field2d: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation of a 2-D array to the mid-plane of ``axis``."""
    n = field2d.shape[axis]
    pos = 0.5 * (n - 1)
    i0 = int(np.floor(pos))
    i1 = min(i0 + 1, n - 1)
    w = pos - i0
    a = np.take(field2d, i0, axis=axis)
    b = np.take(field2d, i1, axis=axis)
    return (1 - w) * a + w * b


def centerlines(fields: MacroFields) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Horizontal velocity on the vertical centerline and vertical velocity on the horizontal one.

    In 3D the mid-plane ``y = 0.5`` is taken first, giving u(z) at x = 0.5
    and w(x) at z = 0.5, with the lid at the top of z.
    """
    u = fields.u
    if u.shape[0] == 3:
        u = np.stack([_mid_line(u[0], 1), _mid_line(u[2], 1)])
    nx, ny = u.shape[1:]
    return {
        "u": (cavity_coordinates(ny), _mid_line(u[0], 0)),
        "v": (cavity_coordinates(nx), _mid_line(u[1], 1)),
    }


def stream_function(u: np.ndarray, dy: float = 1.0) -> np.ndarray:
    """``psi(x, y) = integral of u dy`` from the bottom wall, trapezoidal rule."""
    inc = 0.5 * (u[:, 1:] + u[:, :-1]) * dy
    return np.concatenate([np.zeros((u.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1)


def secondary_vortices(fields: MacroFields, corner: float = 0.25, rel_tol: float = 1e-7) -> dict[str, float]:
    """Peak counter-rotating stream function in each bottom corner, relative to the primary vortex.

    A positive entry marks a secondary eddy. Wall nodes are excluded because
    the lid row carries the lid velocity.
    """
    if fields.u.shape[0] != 2:
        raise ValueError("secondary vortex detection is 2-D only")
    psi = stream_function(fields.u[0])
    inner = psi[1:-1, 1:-1]
    primary = inner.flat[np.argmax(np.abs(inner))]
    sign = -np.sign(primary)
    nx, ny = psi.shape
    xs, ys = cavity_coordinates(nx), cavity_coordinates(ny)
    out = {}
    for name, mask_x in (("bottom_left", xs < corner), ("bottom_right", xs > 1 - corner)):
        mx = mask_x.copy()
        mx[[0, -1]] = False
        my = (ys < corner)
        my[0] = False
        region = sign * psi[np.ix_(mx, my)]
        peak = float(region.max()) / abs(primary)
        out[name] = peak if peak > rel_tol else 0.0
    out["primary"] = float(primary)
    return out
