"""TOML case configuration with field-level validation."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .lattice import FlowParams, a_from_viscosity

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

CASES = ("tg2d", "tg3d", "cavity2d", "cavity3d")
BACKENDS = ("classical", "quantum", "both")
TOLERANCE_KEYS = ("discrepancy", "l2_max", "l2_expected", "l2_rtol", "profile_rms_max", "residual_max")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class CaseConfig:
    case: str
    mesh: tuple[int, ...]
    re: float
    u0: float
    rho0: float = 1.0
    steps: int | None = None
    tstar: float | None = None
    threshold: float | None = None
    backend: str = "classical"
    out: str = "out"
    density_init: str = "uniform"
    snapshot_every: int = 0
    tolerances: dict = field(default_factory=dict)

    @property
    def lattice(self) -> str:
        return "D2Q9" if self.case.endswith("2d") else "D3Q27"

    @property
    def dimension(self) -> int:
        return 2 if self.case.endswith("2d") else 3

    @property
    def is_cavity(self) -> bool:
        return self.case.startswith("cavity")

    @property
    def length(self) -> float:
        """Taylor-Green uses the half box ``N/2``; the cavity uses its full width ``N``."""
        return float(self.mesh[0]) if self.is_cavity else self.mesh[0] / 2.0

    @property
    def l_convention(self) -> str:
        return "L=N" if self.is_cavity else "L=N/2"

    @property
    def nu(self) -> float:
        return self.u0 * self.length / self.re

    @property
    def a_coeff(self) -> float:
        return a_from_viscosity(self.nu)

    @property
    def n_steps(self) -> int:
        if self.steps is not None:
            return self.steps
        return int(round(self.tstar * self.length / self.u0))

    def flow_params(self) -> FlowParams:
        return FlowParams(u0=self.u0, nu=self.nu, length=self.length, rho0=self.rho0, re=self.re)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mesh"] = list(self.mesh)
        return d

    def config_hash(self) -> str:
        """Hash of everything that affects results; the output directory is left out."""
        blob = json.dumps(self._physics(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def _physics(self) -> dict:
        d = self.to_dict()
        del d["out"]
        return d

    def echo(self) -> dict:
        return {**self._physics(), "lattice": self.lattice, "L": self.length, "L_convention": self.l_convention,
                "nu": self.nu, "A": self.a_coeff, "n_steps": self.n_steps, "config_hash": self.config_hash()}

    def with_overrides(self, **kw) -> "CaseConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "steps" in kw:
            kw["tstar"] = None
        elif "tstar" in kw:
            kw["steps"] = None
        return validate(replace(self, **kw))


def _number(d: dict, key: str, kind=float, required: bool = True, positive: bool = True):
    if key not in d:
        if required:
            raise ConfigError(key, "missing required field")
        return None
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(key, f"expected a number, got {val!r}")
    if kind is int and int(val) != val:
        raise ConfigError(key, f"expected an integer, got {val!r}")
    if positive and val <= 0:
        raise ConfigError(key, f"must be positive, got {val!r}")
    return kind(val)


def config_from_dict(d: dict) -> CaseConfig:
    known = {"case", "mesh", "re", "u0", "rho0", "steps", "tstar", "threshold", "backend", "out",
             "density_init", "snapshot_every", "tolerances"}
    for key in d:
        if key not in known:
            raise ConfigError(key, "unknown field")
    case = d.get("case")
    if case is None:
        raise ConfigError("case", "missing required field")
    if case not in CASES:
        raise ConfigError("case", f"expected one of {CASES}, got {case!r}")
    dim = 2 if case.endswith("2d") else 3
    if "mesh" not in d:
        raise ConfigError("mesh", "missing required field")
    mesh = d["mesh"]
    if isinstance(mesh, int) and not isinstance(mesh, bool):
        mesh = [mesh] * dim
    if not isinstance(mesh, list) or len(mesh) != dim or not all(
            isinstance(n, int) and not isinstance(n, bool) for n in mesh):
        raise ConfigError("mesh", f"expected an integer or {dim} integers, got {d['mesh']!r}")
    tol = d.get("tolerances", {})
    if not isinstance(tol, dict):
        raise ConfigError("tolerances", "expected a table")
    for key, val in tol.items():
        if key not in TOLERANCE_KEYS:
            raise ConfigError(f"tolerances.{key}", "unknown tolerance")
        if isinstance(val, bool) or not isinstance(val, (int, float)) or val < 0:
            raise ConfigError(f"tolerances.{key}", f"expected a non-negative number, got {val!r}")
    cfg = CaseConfig(
        case=case,
        mesh=tuple(mesh),
        re=_number(d, "re"),
        u0=_number(d, "u0"),
        rho0=_number(d, "rho0", required=False) or 1.0,
        steps=_number(d, "steps", int, required=False),
        tstar=_number(d, "tstar", required=False),
        threshold=_number(d, "threshold", required=False),
        backend=d.get("backend", "classical"),
        out=str(d.get("out", "out")),
        density_init=d.get("density_init", "uniform"),
        snapshot_every=_number(d, "snapshot_every", int, required=False, positive=False) or 0,
        tolerances={k: float(v) for k, v in sorted(tol.items())},
    )
    return validate(cfg)


def validate(cfg: CaseConfig) -> CaseConfig:
    if cfg.backend not in BACKENDS:
        raise ConfigError("backend", f"expected one of {BACKENDS}, got {cfg.backend!r}")
    if cfg.density_init not in ("uniform", "analytic"):
        raise ConfigError("density_init", f"expected 'uniform' or 'analytic', got {cfg.density_init!r}")
    if cfg.density_init == "analytic" and cfg.is_cavity:
        raise ConfigError("density_init", "analytic density exists only for Taylor-Green cases")
    if any(n < 3 for n in cfg.mesh):
        raise ConfigError("mesh", "need at least 3 nodes per axis")
    if cfg.backend != "classical" and any(n & (n - 1) for n in cfg.mesh):
        raise ConfigError("mesh", f"quantum backend needs power-of-two sizes, got {list(cfg.mesh)}")
    if (cfg.steps is None) == (cfg.tstar is None):
        raise ConfigError("steps", "give exactly one of steps or tstar")
    if cfg.snapshot_every < 0:
        raise ConfigError("snapshot_every", "must be non-negative")
    try:
        cfg.flow_params()
    except ValueError as exc:
        raise ConfigError("re", str(exc)) from None
    return cfg


def parse_config(path) -> CaseConfig:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {p}: {exc.strerror}") from None
    try:
        data = tomllib.loads(raw.decode())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError("config", f"invalid TOML: {exc}") from None
    return config_from_dict(data)
