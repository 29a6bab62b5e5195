"""Command-line driver: run cases, compare field files, report circuit resources."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import benchmarks as bm
from .classical import BoundarySpec, InstabilityError, MacroFields, Mesh, apply_dirichlet, lks_step, residual
from .config import CaseConfig, ConfigError, parse_config
from .lattice import check_mach, make_velocity_set
from .pipeline import qlks_step, resource_estimate

logger = logging.getLogger("qlks")

EXIT_OK, EXIT_CONFIG, EXIT_INSTABILITY, EXIT_TOLERANCE = 0, 2, 3, 4
FIELD_COLUMNS = ("x", "y", "z", "rho", "u", "v", "w")


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def metadata(cfg: CaseConfig, backend: str) -> dict:
    return {"config_hash": cfg.config_hash(), "A": fmt(cfg.a_coeff), "nu": fmt(cfg.nu),
            "L_convention": cfg.l_convention, "backend": backend}


def _header(meta: dict) -> str:
    return "".join(f"# {k}: {v}\n" for k, v in meta.items())


def write_csv(path: Path, meta: dict, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_header(meta))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_json(path: Path, meta: dict, payload: dict) -> None:
    path.write_text(json.dumps({"metadata": meta, **payload}, sort_keys=True, indent=2) + "\n")


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Metadata header, column names and raw string rows of an output CSV."""
    meta, body = {}, []
    with open(path, newline="") as fh:
        for ln in fh:
            if ln.startswith("#"):
                k, _, v = ln[1:].partition(":")
                meta[k.strip()] = v.strip()
            elif ln.strip():
                body.append(ln)
    rows = list(csv.reader(body))
    if not rows:
        raise ValueError(f"{path}: no header row")
    return meta, rows[0], rows[1:]


# -- case setup -------------------------------------------------------------------

def node_coords(cfg: CaseConfig) -> list[np.ndarray]:
    if cfg.is_cavity:
        return [bm.cavity_coordinates(n) for n in cfg.mesh]
    return [bm.node_coordinates(n, n / 2.0) for n in cfg.mesh]


def analytic_case(cfg: CaseConfig) -> bm.AnalyticCase:
    kind = bm.TG2D if cfg.case == "tg2d" else bm.TG3D
    return bm.AnalyticCase(kind, cfg.length, cfg.u0, cfg.re, cfg.rho0)


def boundary(cfg: CaseConfig) -> BoundarySpec:
    if not cfg.is_cavity:
        return BoundarySpec()
    return BoundarySpec("cavity", (cfg.u0,) + (0.0,) * (cfg.dimension - 1))


def initial_state(cfg: CaseConfig) -> MacroFields:
    mesh = Mesh.from_shape(cfg.mesh)
    if cfg.is_cavity:
        return apply_dirichlet(MacroFields.uniform(mesh, cfg.rho0), boundary(cfg))
    return bm.initial_fields(analytic_case(cfg), mesh, cfg.density_init)


def field_rows(cfg: CaseConfig, fields: MacroFields):
    axes = node_coords(cfg)
    grids = np.meshgrid(*axes, indexing="ij")
    cols = [g.ravel(order="F") for g in grids]
    if cfg.dimension == 2:
        cols.append(np.zeros_like(cols[0]))
    cols.append(fields.rho.ravel(order="F"))
    cols.extend(c.ravel(order="F") for c in fields.u)
    if cfg.dimension == 2:
        cols.append(np.zeros_like(cols[0]))
    return zip(*cols)


# -- run ---------------------------------------------------------------------------

def _steppers(cfg: CaseConfig):
    names = ["classical", "quantum"] if cfg.backend == "both" else [cfg.backend]
    return {n: (lks_step if n == "classical" else qlks_step) for n in names}


def simulate(cfg: CaseConfig, log=logger):
    """Advance every requested backend in lockstep; returns per-backend state and the discrepancy trace."""
    vset = make_velocity_set(cfg.lattice)
    params = cfg.flow_params()
    bc = boundary(cfg)
    start = initial_state(cfg)
    check_mach(start.u, vset.cs2)
    steppers = _steppers(cfg)
    state = {n: start.copy() for n in steppers}
    residuals = {n: [] for n in steppers}
    snapshots = {n: {} for n in steppers}
    reports = {}
    discrepancy = []
    for step in range(1, cfg.n_steps + 1):
        for name, stepper in steppers.items():
            try:
                out = stepper(state[name], vset, params, bc)
            except InstabilityError as exc:
                exc.step = step
                raise
            if isinstance(out, tuple):
                out, reports[name] = out
            residuals[name].append(residual(out, state[name], cfg.u0))
            state[name] = out
            if cfg.snapshot_every and step % cfg.snapshot_every == 0:
                snapshots[name][step] = out.copy()
        if len(state) == 2:
            a, b = state["classical"], state["quantum"]
            discrepancy.append(max(float(np.max(np.abs(a.rho - b.rho))), float(np.max(np.abs(a.u - b.u)))))
        if step % 1000 == 0:
            log.info("step %d residual %.3e", step, residuals[next(iter(steppers))][-1])
        if cfg.threshold is not None and all(r[-1] < cfg.threshold for r in residuals.values()):
            log.info("converged after %d steps", step)
            break
    return state, residuals, snapshots, reports, discrepancy


def run_case(cfg: CaseConfig, self_check: bool = False, log=logger) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = cfg.echo()
    log.info("case %s mesh %s nu=%.17g A=%.17g steps=%d backend=%s", cfg.case, list(cfg.mesh),
             cfg.nu, cfg.a_coeff, cfg.n_steps, cfg.backend)
    write_json(out / "config.json", metadata(cfg, cfg.backend), {"config": echo})
    try:
        state, residuals, snapshots, reports, discrepancy = simulate(cfg, log)
    except InstabilityError as exc:
        log.error("instability at step %s node %s: %s", exc.step, exc.node, exc)
        return EXIT_INSTABILITY

    failures = []
    tol = cfg.tolerances
    error_rows = []
    for name, fields in state.items():
        meta = metadata(cfg, name)
        steps_done = len(residuals[name])
        write_csv(out / f"fields_{name}.csv", {**meta, "step": steps_done}, FIELD_COLUMNS, field_rows(cfg, fields))
        for step, snap in snapshots[name].items():
            write_csv(out / f"fields_{name}_step{step:07d}.csv", {**meta, "step": step}, FIELD_COLUMNS,
                      field_rows(cfg, snap))
        write_csv(out / f"residuals_{name}.csv", meta, ("step", "residual"),
                  ((i + 1, r) for i, r in enumerate(residuals[name])))
        if residuals[name] and "residual_max" in tol and residuals[name][-1] > tol["residual_max"]:
            failures.append(f"{name}: final residual {residuals[name][-1]:.3e} > {tol['residual_max']:.3e}")
        if name in reports:
            write_json(out / f"step_report_{name}.json", meta, {"last_step": reports[name].to_dict()})
        if not cfg.is_cavity:
            rep = bm.tg_error_report(fields, analytic_case(cfg), steps_done)
            error_rows.append((name, rep))
            failures += _check_l2(name, rep, tol)
        else:
            failures += _write_centerlines(cfg, name, fields, out, meta, tol)

    if error_rows:
        comps = list(error_rows[0][1].l2)
        write_csv(out / "errors.csv", metadata(cfg, cfg.backend),
                  ("mesh", "u0", "backend") + tuple(f"l2_{c}" for c in comps),
                  ((cfg.mesh[0], cfg.u0, name, *(rep.l2[c] for c in comps)) for name, rep in error_rows))
        for name, rep in error_rows:
            log.info("%s L2 errors: %s", name, ", ".join(f"{c}={v:.4e}" for c, v in rep.l2.items()))

    if discrepancy:
        write_csv(out / "discrepancy.csv", metadata(cfg, "both"), ("step", "max_abs"),
                  ((i + 1, d) for i, d in enumerate(discrepancy)))
        limit = tol.get("discrepancy", 1e-10)
        worst = max(discrepancy)
        log.info("max backend discrepancy %.3e", worst)
        if worst > limit:
            failures.append(f"backend discrepancy {worst:.3e} > {limit:.3e}")

    if all(n & (n - 1) == 0 for n in cfg.mesh):
        vset = make_velocity_set(cfg.lattice)
        write_json(out / "resources.json", metadata(cfg, cfg.backend),
                   {"resources": resource_estimate(vset, Mesh.from_shape(cfg.mesh))})

    if self_check and failures:
        for f in failures:
            log.error("self-check failed: %s", f)
        return EXIT_TOLERANCE
    if self_check:
        log.info("self-check passed")
    return EXIT_OK


def _check_l2(name: str, rep: bm.ErrorReport, tol: dict) -> list[str]:
    fails = []
    for comp, err in rep.l2.items():
        if comp == "w":
            continue
        if "l2_max" in tol and err > tol["l2_max"]:
            fails.append(f"{name} l2_{comp} {err:.4e} > {tol['l2_max']:.4e}")
        if "l2_expected" in tol:
            rel = abs(err - tol["l2_expected"]) / tol["l2_expected"]
            if rel > tol.get("l2_rtol", 0.05):
                fails.append(f"{name} l2_{comp} {err:.4e} is {rel:.1%} from {tol['l2_expected']:.4e}")
    return fails


def _write_centerlines(cfg, name, fields, out, meta, tol) -> list[str]:
    lines = bm.centerlines(fields)
    rows = []
    for q, (coords, vals) in lines.items():
        rows.extend((q, c, v / cfg.u0) for c, v in zip(coords, vals))
    write_csv(out / f"centerline_{name}.csv", meta, ("quantity", "coord", "value_over_u0"), rows)
    fails = []
    comp_rows = []
    for q, (coords, vals) in lines.items():
        try:
            ref = bm.load_reference("Ghia", int(round(cfg.re)), q)
        except FileNotFoundError:
            continue
        dev = bm.compare_profile(coords, vals, ref, cfg.u0)
        comp_rows.append((q, ref.source, int(ref.re), dev["max"], dev["rms"]))
        if "profile_rms_max" in tol and dev["rms"] > tol["profile_rms_max"]:
            fails.append(f"{name} {q}-centerline RMS {dev['rms']:.3e} > {tol['profile_rms_max']:.3e}")
    if comp_rows:
        write_csv(out / f"profile_deviation_{name}.csv", meta, ("quantity", "source", "re", "max", "rms"), comp_rows)
    return fails


# -- compare / resources ------------------------------------------------------------

def compare_files(a, b) -> dict[str, float]:
    _, cols_a, ra = read_csv(a)
    _, cols_b, rb = read_csv(b)
    da = np.array(ra, dtype=float).reshape(len(ra), len(cols_a))
    db = np.array(rb, dtype=float).reshape(len(rb), len(cols_b))
    if cols_a != cols_b or da.shape != db.shape:
        raise ValueError("field files have different layouts")
    ncoord = 3 if tuple(cols_a[:3]) == ("x", "y", "z") else 0
    if not np.array_equal(da[:, :ncoord], db[:, :ncoord]):
        raise ValueError("field files have different node coordinates")
    d = da[:, ncoord:] - db[:, ncoord:]
    return {"max": float(np.max(np.abs(d))) if d.size else 0.0,
            "rms": float(np.sqrt(np.mean(d * d))) if d.size else 0.0}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlks", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a case from a TOML config")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--backend", choices=("classical", "quantum", "both"))
    r.add_argument("--out", type=str)
    g = r.add_mutually_exclusive_group()
    g.add_argument("--steps", type=int)
    g.add_argument("--tstar", type=float)
    r.add_argument("--quiet", action="store_true")
    r.add_argument("--self-check", action="store_true", help="exit 4 when a configured tolerance is exceeded")

    c = sub.add_parser("compare", help="max and RMS difference of two field files")
    c.add_argument("a", type=Path)
    c.add_argument("b", type=Path)
    c.add_argument("--tolerance", type=float, help="with --self-check, the allowed max difference")
    c.add_argument("--self-check", action="store_true")
    c.add_argument("--quiet", action="store_true")

    s = sub.add_parser("resources", help="circuit resource report without running")
    s.add_argument("--config", type=Path)
    s.add_argument("--lattice", choices=("D2Q9", "D3Q27"))
    s.add_argument("--mesh", type=int, nargs="+")
    s.add_argument("--out", type=str)
    s.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr, force=True)
    try:
        if args.command == "run":
            cfg = parse_config(args.config).with_overrides(backend=args.backend, out=args.out,
                                                           steps=args.steps, tstar=args.tstar)
            if not args.quiet:
                print(json.dumps(cfg.echo(), sort_keys=True, indent=2))
            return run_case(cfg, self_check=args.self_check)
        if args.command == "compare":
            diff = compare_files(args.a, args.b)
            if not args.quiet:
                print(json.dumps(diff, sort_keys=True))
            if args.self_check and args.tolerance is not None and diff["max"] > args.tolerance:
                logger.error("max difference %.3e exceeds %.3e", diff["max"], args.tolerance)
                return EXIT_TOLERANCE
            return EXIT_OK
        return _resources(args)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        logger.error("error: %s", exc)
        return EXIT_CONFIG


def _resources(args) -> int:
    if args.config is not None:
        cfg = parse_config(args.config)
        lattice, mesh, meta = cfg.lattice, cfg.mesh, metadata(cfg, cfg.backend)
    else:
        if args.lattice is None or args.mesh is None:
            raise ConfigError("mesh", "give --config, or both --lattice and --mesh")
        dim = 2 if args.lattice == "D2Q9" else 3
        mesh = tuple(args.mesh * dim if len(args.mesh) == 1 else args.mesh)
        if len(mesh) != dim:
            raise ConfigError("mesh", f"{args.lattice} needs {dim} sizes")
        lattice, meta = args.lattice, {"backend": "quantum"}
    try:
        report = resource_estimate(make_velocity_set(lattice), Mesh.from_shape(mesh))
    except ValueError as exc:
        raise ConfigError("mesh", str(exc)) from None
    if not args.quiet:
        print(json.dumps(report, sort_keys=True, indent=2))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(Path(args.out) / "resources.json", meta, {"resources": report})
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
