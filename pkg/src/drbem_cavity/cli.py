"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 non-convergence
(artifacts are still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .assembly import AssemblyError, load_or_assemble
from .config import ConfigError, RunConfig, load_config
from .fd_oracle import FdDivergence, fd_solve
from .geometry import CavityMesh, SplitLid, build_square_mesh, dump_mesh_csv
from .post import FineGrid, export, find_vortex_centers, interpolate_grid, summarize, summary_dict
from .solver import FieldState, SolverError, SolveSummary, run
from .verify import all_ok, run_kernel_checks

log = logging.getLogger("drbem_cavity")

OUT_DIR_ENV = "DRBEM_OUT_DIR"
CACHE_DIR_ENV = "DRBEM_CACHE_DIR"

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def resolve_out_dir(cli_value: Optional[str], cfg: Optional[RunConfig] = None) -> Path:
    """``--out-dir`` beats the environment variable, which beats the config."""
    if cli_value:
        return Path(cli_value)
    if os.environ.get(OUT_DIR_ENV):
        return Path(os.environ[OUT_DIR_ENV])
    return Path(cfg.output.dir if cfg is not None else "out")


def _cache_dir(cfg: RunConfig) -> Optional[str]:
    return cfg.output.cache_dir or os.environ.get(CACHE_DIR_ENV) or None


@dataclass
class SolveResult:
    mesh: CavityMesh
    state: FieldState
    summary: SolveSummary


def solve_config(cfg: RunConfig, resolution: Optional[int] = None, progress_every: int = 0) -> SolveResult:
    """Mesh, assembly, iteration and extremum search for one configuration."""
    mesh = build_square_mesh(cfg.mesh.n_boundary, cfg.mesh.k_interior)
    system = load_or_assemble(mesh, cfg.mesh.quadrature_order, _cache_dir(cfg))
    params = cfg.flow_params()
    state, summary = run(mesh, system, params, cfg.solver_config(), progress_every=progress_every)
    summarize(summary, state, mesh, resolution or cfg.output.resolution, split=isinstance(params.lid, SplitLid))
    return SolveResult(mesh, state, summary)


def _run_echo(cfg: RunConfig) -> dict:
    params = cfg.flow_params()
    solver = cfg.solver_config()
    return {
        "config": cfg.model_dump(),
        "alpha": params.alpha,
        "beta": params.beta,
        "dt": solver.dt,
        "n_total": cfg.mesh.n_boundary + cfg.mesh.k_interior**2,
    }


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    out_dir = resolve_out_dir(args.out_dir, cfg)
    res = solve_config(cfg, args.resolution, progress_every=100 if args.verbose else 0)
    written = export(
        out_dir,
        res.state,
        res.summary,
        res.mesh,
        cfg.output.formats,
        extra=_run_echo(cfg),
        resolution=args.resolution or cfg.output.resolution,
    )
    if cfg.output.residual_log:
        from .solver import write_residual_log

        written["residuals"] = write_residual_log(res.summary.history, out_dir / "residuals.csv")
    s = res.summary
    print(
        f"converged={s.converged} iterations={s.iterations} psi_extremum={s.psi_extremum:.6f} "
        f"at ({s.extremum_location[0]:.4f}, {s.extremum_location[1]:.4f})"
    )
    if s.secondary_extremum is not None:
        print(f"secondary_extremum={s.secondary_extremum:.6f} at ({s.secondary_location[0]:.4f}, {s.secondary_location[1]:.4f})")
    for kind, path in written.items():
        print(f"wrote {kind}: {path}")
    return EXIT_OK if s.converged else EXIT_NOT_CONVERGED


# grid study -----------------------------------------------------------------


def _grid_cell(job: tuple[dict, int, int, Optional[int]]) -> dict:
    data, n, k, resolution = job
    data = json.loads(json.dumps(data))
    data["mesh"] = {**data.get("mesh", {}), "n_boundary": n, "k_interior": k}
    row = {"n_boundary": n, "k_interior": k, "psi_max": None, "iterations": None, "converged": False, "error": ""}
    try:
        cfg = RunConfig.model_validate(data)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = solve_config(cfg, resolution)
        row.update(
            psi_max=abs(res.summary.psi_extremum),
            iterations=res.summary.iterations,
            converged=res.summary.converged,
        )
    except Exception as exc:  # a failed cell must not stop the study
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def grid_study(
    cfg: RunConfig,
    n_list: Sequence[int],
    k_list: Sequence[int],
    workers: int = 1,
    resolution: Optional[int] = None,
) -> list[dict]:
    """Runs every (N, K) pair; returns one row per cell in row-major order."""
    if not n_list or not k_list:
        raise ValueError("grid study needs nonempty N and K lists")
    data = cfg.model_dump()
    jobs = [(data, n, k, resolution) for n in n_list for k in k_list]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_grid_cell, jobs))
    else:
        rows = []
        for job in jobs:
            rows.append(_grid_cell(job))
            log.info("cell N=%d K=%d: %s", job[1], job[2], rows[-1]["psi_max"])
    return rows


def diagonal_check(rows: list[dict], n_list, k_list, tol: float) -> Optional[dict]:
    """Difference between the last two diagonal cells ``(n_list[i], k_list[i])``."""
    cells = {(r["n_boundary"], r["k_interior"]): r["psi_max"] for r in rows}
    diag = [cells.get((n, k)) for n, k in zip(n_list, k_list)]
    if len(diag) < 2:
        return None
    # the last pair where both cells finished
    for i in range(len(diag) - 1, 0, -1):
        a, b = diag[i], diag[i - 1]
        if a is not None and b is not None:
            diff = abs(a - b)
            return {
                "cell": [n_list[i], k_list[i]],
                "previous": [n_list[i - 1], k_list[i - 1]],
                "difference": diff,
                "tol": tol,
                "passed": diff < tol,
            }
    return None


def write_grid_table(path: Path, rows: list[dict], n_list, k_list) -> Path:
    cells = {(r["n_boundary"], r["k_interior"]): r["psi_max"] for r in rows}
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N \\ K", *k_list])
        for n in n_list:
            w.writerow([n, *("" if cells[(n, k)] is None else format(cells[(n, k)], ".17g") for k in k_list)])
    return path


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def cmd_grid_study(args) -> int:
    cfg = load_config(args.config)
    out_dir = resolve_out_dir(args.out_dir, cfg)
    rows = grid_study(cfg, args.n_list, args.k_list, args.workers, args.resolution)
    table = write_grid_table(out_dir / "grid_study.csv", rows, args.n_list, args.k_list)
    with (out_dir / "grid_study_cells.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    diag = diagonal_check(rows, args.n_list, args.k_list, args.diag_tol)
    (out_dir / "grid_study.json").write_text(json.dumps({"cells": rows, "diagonal": diag}, indent=2))
    print(table.read_text(), end="")
    if diag is not None:
        print(
            f"diagonal {tuple(diag['cell'])} vs {tuple(diag['previous'])}: difference {diag['difference']:.3e} "
            f"({'pass' if diag['passed'] else 'fail'}, tol {diag['tol']:.0e})"
        )
    failed = [r for r in rows if r["error"] or not r["converged"]]
    for r in failed:
        print(f"cell N={r['n_boundary']} K={r['k_interior']} failed: {r['error'] or 'not converged'}")
    return EXIT_NOT_CONVERGED if failed else EXIT_OK


# oracle comparison ----------------------------------------------------------


def fd_extremum(psi: np.ndarray, resolution: int) -> tuple[float, tuple[float, float]]:
    """Strongest extremum of an FD grid field after bicubic refinement."""
    coords = np.linspace(0.0, 1.0, psi.shape[0])
    grid: FineGrid = interpolate_grid(coords, psi, resolution)
    centers, _ = find_vortex_centers(grid)
    return centers[0].value, (centers[0].x, centers[0].y)


def compare_oracle(cfg: RunConfig, resolution: Optional[int] = None) -> dict:
    resolution = resolution or cfg.output.resolution
    report: dict = {"drbem": None, "fd": None, "relative_difference": None, "errors": []}
    try:
        res = solve_config(cfg, resolution)
        s = res.summary
        report["drbem"] = {
            "psi_extremum": s.psi_extremum,
            "location": list(s.extremum_location),
            "converged": s.converged,
            "iterations": s.iterations,
        }
    except (SolverError, AssemblyError, ValueError) as exc:
        report["errors"].append(f"drbem: {exc}")
    try:
        o = cfg.oracle
        grid, fs = fd_solve(
            cfg.flow_params(), o.n, o.tol, o.max_sweeps, o.sor_factor, o.omega_relax
        )
        value, loc = fd_extremum(grid.psi, resolution)
        report["fd"] = {"psi_extremum": value, "location": list(loc), "converged": fs.converged, "sweeps": fs.sweeps}
    except (FdDivergence, ValueError) as exc:
        report["errors"].append(f"fd: {exc}")
    if report["drbem"] and report["fd"]:
        a, b = abs(report["drbem"]["psi_extremum"]), abs(report["fd"]["psi_extremum"])
        report["relative_difference"] = 0.0 if a == b else abs(a - b) / max(a, b)
    return report


def cmd_compare_oracle(args) -> int:
    cfg = load_config(args.config)
    out_dir = resolve_out_dir(args.out_dir, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = compare_oracle(cfg, args.resolution)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "compare.json").write_text(json.dumps(report, indent=2))
    for name in ("drbem", "fd"):
        r = report[name]
        if r is None:
            print(f"{name}: failed")
        else:
            print(f"{name}: psi_extremum={r['psi_extremum']:.6f} at ({r['location'][0]:.4f}, {r['location'][1]:.4f}) converged={r['converged']}")
    if report["relative_difference"] is not None:
        print(f"relative difference: {report['relative_difference']:.4%}")
    for e in report["errors"]:
        print(e)
    ok = report["drbem"] and report["fd"] and report["drbem"]["converged"] and report["fd"]["converged"]
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


# kernels, mesh ---------------------------------------------------------------


def cmd_kernels_verify(args) -> int:
    checks = run_kernel_checks(fault=args.inject_fault)
    for c in checks:
        print(c.line())
    ok = all_ok(checks)
    print("all checks passed" if ok else "kernel checks FAILED")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_mesh_dump(args) -> int:
    cfg = load_config(args.config) if args.config else None
    n = args.n_boundary or (cfg.mesh.n_boundary if cfg else 320)
    k = args.k_interior or (cfg.mesh.k_interior if cfg else 39)
    mesh = build_square_mesh(n, k)
    path = dump_mesh_csv(mesh, resolve_out_dir(args.out_dir, cfg) / "mesh.csv")
    print(f"wrote {mesh.n_total} nodes to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drbem-cavity", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help=f"output directory (overrides ${OUT_DIR_ENV} and the config)")
    common.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, required=True):
        p.add_argument("--config", required=required, help="JSON run configuration")
        p.add_argument("--resolution", type=int, help="fine-grid points per side for extremum search")

    p = sub.add_parser("solve", parents=[common], help="run one configuration")
    with_config(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("grid-study", parents=[common], help="grid-dependency table over N x K")
    with_config(p)
    p.add_argument("--n-list", type=_int_list, default=[200, 256, 320, 360])
    p.add_argument("--k-list", type=_int_list, default=[24, 31, 39, 44])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--diag-tol", type=float, default=5e-4)
    p.set_defaults(func=cmd_grid_study)

    p = sub.add_parser("compare-oracle", parents=[common], help="DRBEM against the finite-difference solver")
    with_config(p)
    p.set_defaults(func=cmd_compare_oracle)

    p = sub.add_parser("kernels-verify", parents=[common], help="fundamental-solution property checks")
    p.add_argument("--inject-fault", choices=["recurrence"], help="negative control: break the K2 recurrence")
    p.set_defaults(func=cmd_kernels_verify)

    p = sub.add_parser("mesh-dump", parents=[common], help="write node coordinates and tags as CSV")
    p.add_argument("--config")
    p.add_argument("--n-boundary", type=int)
    p.add_argument("--k-interior", type=int)
    p.set_defaults(func=cmd_mesh_dump)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; map to 1
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    if getattr(args, "resolution", None) is not None and args.resolution < 100:
        print("error: --resolution must be >= 100", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (SolverError, AssemblyError, FdDivergence, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
