"""Post-processing of converged fields: fine-grid interpolation, vortex
centres and file export."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .geometry import CavityMesh
from .solver import FieldState, SolveSummary


@dataclass(frozen=True)
class FineGrid:
    x: np.ndarray  # (R,)
    y: np.ndarray  # (R,)
    values: np.ndarray  # (R, R) indexed [iy, ix]


@dataclass(frozen=True)
class VortexCenter:
    value: float
    x: float
    y: float


def _boundary_trace(mesh: CavityMesh, values: np.ndarray, s: np.ndarray, side: str) -> np.ndarray:
    """Linear interpolation of boundary nodal values along one side."""
    pts = mesh.boundary_nodes
    if side == "bottom":
        mask, coord, at = np.isclose(pts[:, 1], 0.0), pts[:, 0], s
    elif side == "top":
        mask, coord, at = np.isclose(pts[:, 1], 1.0), pts[:, 0], s
    elif side == "left":
        mask, coord, at = np.isclose(pts[:, 0], 0.0), pts[:, 1], s
    else:
        mask, coord, at = np.isclose(pts[:, 0], 1.0), pts[:, 1], s
    order = np.argsort(coord[mask])
    return np.interp(at, coord[mask][order], values[: mesh.n_boundary][mask][order])


def lattice_values(mesh: CavityMesh, field: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nodal field on the ``(K+2) x (K+2)`` lattice that closes the interior grid.

    Returns ``(coords, Z)`` with ``Z[iy, ix]``.
    """
    k = mesh.k_interior
    if mesh.n_interior != k * k:
        raise ValueError("interior nodes do not form a regular K x K lattice")
    coords = np.arange(k + 2) / (k + 1)
    expected = coords[1:-1]
    inner = mesh.interior_nodes
    if not (np.allclose(inner[:k, 0], expected) and np.allclose(inner[::k, 1], expected)):
        raise ValueError("interior nodes do not form a regular K x K lattice")
    Z = np.empty((k + 2, k + 2))
    Z[1:-1, 1:-1] = field[mesh.n_boundary :].reshape(k, k)
    Z[0, :] = _boundary_trace(mesh, field, coords, "bottom")
    Z[-1, :] = _boundary_trace(mesh, field, coords, "top")
    Z[:, 0] = _boundary_trace(mesh, field, coords, "left")
    Z[:, -1] = _boundary_trace(mesh, field, coords, "right")
    return coords, Z


def interpolate_grid(coords: np.ndarray, Z: np.ndarray, resolution: int) -> FineGrid:
    spline = RectBivariateSpline(coords, coords, Z.T, kx=3, ky=3, s=0)
    fine = np.linspace(coords[0], coords[-1], resolution)
    return FineGrid(fine, fine, spline(fine, fine).T)


def interpolate_field(state: FieldState, mesh: CavityMesh, resolution: int = 1000, field: str = "psi") -> FineGrid:
    """Bicubic interpolation of a nodal field onto ``resolution**2`` points."""
    if resolution < 100:
        raise ValueError(f"resolution must be >= 100, got {resolution}")
    coords, Z = lattice_values(mesh, getattr(state, field))
    return interpolate_grid(coords, Z, resolution)


def find_vortex_centers(grid: FineGrid) -> tuple[list[VortexCenter], bool]:
    """Global minimum and maximum of the field, strongest first.

    The flag is true when the field is identically zero.
    """
    v = grid.values
    if not np.all(np.isfinite(v)):
        raise ValueError("fine grid contains non-finite values")
    out = []
    for idx in (np.argmin(v), np.argmax(v)):
        iy, ix = np.unravel_index(idx, v.shape)
        out.append(VortexCenter(float(v[iy, ix]), float(grid.x[ix]), float(grid.y[iy])))
    degenerate = bool(np.all(v == 0.0))
    if degenerate:
        return [out[0]], True
    out.sort(key=lambda c: -abs(c.value))
    return out, False


def summarize(summary: SolveSummary, state: FieldState, mesh: CavityMesh, resolution: int = 1000, split: bool = False) -> SolveSummary:
    """Fill the extremum fields of ``summary`` from the interpolated streamfunction."""
    centers, degenerate = find_vortex_centers(interpolate_field(state, mesh, resolution))
    first = centers[0]
    summary.psi_extremum = first.value
    summary.extremum_location = (first.x, first.y)
    summary.degenerate = degenerate
    if split and len(centers) > 1:
        summary.secondary_extremum = centers[1].value
        summary.secondary_location = (centers[1].x, centers[1].y)
    return summary


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_fields_csv(path: str | Path, points: np.ndarray, psi: np.ndarray, omega: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "psi", "omega"])
        for (x, y), p, o in zip(points, psi, omega):
            w.writerow([_fmt(x), _fmt(y), _fmt(p), _fmt(o)])
    return path


def read_fields_csv(path: str | Path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in ("x", "y", "psi", "omega")}


def _jsonable(obj):
    if is_dataclass(obj):
        obj = asdict(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def summary_dict(summary: SolveSummary, extra: Optional[dict] = None) -> dict:
    data = _jsonable(summary)
    data.pop("history", None)
    if extra:
        data.update(_jsonable(extra))
    return data


def write_contour_svg(path: str | Path, grid: FineGrid, levels: int = 20) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lo, hi = float(grid.values.min()), float(grid.values.max())
    fig, ax = plt.subplots(figsize=(5, 5))
    if hi > lo:
        ax.contour(grid.x, grid.y, grid.values, levels=np.linspace(lo, hi, levels), linewidths=0.6, colors="k")
    ax.set_aspect("equal")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def export(
    out_dir: str | Path,
    state: FieldState,
    summary: SolveSummary,
    mesh: CavityMesh,
    formats: Iterable[str] = ("csv", "json"),
    extra: Optional[dict] = None,
    resolution: int = 1000,
) -> dict[str, Path]:
    """Write fields CSV, summary JSON and optionally an SVG contour plot."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    written: dict[str, Path] = {}
    formats = set(formats)
    if "csv" in formats:
        written["csv"] = write_fields_csv(out_dir / "fields.csv", mesh.points, state.psi, state.omega)
    if "json" in formats:
        path = out_dir / "summary.json"
        path.write_text(json.dumps(summary_dict(summary, extra), indent=2, sort_keys=True))
        written["json"] = path
    if "svg" in formats:
        written["svg"] = write_contour_svg(out_dir / "psi.svg", interpolate_field(state, mesh, resolution))
    return written
