"""Discretization of the unit-square cavity.

Boundary nodes run counterclockwise from the origin: bottom, right, top, left.
Every node starts the element that leaves it, so element ``e`` joins node ``e``
to node ``(e + 1) % N``.  Interior collocation points sit on a regular
``K x K`` lattice strictly inside the square.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

BOTTOM, RIGHT, TOP, LEFT = "G1", "G2", "G4", "G3"
_SIDES = (BOTTOM, RIGHT, TOP, LEFT)


@dataclass(frozen=True)
class LidSegment:
    velocity: float = 1.0
    slip: float = 0.0

    def __post_init__(self):
        if self.slip < 0:
            raise ValueError(f"slip must be non-negative, got {self.slip}")


@dataclass(frozen=True)
class SingleLid:
    segment: LidSegment = field(default_factory=LidSegment)


@dataclass(frozen=True)
class SplitLid:
    """Lid cut at X = 0.5 into two independently moving parts."""

    left: LidSegment = field(default_factory=lambda: LidSegment(1.0, 0.0))
    right: LidSegment = field(default_factory=lambda: LidSegment(-1.0, 0.0))


LidConfig = Union[SingleLid, SplitLid]


@dataclass(frozen=True, eq=False)
class CavityMesh:
    boundary_nodes: np.ndarray  # (N, 2)
    interior_nodes: np.ndarray  # (L, 2)
    elem_start: np.ndarray  # (N,) node index a of element e
    elem_end: np.ndarray  # (N,) node index b of element e
    normals: np.ndarray  # (N, 2) outward unit normal of element e
    lengths: np.ndarray  # (N,)
    corner_indices: tuple[int, int, int, int]
    side_of_node: tuple[str, ...]
    free_term: np.ndarray  # (M,)
    k_interior: int

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_nodes)

    @property
    def n_interior(self) -> int:
        return len(self.interior_nodes)

    @property
    def n_total(self) -> int:
        return self.n_boundary + self.n_interior

    @property
    def points(self) -> np.ndarray:
        """All collocation points, boundary first then interior."""
        return np.vstack([self.boundary_nodes, self.interior_nodes])

    @property
    def elements(self) -> list[tuple[int, int, np.ndarray, float]]:
        return [
            (int(a), int(b), self.normals[e], float(self.lengths[e]))
            for e, (a, b) in enumerate(zip(self.elem_start, self.elem_end))
        ]

    @property
    def prev_normals(self) -> np.ndarray:
        """Normal of the element arriving at each boundary node."""
        return np.roll(self.normals, 1, axis=0)

    @property
    def next_normals(self) -> np.ndarray:
        """Normal of the element leaving each boundary node."""
        return self.normals

    def is_corner(self, i: int) -> bool:
        return i in self.corner_indices

    def top_nodes(self, include_corners: bool = False) -> np.ndarray:
        idx = [i for i, s in enumerate(self.side_of_node) if s == TOP and not self.is_corner(i)]
        if include_corners:
            idx += [self.corner_indices[2], self.corner_indices[3]]
        return np.array(sorted(idx), dtype=int)


def build_square_mesh(n_boundary: int, k_interior: int) -> CavityMesh:
    if n_boundary < 8 or n_boundary % 4:
        raise ValueError(f"n_boundary must be >= 8 and divisible by 4, got {n_boundary}")
    if k_interior < 2:
        raise ValueError(f"k_interior must be >= 2, got {k_interior}")

    per_side = n_boundary // 4
    t = np.arange(per_side) / per_side
    zeros, ones = np.zeros(per_side), np.ones(per_side)
    sides = [
        np.column_stack([t, zeros]),  # bottom, left to right
        np.column_stack([ones, t]),  # right, upward
        np.column_stack([1.0 - t, ones]),  # top, right to left
        np.column_stack([zeros, 1.0 - t]),  # left, downward
    ]
    boundary = np.vstack(sides)
    side_tag = tuple(s for s in _SIDES for _ in range(per_side))
    corners = (0, per_side, 2 * per_side, 3 * per_side)

    start = np.arange(n_boundary)
    end = (start + 1) % n_boundary
    d = boundary[end] - boundary[start]
    lengths = np.hypot(d[:, 0], d[:, 1])
    # counterclockwise traversal: outward normal is the tangent rotated by -90 degrees
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]

    g = np.arange(1, k_interior + 1) / (k_interior + 1)
    gx, gy = np.meshgrid(g, g, indexing="xy")
    interior = np.column_stack([gx.ravel(), gy.ravel()])

    free_term = np.concatenate([np.full(n_boundary, 0.5), np.ones(len(interior))])
    free_term[list(corners)] = 0.25

    return CavityMesh(
        boundary_nodes=boundary,
        interior_nodes=interior,
        elem_start=start,
        elem_end=end,
        normals=normals,
        lengths=lengths,
        corner_indices=corners,
        side_of_node=side_tag,
        free_term=free_term,
        k_interior=k_interior,
    )


def classify_lid_segments(mesh: CavityMesh, lid: LidConfig, leaky: bool = False) -> dict[int, LidSegment]:
    """Map each driven top-wall node to the lid segment that moves it.

    Lid corners are left out unless ``leaky`` is set; they then carry the lid
    value of the segment they touch.  The split point X = 0.5 belongs to the
    left segment.
    """
    nodes = mesh.top_nodes(include_corners=leaky)
    if isinstance(lid, SingleLid):
        return {int(i): lid.segment for i in nodes}
    out = {}
    for i in nodes:
        x = mesh.boundary_nodes[i, 0]
        out[int(i)] = lid.left if x <= 0.5 + 1e-12 else lid.right
    return out


def split_point_nodes(mesh: CavityMesh, lid: LidConfig) -> np.ndarray:
    """Top-wall nodes sitting exactly on the split of a ``SplitLid``."""
    if not isinstance(lid, SplitLid):
        return np.zeros(0, dtype=int)
    nodes = mesh.top_nodes(include_corners=False)
    return nodes[np.abs(mesh.boundary_nodes[nodes, 0] - 0.5) < 1e-12]


def dump_mesh_csv(mesh: CavityMesh, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "side", "free_term"])
        for i, (x, y) in enumerate(mesh.points):
            side = mesh.side_of_node[i] if i < mesh.n_boundary else "interior"
            w.writerow([i, repr(float(x)), repr(float(y)), side, repr(float(mesh.free_term[i]))])
    return path
