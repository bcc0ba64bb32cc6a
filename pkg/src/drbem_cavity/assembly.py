"""Dense DRBEM matrices for the cavity mesh.

Collocation points are ordered boundary first, then interior.  Flux unknowns
live on boundary nodes only, so ``G`` and ``Q_hat`` have ``N`` columns/rows.
At a corner the two incident elements have different normals; the particular
solution flux is taken with each element's own normal, which is why ``G`` is
also kept split into the parts coming from the arriving and leaving element.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .geometry import CavityMesh

log = logging.getLogger(__name__)

_TWO_PI = 2.0 * math.pi


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DrbemSystem:
    H: np.ndarray
    G: np.ndarray
    F: np.ndarray
    F_inv: np.ndarray
    Fx: np.ndarray
    Fy: np.ndarray
    U_hat: np.ndarray
    Q_hat: np.ndarray  # (N, M) with the leaving element's normal
    S_mat: np.ndarray
    G_prev: np.ndarray  # part of G from the element arriving at each node
    G_next: np.ndarray  # part of G from the element leaving each node
    Q_hat_prev: np.ndarray  # (N, M) with the arriving element's normal
    f_condition: float
    n_boundary: int
    quadrature_order: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_total(self) -> int:
        return self.H.shape[0]

    @property
    def Dx(self) -> np.ndarray:
        """Collocation X-derivative operator ``Fx F^-1``."""
        if "Dx" not in self._cache:
            self._cache["Dx"] = self.Fx @ self.F_inv
        return self._cache["Dx"]

    @property
    def Dy(self) -> np.ndarray:
        if "Dy" not in self._cache:
            self._cache["Dy"] = self.Fy @ self.F_inv
        return self._cache["Dy"]


def _element_geometry(mesh: CavityMesh):
    xa = mesh.boundary_nodes[mesh.elem_start]
    xb = mesh.boundary_nodes[mesh.elem_end]
    return xa, xb, mesh.normals, mesh.lengths


def _integrate_rows(points, xa, xb, normals, lengths, order, subdivisions=1):
    """Regular quadrature of u* and q* against both linear shape functions.

    Returns ``(ga, gb, ha, hb)``, each of shape (len(points), n_elements):
    contributions to the start node (a) and the end node (b) of every element.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    # split [-1, 1] into equal pieces, map nodes to element coordinate s in [0, 1]
    edges = np.linspace(0.0, 1.0, subdivisions + 1)
    s = ((edges[:-1, None] + edges[1:, None]) + (edges[1:, None] - edges[:-1, None]) * t) / 2.0
    ws = (w[None, :] * (edges[1:, None] - edges[:-1, None]) / 2.0).ravel()
    s = s.ravel()

    q = xa[:, None, :] + s[None, :, None] * (xb - xa)[:, None, :]  # (E, P, 2)
    r = q[None, :, :, :] - points[:, None, None, :]  # (I, E, P, 2)
    r2 = np.einsum("iepk,iepk->iep", r, r)
    ustar = -0.5 * np.log(r2) / _TWO_PI
    qstar = -np.einsum("iepk,ek->iep", r, normals) / (_TWO_PI * r2)
    jac = lengths[None, :, None] * ws[None, None, :]
    phi_a = (1.0 - s)[None, None, :]
    phi_b = s[None, None, :]
    ga = np.sum(ustar * phi_a * jac, axis=2)
    gb = np.sum(ustar * phi_b * jac, axis=2)
    ha = np.sum(qstar * phi_a * jac, axis=2)
    hb = np.sum(qstar * phi_b * jac, axis=2)
    return ga, gb, ha, hb


def singular_g_endpoint(length: float) -> tuple[float, float]:
    """Exact integrals of u* times the two shape functions when the source
    sits at the start node of a straight element of the given length.

    Returns (same-node weight, far-node weight).
    """
    lnl = math.log(length)
    return length * (1.5 - lnl) / (2.0 * _TWO_PI), length * (0.5 - lnl) / (2.0 * _TWO_PI)


def _near_pairs(points, xa, xb, lengths, factor):
    d = xb - xa
    rel = points[:, None, :] - xa[None, :, :]
    s = np.clip(np.einsum("iek,ek->ie", rel, d) / lengths[None, :] ** 2, 0.0, 1.0)
    closest = xa[None, :, :] + s[..., None] * d[None, :, :]
    dist = np.linalg.norm(points[:, None, :] - closest, axis=2)
    return dist < factor * lengths[None, :]


def assemble_H_G(
    mesh: CavityMesh,
    quadrature_order: int = 8,
    near_factor: float = 2.0,
    near_subdivisions: int = 8,
    chunk: int = 256,
):
    """Boundary integral matrices.

    Returns ``(H, G, G_prev, G_next)``; ``G = G_prev + G_next``.  Elements
    closer than ``near_factor`` element lengths to a collocation point are
    integrated on ``near_subdivisions`` sub-intervals.
    """
    if quadrature_order < 2:
        raise ValueError("quadrature_order must be >= 2")
    pts = mesh.points
    n, m = mesh.n_boundary, mesh.n_total
    xa, xb, normals, lengths = _element_geometry(mesh)
    ga = np.empty((m, n))
    gb = np.empty((m, n))
    ha = np.empty((m, n))
    hb = np.empty((m, n))
    for lo in range(0, m, chunk):
        sl = slice(lo, min(lo + chunk, m))
        ga[sl], gb[sl], ha[sl], hb[sl] = _integrate_rows(pts[sl], xa, xb, normals, lengths, quadrature_order)

    near = _near_pairs(pts, xa, xb, lengths, near_factor)
    # nodes of the element itself are handled analytically below
    e_idx = np.arange(n)
    near[mesh.elem_start, e_idx] = False
    near[mesh.elem_end, e_idx] = False
    for e in np.flatnonzero(near.any(axis=0)):
        rows = np.flatnonzero(near[:, e])
        sl = slice(e, e + 1)
        res = _integrate_rows(
            pts[rows], xa[sl], xb[sl], normals[sl], lengths[sl], quadrature_order, near_subdivisions
        )
        ga[rows, e], gb[rows, e], ha[rows, e], hb[rows, e] = (c[:, 0] for c in res)

    # source on the element: q* vanishes on a straight element, u* is log-singular
    for e in range(n):
        a, b = mesh.elem_start[e], mesh.elem_end[e]
        same, far = singular_g_endpoint(lengths[e])
        ga[a, e], gb[a, e] = same, far
        ga[b, e], gb[b, e] = far, same
        ha[a, e] = hb[a, e] = ha[b, e] = hb[b, e] = 0.0

    G_next = ga  # element e leaves node e
    G_prev = np.roll(gb, 1, axis=1)  # element e-1 arrives at node e
    G = G_next + G_prev
    H = np.zeros((m, m))
    H[:, :n] = ha + np.roll(hb, 1, axis=1)
    H[np.arange(m), np.arange(m)] += mesh.free_term
    return H, G, G_prev, G_next


def _pairwise(points):
    diff = points[:, None, :] - points[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return diff, r


def assemble_F_and_derivatives(mesh: CavityMesh, rcond_min: float = 1e-14):
    """RBF matrix for f = r, its inverse and derivative matrices.

    Returns ``(F, F_inv, Fx, Fy, condition)``.
    """
    pts = mesh.points
    diff, r = _pairwise(pts)
    m = len(pts)
    off = r + np.eye(m)
    if np.any(off <= 0):
        i, j = np.unravel_index(np.argmin(off), off.shape)
        raise AssemblyError(f"coincident collocation points {i} and {j}")
    F = r
    with np.errstate(invalid="ignore", divide="ignore"):
        Fx = np.where(r > 0, diff[..., 0] / r, 0.0)
        Fy = np.where(r > 0, diff[..., 1] / r, 0.0)
    lu, piv = sla.lu_factor(F)
    anorm = np.linalg.norm(F, 1)
    rcond = _lu_rcond(lu, anorm)
    if rcond < rcond_min:
        i, j = np.unravel_index(np.argmin(off), off.shape)
        raise AssemblyError(
            f"F is numerically singular (rcond={rcond:.3e}); closest nodes {i} and {j} "
            f"at distance {off[i, j]:.3e}"
        )
    F_inv = sla.lu_solve((lu, piv), np.eye(m))
    return F, F_inv, Fx, Fy, 1.0 / rcond


def _lu_rcond(lu, anorm):
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0:
        raise AssemblyError(f"gecon failed with info={info}")
    return float(rcond)


def assemble_particular_solutions(mesh: CavityMesh):
    """Particular solutions u^ = r^3/9 and their normal derivatives.

    Returns ``(U_hat, Q_hat, Q_hat_prev)``: ``Q_hat`` uses the normal of the
    element leaving each boundary node, ``Q_hat_prev`` the arriving one.  They
    differ only at corners.
    """
    pts = mesh.points
    diff, r = _pairwise(pts)
    n = mesh.n_boundary
    U_hat = r**3 / 9.0
    # grad(r^3/9) at x_i w.r.t. x_i = (r/3) (x_i - x_j)
    gx = diff[:n, :, 0] * r[:n] / 3.0
    gy = diff[:n, :, 1] * r[:n] / 3.0
    nn, pn = mesh.next_normals, mesh.prev_normals
    Q_hat = gx * nn[:, :1] + gy * nn[:, 1:]
    Q_hat_prev = gx * pn[:, :1] + gy * pn[:, 1:]
    return U_hat, Q_hat, Q_hat_prev


def assemble_S(H, G, U_hat, Q_hat, F_inv, G_prev=None, Q_hat_prev=None):
    """Dual reciprocity matrix ``(H U^ - G Q^) F^-1``.

    With ``G_prev``/``Q_hat_prev`` supplied, ``G Q^`` is formed element-wise
    as ``G_prev Q^_prev + (G - G_prev) Q^`` so corner fluxes use the right
    normal on each side.
    """
    m = H.shape[0]
    n = G.shape[1]
    if H.shape != (m, m) or U_hat.shape != (m, m) or F_inv.shape != (m, m):
        raise ValueError("H, U_hat and F_inv must all be M x M")
    if G.shape[0] != m or Q_hat.shape != (n, m):
        raise ValueError(f"expected G of shape ({m}, n) and Q_hat of shape (n, {m})")
    if G_prev is None:
        GQ = G @ Q_hat
    else:
        GQ = G_prev @ Q_hat_prev + (G - G_prev) @ Q_hat
    return (H @ U_hat - GQ) @ F_inv


def assemble_system(mesh: CavityMesh, quadrature_order: int = 8) -> DrbemSystem:
    H, G, G_prev, G_next = assemble_H_G(mesh, quadrature_order)
    F, F_inv, Fx, Fy, cond = assemble_F_and_derivatives(mesh)
    U_hat, Q_hat, Q_hat_prev = assemble_particular_solutions(mesh)
    S = assemble_S(H, G, U_hat, Q_hat, F_inv, G_prev, Q_hat_prev)
    log.debug("assembled DRBEM system M=%d, cond(F)~%.3e", mesh.n_total, cond)
    return DrbemSystem(
        H=H, G=G, F=F, F_inv=F_inv, Fx=Fx, Fy=Fy, U_hat=U_hat, Q_hat=Q_hat, S_mat=S,
        G_prev=G_prev, G_next=G_next, Q_hat_prev=Q_hat_prev, f_condition=cond,
        n_boundary=mesh.n_boundary, quadrature_order=quadrature_order,
    )


def system_cache_key(n_boundary: int, k_interior: int, quadrature_order: int) -> str:
    raw = f"drbem-v1:{n_boundary}:{k_interior}:{quadrature_order}".encode()
    return hashlib.sha256(raw).hexdigest()[:16]


_ARRAYS = ("H", "G", "F", "F_inv", "Fx", "Fy", "U_hat", "Q_hat", "S_mat", "G_prev", "G_next", "Q_hat_prev")


def save_system(system: DrbemSystem, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        **{k: getattr(system, k) for k in _ARRAYS},
        meta=np.array([system.f_condition, system.n_boundary, system.quadrature_order]),
    )
    return path


def load_system(path: str | Path) -> DrbemSystem:
    with np.load(path) as data:
        arrays = {k: data[k] for k in _ARRAYS}
        cond, n, order = data["meta"]
    return DrbemSystem(**arrays, f_condition=float(cond), n_boundary=int(n), quadrature_order=int(order))


def load_or_assemble(mesh: CavityMesh, quadrature_order: int = 8, cache_dir: str | Path | None = None) -> DrbemSystem:
    if cache_dir is None:
        return assemble_system(mesh, quadrature_order)
    key = system_cache_key(mesh.n_boundary, mesh.k_interior, quadrature_order)
    path = Path(cache_dir) / f"drbem-{key}.npz"
    if path.exists():
        log.info("loading cached system %s", path)
        return load_system(path)
    system = assemble_system(mesh, quadrature_order)
    save_system(system, path)
    return system
