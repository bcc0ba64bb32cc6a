"""Finite-difference reference solver on a uniform grid.

Second-order central differences in the interior, Thom's formula for the
wall vorticity, red-black Gauss-Seidel with over-relaxation for the
streamfunction and under-relaxation for the vorticity transport equation.
Arrays are indexed ``[j, i]`` with ``x = i h`` and ``y = j h``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import SingleLid
from .solver import FlowParams

log = logging.getLogger(__name__)


class FdDivergence(RuntimeError):
    pass


@dataclass
class FdSummary:
    converged: bool
    sweeps: int
    change: float
    history: list[float] = field(default_factory=list)


@dataclass
class FdGrid:
    n: int
    params: FlowParams
    sor_factor: float = 1.5
    omega_relax: float = 0.5
    psi: np.ndarray = None
    omega: np.ndarray = None

    def __post_init__(self):
        if self.n < 33:
            raise ValueError(f"grid needs at least 33 points per side, got {self.n}")
        if not 0 < self.sor_factor < 2:
            raise ValueError("sor_factor must lie in (0, 2)")
        if self.psi is None:
            self.psi = np.zeros((self.n, self.n))
        if self.omega is None:
            self.omega = np.zeros((self.n, self.n))

    @property
    def h(self) -> float:
        return 1.0 / (self.n - 1)

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n)


def _lid_profile(params: FlowParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Velocity and slip along the top row; corners stay at rest and a
    point on the split takes the mean of both segments."""
    lid = params.lid
    if isinstance(lid, SingleLid):
        segs = [lid.segment] * len(x)
    else:
        segs = [lid.left if xi <= 0.5 + 1e-12 else lid.right for xi in x]
    u = np.array([s.velocity for s in segs])
    slip = np.array([s.slip for s in segs])
    if not isinstance(lid, SingleLid):
        mid = np.abs(x - 0.5) < 1e-12
        u[mid] = 0.5 * (lid.left.velocity + lid.right.velocity)
        slip[mid] = 0.5 * (lid.left.slip + lid.right.slip)
    u[0] = u[-1] = 0.0
    slip[0] = slip[-1] = 0.0
    return u, slip


def _wall_vorticity(psi, h, u_lid, slip_lid):
    w = np.zeros_like(psi)
    w[0, :] = 2.0 * (psi[0, :] - psi[1, :]) / h**2  # bottom
    w[:, 0] = 2.0 * (psi[:, 0] - psi[:, 1]) / h**2  # left
    w[:, -1] = 2.0 * (psi[:, -1] - psi[:, -2]) / h**2  # right
    # top: u = U + S psi_yy with psi_yy = 2 (psi_adj - psi_w + h u) / h^2, omega = -psi_yy
    adj = psi[-2, :] - psi[-1, :]
    psi_yy = 2.0 * (adj + h * u_lid) / (h**2 - 2.0 * h * slip_lid)
    w[-1, :] = -psi_yy
    w[-1, 0] = w[-1, -1] = 0.0
    w[0, 0] = w[0, -1] = 0.0
    return w


def _masks(n):
    j, i = np.mgrid[0:n, 0:n]
    inner = np.zeros((n, n), bool)
    inner[1:-1, 1:-1] = True
    red = inner & ((i + j) % 2 == 0)
    black = inner & ((i + j) % 2 == 1)
    return red, black


def _sweep_psi(psi, omega, h, factor, masks, sweeps):
    for _ in range(sweeps):
        for mask in masks:
            nb = np.zeros_like(psi)
            nb[1:-1, 1:-1] = psi[1:-1, 2:] + psi[1:-1, :-2] + psi[2:, 1:-1] + psi[:-2, 1:-1]
            gs = 0.25 * (nb + h * h * omega)
            psi[mask] += factor * (gs[mask] - psi[mask])


def _sweep_omega(omega, psi, h, alpha, beta, relax, masks):
    # interior equation: lap(omega) = alpha omega + beta (psi_y omega_x - psi_x omega_y)
    py = np.zeros_like(psi)
    px = np.zeros_like(psi)
    py[1:-1, 1:-1] = (psi[2:, 1:-1] - psi[:-2, 1:-1]) / (2 * h)
    px[1:-1, 1:-1] = (psi[1:-1, 2:] - psi[1:-1, :-2]) / (2 * h)
    c = beta * h / 2.0
    diag = 4.0 + alpha * h * h
    for mask in masks:
        e = np.zeros_like(omega)
        w = np.zeros_like(omega)
        nn = np.zeros_like(omega)
        s = np.zeros_like(omega)
        e[1:-1, 1:-1] = omega[1:-1, 2:]
        w[1:-1, 1:-1] = omega[1:-1, :-2]
        nn[1:-1, 1:-1] = omega[2:, 1:-1]
        s[1:-1, 1:-1] = omega[:-2, 1:-1]
        gs = (e + w + nn + s - c * (py * (e - w) - px * (nn - s))) / diag
        omega[mask] += relax * (gs[mask] - omega[mask])


def _rel(new, old):
    scale = np.max(np.abs(new))
    d = np.max(np.abs(new - old))
    return 0.0 if scale == 0 and d == 0 else (d / scale if scale else np.inf)


def fd_solve(
    params: FlowParams,
    n: int = 129,
    tol: float = 1e-8,
    max_sweeps: int = 200000,
    sor_factor: float = 1.5,
    omega_relax: float = 0.5,
    psi_sweeps: int = 2,
    divergence_window: int = 500,
) -> tuple[FdGrid, FdSummary]:
    """Solve the cavity problem by Gauss-Seidel iteration.

    Returns the converged grid (``psi`` and ``omega`` arrays) and a summary.
    """
    if n % 2 == 0:
        raise ValueError("n must be odd so the centre lines lie on the grid")
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = FdGrid(n, params, sor_factor, omega_relax)
    h = grid.h
    alpha, beta = params.alpha, params.beta
    u_lid, slip_lid = _lid_profile(params, grid.coords)
    masks = _masks(n)
    edge = ~np.pad(np.ones((n - 2, n - 2), bool), 1)
    psi, omega = grid.psi, grid.omega

    history: list[float] = []
    growth = 0
    change = np.inf
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        psi_old = psi.copy()
        omega_old = omega.copy()
        with np.errstate(over="ignore", invalid="ignore"):  # caught by the finiteness check
            _sweep_psi(psi, omega, h, sor_factor, masks, psi_sweeps)
            wall = _wall_vorticity(psi, h, u_lid, slip_lid)
            omega[edge] = omega_old[edge] + omega_relax * (wall[edge] - omega_old[edge])
            _sweep_omega(omega, psi, h, alpha, beta, omega_relax, masks)
        if not np.all(np.isfinite(omega)):
            raise FdDivergence(f"non-finite vorticity at sweep {sweep}")
        change = max(_rel(psi, psi_old), _rel(omega, omega_old))
        if history and change > history[-1]:
            growth += 1
            if growth >= divergence_window and change > 1.0:
                raise FdDivergence(f"residual grew for {growth} consecutive sweeps (last {change:.3e})")
        else:
            growth = 0
        history.append(change)
        if change <= tol:
            converged = True
            break
    if not converged:
        log.warning("FD oracle stopped after %d sweeps, change %.3e", sweep, change)
    return grid, FdSummary(converged, sweep, float(change), history)
