"""Property checks for the kernel library, used by ``kernels-verify``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from . import kernels


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    threshold: float
    known_bad: bool = False  # stated property contradicts the kernel definition

    @property
    def ok(self) -> bool:
        return self.passed or self.known_bad

    def line(self) -> str:
        status = "PASS" if self.passed else ("XFAIL" if self.known_bad else "FAIL")
        return f"[{status}] {self.name}: measured {self.measured:.3e} (threshold {self.threshold:.1e})"


def bessel_k_integral(order: int, z: float) -> float:
    """K_order(z) from its integral representation, independent of the series code."""
    upper = math.acosh(max(800.0 / z, 1.0))  # integrand below 1e-340 beyond here
    val, _ = quad(
        lambda t: math.exp(-z * math.cosh(t)) * math.cosh(order * t), 0.0, upper, epsabs=0, epsrel=1e-13, limit=400
    )
    return val


def _laplacian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float):
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    return (f(x + ex) + f(x - ex) + f(x + ey) + f(x - ey) - 4.0 * f(x)) / (h * h)


def _grad(f, x, h):
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    return (f(x + ex) - f(x - ex)) / (2 * h), (f(x + ey) - f(x - ey)) / (2 * h)


def run_kernel_checks(fault: Optional[str] = None, seed: int = 0) -> list[Check]:
    """Run the suite.  ``fault="recurrence"`` swaps in a wrong K2 recurrence
    as a negative control."""
    checks: list[Check] = []

    def add(name, measured, threshold, known_bad=False):
        checks.append(Check(name, bool(measured < threshold), float(measured), threshold, known_bad))

    def k2(z):
        if fault == "recurrence":
            return kernels.bessel_k(0, z) + kernels.bessel_k(1, z) / z
        return kernels.bessel_k(2, z)

    add("laplace_fs(1) = 0", abs(kernels.laplace_fs(1.0)), 1e-15)
    add("laplace_fs(1/e) = 1/(2 pi)", abs(kernels.laplace_fs(math.exp(-1)) - 1 / (2 * math.pi)), 1e-15)
    u = lambda x: -np.log(np.hypot(x[0], x[1])) / (2 * math.pi)
    add("laplace_fs harmonic at |x|=1 (FD, h=1e-4)", abs(_laplacian(u, np.array([0.6, 0.8]), 1e-4)), 1e-6)
    add(
        "laplace_fs normal derivative at (1,0)",
        abs(kernels.laplace_fs_normal_derivative((1, 0), (0, 0), (1, 0)) + 1 / (2 * math.pi)),
        1e-15,
    )
    add(
        "laplace_fs normal derivative at (2,0)",
        abs(kernels.laplace_fs_normal_derivative((2, 0), (0, 0), (1, 0)) + 1 / (4 * math.pi)),
        1e-15,
    )

    zs = [0.05, 0.5, 1.0, 1.999, 2.0, 2.001, 5.0, 12.0, 30.0]
    err = max(
        abs(kernels.bessel_k(o, z) - bessel_k_integral(o, z)) / bessel_k_integral(o, z) for o in (0, 1) for z in zs
    )
    add("K0, K1 vs integral representation (relative)", err, 1e-12)
    err = max(abs(k2(z) - bessel_k_integral(2, z)) / bessel_k_integral(2, z) for z in zs)
    add("K2 recurrence K0 + 2 K1/z vs integral (relative)", err, 1e-12)
    add("K0(1) = 0.421024438", abs(kernels.bessel_k(0, 1.0) - 0.421024438), 5e-10)
    add("K1(1) = 0.601907230", abs(kernels.bessel_k(1, 1.0) - 0.601907230), 5e-10)
    err = max(
        abs(kernels.bessel_k(o, 2.0 * (1 - 1e-15)) - kernels.bessel_k(o, 2.0 * (1 + 1e-15))) / kernels.bessel_k(o, 2.0)
        for o in (0, 1)
    )
    add("series / continued-fraction crossover continuity at z=2", err, 1e-12)

    err = 0.0
    for z in zs:
        a1, a2 = kernels.a1_a2(z)
        err = max(err, abs(a1 + a2 - (1 / z**2 - kernels.bessel_k(1, z) / z)))
    add("A1 + A2 = 1/z^2 - K1/z", err, 1e-12)
    add("A1(1) = 0.022931668", abs(kernels.a1_a2(1.0)[0] - 0.022931668), 5e-9)
    a1, a2 = kernels.a1_a2(40.0)
    # A1 tends to -1/z^2, so the literal "A1 -> 0" claim cannot hold at z = 40.
    add("A1(40) -> 0 (as stated)", abs(a1), 1e-8, known_bad=True)
    add("A1(40) + 1/40^2 decay", abs(a1 + 1 / 40**2), 1e-8)
    add("A2(40) - 2/40^2 decay", abs(a2 - 2 / 40**2), 1e-8)

    rng = np.random.default_rng(seed)
    alpha = 1.0
    pts = []
    while len(pts) < 8:
        p = rng.uniform(-10, 10, 2)
        if 0.1 < np.hypot(*p) < 10:
            pts.append(p)
    add(
        "pressure vector at (1,0) = (1/(2 pi), 0)",
        float(np.max(np.abs(kernels.brinkman_pressure([1.0, 0.0]) - [1 / (2 * math.pi), 0.0]))),
        1e-15,
    )
    sym = max(abs(kernels.brinkman_velocity(p, alpha)[0, 1] - kernels.brinkman_velocity(p, alpha)[1, 0]) for p in pts)
    add("velocity tensor symmetry", sym, 1e-12)

    h = 1e-4
    x0 = np.array([0.7, 0.3])
    res = 0.0
    for k in range(2):
        col = lambda x, k=k: kernels.brinkman_velocity(x, alpha)[:, k]
        lap = _laplacian(col, x0, h)
        gx, gy = _grad(lambda x, k=k: kernels.brinkman_pressure(x)[k], x0, h)
        res = max(res, float(np.max(np.abs(lap - alpha * col(x0) - np.array([gx, gy])))))
    add("Brinkman PDE residual (Laplace - alpha) G - grad Pi at (0.7,0.3)", res, 1e-5)

    div = 0.0
    for p in pts:
        for k in range(2):
            gx, _ = _grad(lambda x, k=k: kernels.brinkman_velocity(x, alpha)[0, k], p, h)
            _, gy = _grad(lambda x, k=k: kernels.brinkman_velocity(x, alpha)[1, k], p, h)
            div = max(div, abs(gx + gy))
    add("velocity tensor divergence-free columns", div, 1e-5)

    err = 0.0
    for p in pts[:4]:
        ev = kernels.brinkman_tensors(p, alpha)
        G = lambda x: kernels.brinkman_velocity(x, alpha)
        dGdx, dGdy = _grad(G, p, 1e-5)
        grad = np.stack([dGdx, dGdy], axis=-1)  # [i, j, l]
        P = kernels.brinkman_pressure(p)
        S_fd = -np.einsum("j,il->ijl", P, np.eye(2)) + grad + np.einsum("lji->ijl", grad)
        err = max(err, float(np.max(np.abs(ev.stress_tensor - S_fd))))
    add("stress tensor closed form vs finite differences", err, 1e-6)

    x = np.array([0.3, -0.4])
    lam = kernels.brinkman_dl_pressure(x, 0.0)
    lam2 = kernels.brinkman_dl_pressure(2 * x, 0.0)
    finite = all(np.all(np.isfinite(kernels.brinkman_dl_pressure(p, alpha))) for p in pts)
    add("double-layer pressure finite and degree -2 homogeneous (alpha=0)", float(np.max(np.abs(lam2 * 4 - lam))) if finite else math.inf, 1e-12)
    return checks


def all_ok(checks: list[Check]) -> bool:
    return all(c.ok for c in checks)


def poisson_residual(system, mesh, u, grad, lap) -> float:
    """Relative residual of ``H u - G q - S lap(u)`` for a manufactured field.

    ``u``, ``grad`` and ``lap`` are callables of an ``(M, 2)`` point array;
    ``grad`` returns ``(M, 2)``.  Corner fluxes use the normal of each
    adjoining element.
    """
    pts = mesh.points
    n = mesh.n_boundary
    vals, g, lv = u(pts), grad(pts)[:n], lap(pts)
    q_next = np.sum(g * mesh.next_normals, axis=1)
    q_prev = np.sum(g * mesh.prev_normals, axis=1)
    lhs = system.H @ vals - system.G_prev @ q_prev - system.G_next @ q_next
    rhs = system.S_mat @ lv
    scale = max(np.max(np.abs(system.H @ vals)), np.max(np.abs(rhs)), 1e-300)
    return float(np.max(np.abs(lhs - rhs)) / scale)
