"""Fundamental solutions.

The 2-D Laplace kernel drives the boundary element assembly.  The Brinkman
kernels (velocity tensor, pressure vector, stress tensor and double-layer
pressure tensor) are evaluable closed forms used by the verification suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EULER_GAMMA = 0.57721566490153286061
_EPS = 1e-16
_SERIES_LIMIT = 2.0


def laplace_fs(r: float) -> float:
    if r <= 0:
        raise ValueError(f"distance must be positive, got {r}")
    return math.log(1.0 / r) / (2.0 * math.pi)


def laplace_fs_normal_derivative(field_point, source_point, unit_normal) -> float:
    """Normal derivative of the Laplace kernel at ``field_point``."""
    rx = field_point[0] - source_point[0]
    ry = field_point[1] - source_point[1]
    r2 = rx * rx + ry * ry
    if r2 == 0.0:
        raise ValueError("field point coincides with source point")
    return -(rx * unit_normal[0] + ry * unit_normal[1]) / (2.0 * math.pi * r2)


def _k01_series(z: float) -> tuple[float, float]:
    # ascending series, accurate for small z
    y = 0.25 * z * z
    lg = math.log(0.5 * z)
    term = 1.0  # (z^2/4)^k / (k!)^2
    harm = 0.0  # H_k
    i0 = 0.0
    s0 = 0.0
    i1 = 0.0
    s1 = 0.0
    k = 0
    while True:
        # psi(k+1) + psi(k+2) = 2 H_k + 1/(k+1) - 2 gamma
        t1 = term / (k + 1)  # (z^2/4)^k / (k! (k+1)!)
        i0 += term
        s0 += term * harm
        i1 += t1
        s1 += t1 * (2.0 * harm + 1.0 / (k + 1) - 2.0 * EULER_GAMMA)
        k += 1
        term *= y / (k * k)
        harm += 1.0 / k
        if term < _EPS * i0 and k > 2:
            break
    k0 = -(lg + EULER_GAMMA) * i0 + s0
    k1 = 1.0 / z + lg * (0.5 * z * i1) - 0.25 * z * s1
    return k0, k1


def _k01_continued_fraction(z: float) -> tuple[float, float]:
    # Steed's algorithm for the Temme continued fraction, order 0 and 1
    b = 2.0 * (1.0 + z)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, 10000):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    else:  # pragma: no cover
        raise ArithmeticError(f"continued fraction for K(z) did not converge at z={z}")
    h = a1 * h
    k0 = math.sqrt(math.pi / (2.0 * z)) * math.exp(-z) / s
    k1 = k0 * (z + 0.5 - h) / z
    return k0, k1


def _k01(z: float) -> tuple[float, float]:
    if z <= 0:
        raise ValueError(f"argument must be positive, got {z}")
    if z <= _SERIES_LIMIT:
        return _k01_series(z)
    return _k01_continued_fraction(z)


def bessel_k(order: int, z: float) -> float:
    """Modified Bessel function of the second kind, orders 0, 1 and 2."""
    k0, k1 = _k01(z)
    if order == 0:
        return k0
    if order == 1:
        return k1
    if order == 2:
        return k0 + 2.0 * k1 / z
    raise ValueError(f"order must be 0, 1 or 2, got {order}")


def a1_a2(z: float) -> tuple[float, float]:
    k0, k1 = _k01(z)
    k2 = k0 + 2.0 * k1 / z
    return k0 + k1 / z - 1.0 / (z * z), 2.0 / (z * z) - k2


def _a_derivatives(z: float) -> tuple[float, float, float, float]:
    """A1, A2 and their derivatives in z.

    Uses K0' = -K1 and K1' = -K0 - K1/z.
    """
    k0, k1 = _k01(z)
    k2 = k0 + 2.0 * k1 / z
    z2 = z * z
    a1 = k0 + k1 / z - 1.0 / z2
    a2 = 2.0 / z2 - k2
    dk0 = -k1
    dk1 = -k0 - k1 / z
    dk2 = dk0 + 2.0 * dk1 / z - 2.0 * k1 / z2
    da1 = dk0 + dk1 / z - k1 / z2 + 2.0 / (z2 * z)
    da2 = -4.0 / (z2 * z) - dk2
    return a1, a2, da1, da2


@dataclass(frozen=True)
class BrinkmanKernelEval:
    velocity_tensor: np.ndarray  # (2, 2)
    pressure_vector: np.ndarray  # (2,)
    stress_tensor: np.ndarray  # (2, 2, 2) indexed [i, j, l]
    dl_pressure_tensor: np.ndarray  # (2, 2)


def brinkman_velocity(x, alpha: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = math.hypot(x[0], x[1])
    if r == 0.0:
        raise ValueError("Brinkman kernel is singular at the origin")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    a1, a2 = a1_a2(math.sqrt(alpha) * r)
    return (np.eye(2) * a1 + np.outer(x, x) / (r * r) * a2) / (2.0 * math.pi)


def brinkman_pressure(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r2 = x[0] * x[0] + x[1] * x[1]
    if r2 == 0.0:
        raise ValueError("Brinkman kernel is singular at the origin")
    return x / (2.0 * math.pi * r2)


def _velocity_gradient(x: np.ndarray, alpha: float) -> np.ndarray:
    """dG_jk / dx_l, returned as an array indexed [j, k, l]."""
    r = math.hypot(x[0], x[1])
    sa = math.sqrt(alpha)
    a1, a2, da1, da2 = _a_derivatives(sa * r)
    e = x / r
    delta = np.eye(2)
    # d(x_j x_k / r^2)/dx_l = (delta_jl x_k + delta_kl x_j)/r^2 - 2 x_j x_k x_l / r^4
    dproj = (
        np.einsum("jl,k->jkl", delta, x) + np.einsum("kl,j->jkl", delta, x)
    ) / (r * r) - 2.0 * np.einsum("j,k,l->jkl", x, x, x) / r**4
    proj = np.outer(e, e)
    grad = (
        np.einsum("jk,l->jkl", delta, e) * sa * da1
        + np.einsum("jk,l->jkl", proj, e) * sa * da2
        + dproj * a2
    )
    return grad / (2.0 * math.pi)


def brinkman_dl_pressure(x, alpha: float) -> np.ndarray:
    """Double-layer pressure tensor as a function of ``x = y_field - x_source``."""
    x = np.asarray(x, dtype=float)
    r2 = x[0] * x[0] + x[1] * x[1]
    if r2 == 0.0:
        raise ValueError("Brinkman kernel is singular at the origin")
    r = math.sqrt(r2)
    return (
        -4.0 * np.outer(x, x) / (r2 * r2)
        - (alpha * r2 * math.log(r) + 2.0) * np.eye(2) / r2
    ) / (2.0 * math.pi)


def brinkman_tensors(x, alpha: float) -> BrinkmanKernelEval:
    x = np.asarray(x, dtype=float)
    G = brinkman_velocity(x, alpha)
    P = brinkman_pressure(x)
    grad = _velocity_gradient(x, alpha)  # [j, k, l] -> dG_jk/dx_l
    delta = np.eye(2)
    # S_ijl = -P_j delta_il + dG_ij/dx_l + dG_lj/dx_i
    S = (
        -np.einsum("j,il->ijl", P, delta)
        + grad  # grad[i, j, l] = dG_ij/dx_l
        + np.einsum("lji->ijl", grad)  # grad[l, j, i] = dG_lj/dx_i
    )
    return BrinkmanKernelEval(
        velocity_tensor=G,
        pressure_vector=P,
        stress_tensor=S,
        dl_pressure_tensor=brinkman_dl_pressure(x, alpha),
    )
