"""Deformation-gradient transport, a characteristics reference solver,
divergence monitoring and mollified initial data."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import correlate

from .errors import ConfigError
from .fields import DomainSpec, MatrixField, VelocityField, l2_norm, linf_norm
from .operators import BcMode, advect, divergence_matrix, jacobian, laplacian


def matmul_cells(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cell-wise product of ``(2, 2, nx, ny)`` stacks."""
    out = np.empty(np.broadcast_shapes(A.shape, B.shape))
    for a in range(2):
        for b in range(2):
            out[a, b] = A[a, 0] * B[0, b] + A[a, 1] * B[1, b]
    return out


def transport_limit(u: VelocityField, f_diffusion: float, cfl_safety: float = 1.0) -> float:
    h = u.domain.h
    limit = np.inf
    speed = u.max_speed()
    if speed > 0:
        limit = h / speed
    if f_diffusion > 0:
        limit = min(limit, h * h / (4.0 * f_diffusion))
    return cfl_safety * limit


def transport_step(F: MatrixField, u: VelocityField, dt: float, f_diffusion: float = 0.0,
                   advection: str = "upwind", cfl_safety: float = 1.0,
                   check_stability: bool = True) -> MatrixField:
    """``F+ = F + dt (-(u . grad) F + J F + f_diffusion Delta F)`` with ``J = grad u``."""
    if f_diffusion < 0:
        raise ConfigError("f_diffusion must be non-negative")
    if check_stability:
        limit = transport_limit(u, f_diffusion, cfl_safety)
        if dt > limit * (1 + 1e-12):
            raise ConfigError(f"transport step dt={dt:.3e} exceeds CFL limit {limit:.3e}")
    if u.max_speed() == 0.0 and f_diffusion == 0.0:
        return F.copy()
    rate = -advect(u, F, advection).data + matmul_cells(jacobian(u).data, F.data)
    if f_diffusion > 0:
        rate = rate + f_diffusion * laplacian(F, BcMode.NEUMANN_ZERO).data
    return MatrixField(F.domain, F.data + dt * rate)


def div_matrix_monitor(F: MatrixField) -> tuple[float, float]:
    """``(l2, linf)`` of the column divergence of ``F``."""
    div = divergence_matrix(F)
    return l2_norm(div), linf_norm(div)


# --- characteristics ------------------------------------------------------


@dataclass
class AnalyticVelocity:
    """Velocity given by closed-form callables.

    ``value(t, X, Y)`` returns shape ``(2,) + X.shape`` and ``grad(t, X, Y)``
    returns ``(2, 2) + X.shape`` with ``grad[a, b] = d_b u_a``.
    """

    value: Callable
    grad: Callable

    @classmethod
    def linear(cls, A) -> "AnalyticVelocity":
        """``u(x) = A (x - c)`` with ``c = 0``; gradient ``A`` everywhere."""
        A = np.asarray(A, dtype=float)

        def value(t, X, Y):
            return np.stack([A[0, 0] * X + A[0, 1] * Y, A[1, 0] * X + A[1, 1] * Y])

        def grad(t, X, Y):
            return np.broadcast_to(A[:, :, None], (2, 2, X.size)).reshape((2, 2) + np.shape(X)).copy()

        return cls(value, grad)

    @classmethod
    def zero(cls) -> "AnalyticVelocity":
        return cls(lambda t, X, Y: np.zeros((2,) + np.shape(X)),
                   lambda t, X, Y: np.zeros((2, 2) + np.shape(X)))


def integrate_characteristic(X, Y, F, vel: AnalyticVelocity, t0: float, t1: float,
                             substeps: int, domain: DomainSpec | None = None):
    """Carry ``(X, F)`` along ``dX/ds = u(s, X)``, ``dF/ds = grad u(s, X) F``
    from ``s = t0`` to ``s = t1`` (either direction) with classical RK4.

    Returns ``(X, Y, F, exited)``; ``exited`` flags paths that left ``domain``.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    X = np.array(X, dtype=float)
    Y = np.array(Y, dtype=float)
    F = np.array(F, dtype=float)
    exited = np.zeros(X.shape, dtype=bool)
    h = (t1 - t0) / substeps

    def rhs(s, x, y, f):
        if domain is not None:
            exited[...] |= (x < 0) | (x > domain.Lx) | (y < 0) | (y > domain.Ly)
        v = vel.value(s, x, y)
        return v[0], v[1], matmul_cells(vel.grad(s, x, y), f)

    s = t0
    for _ in range(substeps):
        k1 = rhs(s, X, Y, F)
        k2 = rhs(s + h / 2, X + h / 2 * k1[0], Y + h / 2 * k1[1], F + h / 2 * k1[2])
        k3 = rhs(s + h / 2, X + h / 2 * k2[0], Y + h / 2 * k2[1], F + h / 2 * k2[2])
        k4 = rhs(s + h, X + h * k3[0], Y + h * k3[1], F + h * k3[2])
        X = X + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Y = Y + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        F = F + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        s += h
    return X, Y, F, exited


@dataclass
class OracleResult:
    F: MatrixField
    exited: np.ndarray


def characteristics_oracle(domain: DomainSpec, F0: Callable, vel: AnalyticVelocity, t: float,
                           substeps: int = 100) -> OracleResult:
    """Reference solution of ``dF/dt + (u . grad) F = grad u F`` at cell centres.

    For each cell centre the foot of the characteristic is found by integrating
    backward to time 0; ``F0(X, Y)`` (shape ``(2, 2) + X.shape``) is sampled
    there and carried forward along the same path.
    """
    Xc, Yc = domain.points("cell-center")
    dummy = np.zeros((2, 2) + Xc.shape)
    X0, Y0, _, out1 = integrate_characteristic(Xc, Yc, dummy, vel, t, 0.0, substeps, domain)
    F_init = np.asarray(F0(X0, Y0), dtype=float)
    _, _, Ft, out2 = integrate_characteristic(X0, Y0, F_init, vel, 0.0, t, substeps, domain)
    return OracleResult(MatrixField(domain, Ft), out1 | out2)


# --- mollification --------------------------------------------------------


def bump_kernel(domain: DomainSpec, delta: float) -> np.ndarray:
    """Normalized weights of ``exp(-1 / (1 - (r/delta)^2))`` on grid offsets."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    rx = int(np.ceil(delta / domain.hx))
    ry = int(np.ceil(delta / domain.hy))
    ox = np.arange(-rx, rx + 1) * domain.hx
    oy = np.arange(-ry, ry + 1) * domain.hy
    R2 = (ox[:, None] ** 2 + oy[None, :] ** 2) / delta**2
    w = np.zeros_like(R2)
    inside = R2 < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - R2[inside]))
    return w / w.sum()


def mollify_initial(F0_raw: MatrixField, delta: float) -> MatrixField:
    """Componentwise convolution with a bump of radius ``delta``.

    Near the walls the data are extended by reflection about the wall. A radius
    below the grid spacing cannot be resolved: a warning is issued and the data
    are returned unchanged.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    d = F0_raw.domain
    if delta < min(d.hx, d.hy):
        warnings.warn(f"mollifier radius {delta:g} is below the grid spacing; no smoothing applied",
                      stacklevel=2)
        return F0_raw.copy()
    w = bump_kernel(d, delta)
    out = np.empty_like(F0_raw.data)
    for a in range(2):
        for b in range(2):
            out[a, b] = correlate(F0_raw.data[a, b], w, mode="reflect")
    return MatrixField(d, out)
