"""Second-order finite-difference operators on the MAC grid.

Velocity gradient convention: ``J[a, b] = d_b u_a``, so that for ``u = (y, 0)``
the only nonzero entry is ``J[0, 1] = 1`` and the transport source reads
``(J F)_ab = sum_c J[a, c] F[c, b]``.

The pair (``jacobian``, ``divergence_matrix``) is built so that
``<divergence_matrix(S), u> = -sum_ab <S_ab, J[a, b]>`` holds exactly for
symmetric ``S`` and wall-clamped ``u``. That identity is what makes the
elastic stress work cancel the stretching source ``J F`` in the discrete
energy balance.
"""

from __future__ import annotations

from enum import Enum
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numba import njit

from .fields import (
    CELL,
    XFACE,
    YFACE,
    CellField,
    DomainSpec,
    MatrixField,
    ScalarField,
    VelocityField,
)


class BcMode(Enum):
    VELOCITY_CLAMPED = "velocity-clamped"
    NEUMANN_ZERO = "neumann-zero"
    EXTRAPOLATE_FIRST_ORDER = "extrapolate-first-order"


# --- one-dimensional building blocks (act on the last two axes) ----------
#
# axis = -2 is x, axis = -1 is y.


def _ix(ndim: int, axis: int, s) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def _diff(a: np.ndarray, axis: int) -> np.ndarray:
    return a[_ix(a.ndim, axis, slice(1, None))] - a[_ix(a.ndim, axis, slice(None, -1))]


def _avg(a: np.ndarray, axis: int) -> np.ndarray:
    return 0.5 * (a[_ix(a.ndim, axis, slice(None, -1))] + a[_ix(a.ndim, axis, slice(1, None))])


def _pad(a: np.ndarray, axis: int, kind: str) -> np.ndarray:
    """Add one ghost layer on both ends of ``axis``.

    ``even`` mirrors the boundary value, ``odd`` mirrors it with a sign flip
    (zero value on the wall halfway between ghost and first node), ``zero``
    pads with zeros.
    """
    shape = list(a.shape)
    shape[axis] += 2
    out = np.empty(shape)
    nd = a.ndim
    out[_ix(nd, axis, slice(1, -1))] = a
    if kind == "zero":
        out[_ix(nd, axis, 0)] = 0.0
        out[_ix(nd, axis, -1)] = 0.0
    else:
        sign = -1.0 if kind == "odd" else 1.0
        out[_ix(nd, axis, 0)] = sign * a[_ix(nd, axis, 0)]
        out[_ix(nd, axis, -1)] = sign * a[_ix(nd, axis, -1)]
    return out


def _centered(a: np.ndarray, axis: int, h: float, kind: str) -> np.ndarray:
    p = _pad(a, axis, kind)
    nd = a.ndim
    return (p[_ix(nd, axis, slice(2, None))] - p[_ix(nd, axis, slice(None, -2))]) / (2.0 * h)


def _face_from_cells(c: np.ndarray, axis: int) -> np.ndarray:
    """Average cell data onto faces normal to ``axis``; wall faces get 0."""
    out = _avg(_pad(c, axis, "zero"), axis)
    _zero_ends(out, axis)
    return out


def _grad_to_faces(c: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Difference of cell data onto faces normal to ``axis``; wall faces get 0."""
    out = _diff(_pad(c, axis, "zero"), axis) / h
    _zero_ends(out, axis)
    return out


def _zero_ends(a: np.ndarray, axis: int) -> None:
    a[_ix(a.ndim, axis, 0)] = 0.0
    a[_ix(a.ndim, axis, -1)] = 0.0


# --- scalar/vector calculus -----------------------------------------------


def gradient_scalar(phi: ScalarField) -> VelocityField:
    """Face-centered gradient of a cell-centered scalar; wall faces are 0."""
    if phi.layout != CELL:
        raise ValueError("gradient_scalar expects a cell-centered field")
    d = phi.domain
    return VelocityField(d, _grad_to_faces(phi.data, -2, d.hx), _grad_to_faces(phi.data, -1, d.hy))


def divergence_vector(u: VelocityField) -> ScalarField:
    d = u.domain
    return ScalarField(d, CELL, _diff(u.u, -2) / d.hx + _diff(u.v, -1) / d.hy)


def jacobian(u: VelocityField) -> MatrixField:
    """Cell-centered velocity gradient ``J[a, b] = d_b u_a``."""
    d = u.domain
    J = np.empty((2, 2, d.nx, d.ny))
    J[0, 0] = _diff(u.u, -2) / d.hx
    J[1, 1] = _diff(u.v, -1) / d.hy
    J[0, 1] = _centered(_avg(u.u, -2), -1, d.hy, "odd")
    J[1, 0] = _centered(_avg(u.v, -1), -2, d.hx, "odd")
    return MatrixField(d, J)


def divergence_matrix(F: MatrixField) -> VelocityField:
    """Column divergence ``(div F)_b = sum_a d_a F[a, b]`` on the velocity faces.

    Negative adjoint of the transposed :func:`jacobian`:
    ``<div F, u> = -<F, J^T>`` for wall-clamped ``u``; wall faces are 0.
    """
    d = F.domain
    A = F.data
    fx = _grad_to_faces(A[0, 0], -2, d.hx) + _face_from_cells(_centered(A[1, 0], -1, d.hy, "even"), -2)
    fy = _face_from_cells(_centered(A[0, 1], -2, d.hx, "even"), -1) + _grad_to_faces(A[1, 1], -1, d.hy)
    return VelocityField(d, fx, fy)


def curl_matrix(domain: DomainSpec, psi1: np.ndarray, psi2: np.ndarray) -> MatrixField:
    """Matrix field whose columns are discrete curls of two potentials.

    ``psi1`` lives on the x-face grid and ``psi2`` on the y-face grid. The result
    has ``divergence_matrix`` equal to zero up to rounding.
    """
    d = domain
    F = np.empty((2, 2, d.nx, d.ny))
    F[0, 0] = _centered(_avg(psi1, -2), -1, d.hy, "even")
    F[1, 0] = -_diff(psi1, -2) / d.hx
    F[0, 1] = -_diff(psi2, -1) / d.hy
    F[1, 1] = _centered(_avg(psi2, -1), -2, d.hx, "even")
    return MatrixField(d, F)


def velocity_from_stream(domain: DomainSpec, psi) -> VelocityField:
    """Discretely divergence-free velocity ``(d_y psi, -d_x psi)``.

    ``psi(X, Y)`` is sampled at cell corners; if it vanishes on the boundary
    the normal wall velocity is exactly zero.
    """
    X, Y = domain.points("corner")
    P = np.asarray(psi(X, Y), dtype=float)
    u = np.diff(P, axis=1) / domain.hy
    v = -np.diff(P, axis=0) / domain.hx
    return VelocityField(domain, u, v).with_walls_zeroed()


# --- Laplacians -----------------------------------------------------------


def _tridiag(n: int, h: float, lo_corner: float, hi_corner: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    main[0] += lo_corner
    main[-1] += hi_corner
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def _dirichlet_nodes(n_cells: int, h: float) -> sp.csr_matrix:
    """Second difference on ``n_cells + 1`` nodes whose two end nodes are zero walls."""
    inner = _tridiag(n_cells - 1, h, 0.0, 0.0)
    return sp.block_diag([sp.csr_matrix((1, 1)), inner, sp.csr_matrix((1, 1))], format="csr")


def _interior_projector(n_cells: int) -> sp.csr_matrix:
    diag = np.ones(n_cells + 1)
    diag[[0, -1]] = 0.0
    return sp.diags(diag, format="csr")


@lru_cache(maxsize=32)
def laplacian_matrix(domain: DomainSpec, layout: str) -> sp.csr_matrix:
    """Sparse five-point Laplacian acting on C-ordered node data of ``layout``.

    Cell data use mirror ghosts. Face data are clamped: wall nodes are zero
    in and out, odd ghosts along the tangential direction.
    """
    nx, ny, hx, hy = domain.nx, domain.ny, domain.hx, domain.hy
    if layout == CELL:
        return (sp.kron(_tridiag(nx, hx, 1.0, 1.0), sp.identity(ny))
                + sp.kron(sp.identity(nx), _tridiag(ny, hy, 1.0, 1.0))).tocsr()
    if layout == XFACE:
        return (sp.kron(_dirichlet_nodes(nx, hx), sp.identity(ny))
                + sp.kron(_interior_projector(nx), _tridiag(ny, hy, -1.0, -1.0))).tocsr()
    if layout == YFACE:
        return (sp.kron(_tridiag(nx, hx, -1.0, -1.0), _interior_projector(ny))
                + sp.kron(sp.identity(nx), _dirichlet_nodes(ny, hy))).tocsr()
    raise ValueError(f"unknown layout {layout!r}")


def _apply_matrix(A: sp.csr_matrix, a: np.ndarray, node_shape: tuple) -> np.ndarray:
    lead = a.shape[: a.ndim - 2]
    flat = a.reshape((-1,) + (node_shape[0] * node_shape[1],))
    out = (A @ flat.T).T
    return out.reshape(lead + node_shape)


def _lap_cell(a: np.ndarray, domain: DomainSpec) -> np.ndarray:
    # difference of mirror-ghost fluxes, so constants give exactly zero
    out = _diff(_diff(_pad(a, -2, "even"), -2), -2) / domain.hx**2
    out += _diff(_diff(_pad(a, -1, "even"), -1), -1) / domain.hy**2
    return out


def _lap_face(a: np.ndarray, domain: DomainSpec, layout: str) -> np.ndarray:
    return _apply_matrix(laplacian_matrix(domain, layout), a, domain.shape(layout))


def _energy_face(a: np.ndarray, normal_axis: int, hx: float, hy: float) -> float:
    """Sum of squared differences that equals ``<-lap a, a>`` for the clamped Laplacian
    (without the cell-volume weight)."""
    if normal_axis == -1:
        return _energy_face(np.swapaxes(a, -1, -2), -2, hy, hx)
    c = a[..., 1:-1, :]
    full = a.copy()
    full[..., 0, :] = 0.0
    full[..., -1, :] = 0.0
    ex = np.sum(np.diff(full, axis=-2) ** 2) / hx**2
    ey = (np.sum(np.diff(c, axis=-1) ** 2) + 2.0 * np.sum(c[..., 0] ** 2)
          + 2.0 * np.sum(c[..., -1] ** 2)) / hy**2
    return float(ex + ey)


def clamped_dirichlet_energy(u: VelocityField) -> float:
    """``<-laplacian(u), u>`` from squared differences (nonnegative by construction)."""
    d = u.domain
    return (_energy_face(u.u, -2, d.hx, d.hy) + _energy_face(u.v, -1, d.hx, d.hy)) * d.cell_volume


@lru_cache(maxsize=16)
def velocity_laplacian_matrix(domain: DomainSpec) -> sp.csr_matrix:
    """Clamped Laplacian on ``concat(u.ravel(), v.ravel())``."""
    return sp.block_diag([laplacian_matrix(domain, XFACE), laplacian_matrix(domain, YFACE)],
                         format="csr")


def clamped_quadratic_forms(u: VelocityField) -> tuple[float, float]:
    """``<-Delta u, u>`` and ``<(-Delta)^3 u, u> = <-Delta L, L>`` with ``L = Delta u``
    on clamped velocities (wall faces are ignored)."""
    d = u.domain
    w = u.with_walls_zeroed()
    x = np.concatenate([w.u.ravel(), w.v.ravel()])
    L = velocity_laplacian_matrix(d)
    lap = L @ x
    lap2 = L @ lap
    return -float(x @ lap) * d.cell_volume, -float(lap @ lap2) * d.cell_volume


def laplacian(f, mode: BcMode = BcMode.NEUMANN_ZERO):
    """Five-point Laplacian of any field type with the ghost rule of ``mode``.

    Cell-centered data accept ``NEUMANN_ZERO`` (mirror ghosts) and
    ``EXTRAPOLATE_FIRST_ORDER`` (constant extrapolation, which coincides with the
    mirror for cell data). Face data require ``VELOCITY_CLAMPED``.
    """
    d = f.domain
    if isinstance(f, VelocityField):
        _require(mode, BcMode.VELOCITY_CLAMPED)
        return VelocityField(d, _lap_face(f.u, d, XFACE), _lap_face(f.v, d, YFACE))
    if isinstance(f, ScalarField) and f.layout != CELL:
        _require(mode, BcMode.VELOCITY_CLAMPED)
        return ScalarField(d, f.layout, _lap_face(f.data, d, f.layout))
    if mode == BcMode.VELOCITY_CLAMPED:
        raise ValueError("clamped ghosts are only defined for face data")
    out = _lap_cell(f.data, d)
    if isinstance(f, ScalarField):
        return ScalarField(d, CELL, out)
    return type(f)(d, out)


def _require(mode: BcMode, expected: BcMode) -> None:
    if mode != expected:
        raise ValueError(f"face data need {expected}, got {mode}")


def trilaplacian(u: VelocityField) -> VelocityField:
    """``Delta^3 u`` by nesting the clamped Laplacian.

    Note the sign: this is negative semidefinite, the dissipative quadratic form
    is ``<-trilaplacian(u), u>``.
    """
    out = u
    for _ in range(3):
        out = laplacian(out, BcMode.VELOCITY_CLAMPED)
    return out


# --- advection ------------------------------------------------------------


@njit(cache=True)
def _transport_kernel(wx, wy, f, cx, cy, upwind, out):  # pragma: no cover - compiled
    nc, nx, ny = f.shape
    for c in range(nc):
        for i in range(nx):
            for j in range(ny):
                acc = 0.0
                fc = f[c, i, j]
                if i + 1 < nx:
                    w = wx[i + 1, j]
                    acc += cx * (w - upwind * abs(w)) * (f[c, i + 1, j] - fc)
                if i > 0:
                    w = wx[i, j]
                    acc += cx * (w + upwind * abs(w)) * (fc - f[c, i - 1, j])
                if j + 1 < ny:
                    w = wy[i, j + 1]
                    acc += cy * (w - upwind * abs(w)) * (f[c, i, j + 1] - fc)
                if j > 0:
                    w = wy[i, j]
                    acc += cy * (w + upwind * abs(w)) * (fc - f[c, i, j - 1])
                out[c, i, j] = acc


def _transport(wx: np.ndarray, wy: np.ndarray, f: np.ndarray, hx: float, hy: float,
               scheme: str) -> np.ndarray:
    """``(w . grad) f`` for node data ``f`` with transport velocities on the
    midpoints between nodes.

    ``wx`` has one more entry than ``f`` along x (the outermost entries sit on the
    boundary of the node's control volumes), likewise ``wy`` along y. Differences
    across the outermost midpoints are taken as zero. Each midpoint carries the
    central flux ``w df / 2h``; upwinding subtracts ``|w| df / 2h`` on the
    downstream side and adds it on the upstream side.
    """
    if scheme not in ("upwind", "central"):
        raise ValueError(f"unknown advection scheme {scheme!r}")
    f3 = np.ascontiguousarray(f, dtype=float).reshape((-1,) + f.shape[-2:])
    out = np.empty_like(f3)
    _transport_kernel(np.ascontiguousarray(wx), np.ascontiguousarray(wy), f3, 0.5 / hx, 0.5 / hy,
                      1.0 if scheme == "upwind" else 0.0, out)
    return out.reshape(f.shape)


def _face_transport_velocities(u: VelocityField, normal_axis: int):
    """Transport velocities for the control volumes of a face grid."""
    if normal_axis == -2:
        wn = _pad(_avg(u.u, -2), -2, "zero")
        wt = _avg(_pad(u.v, -2, "zero"), -2)
        return wn, wt
    wn = _pad(_avg(u.v, -1), -1, "zero")
    wt = _avg(_pad(u.u, -1, "zero"), -1)
    return wt, wn


def advect(u: VelocityField, f, scheme: str = "upwind"):
    """Discrete ``(u . grad) f`` at the layout of ``f``.

    Both schemes are exactly skew-adjoint (central) or dissipative (upwind)
    for discretely divergence-free ``u`` that vanishes on the walls.
    """
    d = u.domain
    if f.domain != d:
        raise ValueError("advect: fields live on different domains")
    if isinstance(f, VelocityField):
        return VelocityField(d, _advect_face(u, f.u, -2, scheme), _advect_face(u, f.v, -1, scheme))
    if isinstance(f, ScalarField) and f.layout != CELL:
        axis = -2 if f.layout == XFACE else -1
        return ScalarField(d, f.layout, _advect_face(u, f.data, axis, scheme))
    out = _transport(u.u, u.v, f.data, d.hx, d.hy, scheme)
    if isinstance(f, ScalarField):
        return ScalarField(d, CELL, out)
    return type(f)(d, out)


def _advect_face(u: VelocityField, a: np.ndarray, normal_axis: int, scheme: str) -> np.ndarray:
    d = u.domain
    wx, wy = _face_transport_velocities(u, normal_axis)
    out = _transport(wx, wy, a, d.hx, d.hy, scheme)
    _zero_ends(out, normal_axis)
    return out


# --- cell-centered gradients of cell fields -------------------------------


def cell_gradient(f: CellField | ScalarField, kind: str = "even") -> np.ndarray:
    """Centered gradient of cell data; returns shape ``comp + (2, nx, ny)``.

    ``kind="even"`` uses mirror ghosts (zero normal derivative on the wall).
    """
    d = f.domain
    a = f.data
    return np.stack([_centered(a, -2, d.hx, kind), _centered(a, -1, d.hy, kind)], axis=-3)


__all__ = [
    "BcMode",
    "advect",
    "cell_gradient",
    "curl_matrix",
    "divergence_matrix",
    "divergence_vector",
    "gradient_scalar",
    "jacobian",
    "laplacian",
    "clamped_dirichlet_energy",
    "trilaplacian",
    "velocity_from_stream",
]
