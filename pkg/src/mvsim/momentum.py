"""Stresses, body forces and the IMEX velocity step.

One step treats advection and all forces explicitly and viscosity plus
hyperviscosity implicitly, then projects onto discretely divergence-free
fields:

    (I - dt nu Delta + dt eps (-Delta)^3) u* = u - dt (u . grad) u + dt f,
    u+ = u* - grad phi,   p = phi / dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MvsimError
from .fields import CellField, MatrixField, ScalarField, SimParams, Vec3Field, VelocityField
from .incompressible import helmholtz_solve, project_div_free
from .operators import (
    BcMode,
    advect,
    cell_gradient,
    divergence_matrix,
    laplacian,
)


def elastic_stress(F: MatrixField) -> MatrixField:
    """``F F^T`` per cell (the stress of ``W(F) = |F|^2 / 2``)."""
    A = F.data
    S = np.empty_like(A)
    for a in range(2):
        for b in range(2):
            S[a, b] = A[a, 0] * A[b, 0] + A[a, 1] * A[b, 1]
    return MatrixField(F.domain, S)


def magnetic_stress(M: Vec3Field) -> MatrixField:
    """``(grad M)^T grad M`` per cell from centered differences with mirror ghosts."""
    G = cell_gradient(M)  # (3, 2, nx, ny): G[k, i] = d_i M_k
    S = np.empty((2, 2) + G.shape[2:])
    for i in range(2):
        for j in range(2):
            S[i, j] = G[0, i] * G[0, j] + G[1, i] * G[1, j] + G[2, i] * G[2, j]
    return MatrixField(M.domain, S)


def kelvin_force(Hext: Vec3Field, M: Vec3Field) -> CellField:
    """Cell-centered ``(grad H)^T M``: component ``j`` is ``sum_k d_j H_k M_k``."""
    G = cell_gradient(Hext)
    return CellField(M.domain, np.einsum("kj...,k...->j...", G, M.data))


def _face_pairing(weight: np.ndarray, field: np.ndarray, domain) -> tuple[np.ndarray, np.ndarray]:
    """``sum_k avg(weight_k) * diff(field_k) / h`` on the interior faces of both
    directions; wall faces are 0."""
    fx = np.zeros(domain.shape("x-face"))
    fy = np.zeros(domain.shape("y-face"))
    wx = weight[:, 1:, :] + weight[:, :-1, :]
    gx = field[:, 1:, :] - field[:, :-1, :]
    fx[1:-1] = (wx[0] * gx[0] + wx[1] * gx[1] + wx[2] * gx[2]) * (0.5 / domain.hx)
    wy = weight[:, :, 1:] + weight[:, :, :-1]
    gy = field[:, :, 1:] - field[:, :, :-1]
    fy[:, 1:-1] = (wy[0] * gy[0] + wy[1] * gy[1] + wy[2] * gy[2]) * (0.5 / domain.hy)
    return fx, fy


def kelvin_force_faces(Hext: Vec3Field, M: Vec3Field) -> VelocityField:
    """``(grad H)^T M`` on the velocity faces: face differences of ``H`` dotted
    with the face average of ``M``. Wall faces are 0."""
    fx, fy = _face_pairing(M.data, Hext.data, M.domain)
    return VelocityField(M.domain, fx, fy)


def magnetic_force_faces(M: Vec3Field) -> VelocityField:
    """``-(grad M)^T Delta M`` on the velocity faces.

    This differs from ``-div((grad M)^T grad M)`` by the gradient of
    ``|grad M|^2 / 2``, which the projection absorbs into the pressure. The face
    form is the exact negative adjoint of the central advection of ``M``
    weighted by ``Delta M``, so the exchange work cancels in the discrete energy
    balance.
    """
    L = laplacian(M, BcMode.NEUMANN_ZERO).data
    fx, fy = _face_pairing(L, M.data, M.domain)
    return VelocityField(M.domain, -fx, -fy)


def momentum_forces(F: MatrixField | None, M: Vec3Field | None, Hext: Vec3Field | None,
                    magnetic_form: str = "energy") -> VelocityField:
    """Sum of the explicit forces: elastic stress divergence, magnetic and Kelvin forces."""
    doms = [x.domain for x in (F, M) if x is not None]
    if not doms:
        raise ValueError("need F or M to know the domain")
    f = VelocityField.zeros(doms[0])
    if F is not None:
        f = f + divergence_matrix(elastic_stress(F))
    if M is not None:
        if magnetic_form == "energy":
            f = f + magnetic_force_faces(M)
        elif magnetic_form == "stress":
            f = f - divergence_matrix(magnetic_stress(M))
        else:
            raise ValueError(f"unknown magnetic force form {magnetic_form!r}")
        if Hext is not None:
            f = f + kelvin_force_faces(Hext, M)
    return f


@dataclass
class MomentumResult:
    u: VelocityField
    p: ScalarField
    u_star: VelocityField


def momentum_step(u: VelocityField, F: MatrixField | None, M: Vec3Field | None,
                  Hext: Vec3Field | None, dt: float, params: SimParams,
                  body_force: VelocityField | None = None, magnetic_form: str = "energy",
                  step_index: int | None = None) -> MomentumResult:
    """Advance the velocity by one IMEX step followed by projection."""
    rhs = u
    if u.max_speed() > 0:
        rhs = rhs - dt * advect(u, u, params.advection)
    if F is not None or M is not None:
        rhs = rhs + dt * momentum_forces(F, M, Hext, magnetic_form)
    if body_force is not None:
        rhs = rhs + dt * body_force
    b = dt * params.eps if params.hyperviscosity_on else 0.0
    try:
        u_star = helmholtz_solve(rhs, dt * params.viscosity, b, params.helmholtz_tol, params.solver)
        u_new, phi = project_div_free(u_star, params.poisson_tol, params.solver)
    except MvsimError as exc:
        exc.stage = "momentum"
        exc.step = step_index
        raise
    return MomentumResult(u_new, phi * (1.0 / dt), u_star)
