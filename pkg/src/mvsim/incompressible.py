"""Pressure projection and the implicit viscous/hyperviscous velocity solve.

Two back ends are available. ``fft`` diagonalizes the operators exactly with
real trigonometric transforms (DCT-II for Neumann cell data, DST-I along the
Dirichlet node direction and DST-II along the odd-ghost cell direction of a
velocity component). ``cg`` runs Jacobi-preconditioned conjugate gradients.
Both finish with an explicit residual check.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, cg

from .errors import PreconditionError, SolverError
from .fields import CELL, ScalarField, VelocityField, l2_norm
from .operators import (BcMode, divergence_vector, gradient_scalar, laplacian, laplacian_matrix,
                        velocity_laplacian_matrix)

EPS = np.finfo(float).eps
_WORKERS = 1


def set_workers(n: int) -> None:
    """Thread count for the transforms; 1 is the deterministic reference mode."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def _eig_neumann(n: int, h: float) -> np.ndarray:
    k = np.arange(n)
    return -(2.0 - 2.0 * np.cos(np.pi * k / n)) / h**2


def _eig_dirichlet_nodes(n: int, h: float) -> np.ndarray:
    # n cells, n - 1 interior nodes
    k = np.arange(1, n)
    return -(2.0 - 2.0 * np.cos(np.pi * k / n)) / h**2


def _eig_odd_cells(n: int, h: float) -> np.ndarray:
    k = np.arange(1, n + 1)
    return -(2.0 - 2.0 * np.cos(np.pi * k / n)) / h**2


@lru_cache(maxsize=16)
def _neumann_symbol(domain) -> np.ndarray:
    lam = _eig_neumann(domain.nx, domain.hx)[:, None] + _eig_neumann(domain.ny, domain.hy)[None, :]
    lam[0, 0] = 1.0  # the constant mode is removed separately
    return lam


def _max_iter(domain) -> int:
    return 10 * (domain.nx + domain.ny)


# --- Poisson with homogeneous Neumann data --------------------------------


def solve_poisson_neumann(rhs: ScalarField, tol: float = 1e-10, method: str = "fft",
                          maxiter: int | None = None) -> ScalarField:
    """Solve ``laplacian(phi, NEUMANN_ZERO) = rhs`` with ``mean(phi) = 0``.

    ``maxiter`` applies to ``cg`` only and defaults to ``10 * (nx + ny)``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if rhs.layout != CELL:
        raise ValueError("Poisson right-hand side must be cell-centered")
    d = rhs.domain
    norm = l2_norm(rhs)
    if norm == 0.0:
        return rhs.zeros_like()
    if abs(rhs.mean()) > 1e-10 * norm:
        raise PreconditionError(f"incompatible Neumann data: mean {rhs.mean():.3e}, norm {norm:.3e}")
    b = rhs.data - np.mean(rhs.data)
    if method == "fft":
        c = sfft.dctn(b, type=2, norm="ortho", workers=_WORKERS)
        c /= _neumann_symbol(d)
        c[0, 0] = 0.0
        phi = sfft.idctn(c, type=2, norm="ortho", workers=_WORKERS)
    elif method == "cg":
        phi = _cg(lambda x: -laplacian(ScalarField(d, CELL, x), BcMode.NEUMANN_ZERO).data,
                  -b, _neumann_diag(d), tol, maxiter or _max_iter(d))
    else:
        raise ValueError(f"unknown solver {method!r}")
    phi = phi - np.mean(phi)
    out = ScalarField(d, CELL, phi)
    scale = 8.0 / d.h**2
    r = laplacian_matrix(d, CELL) @ phi.ravel() - b.ravel()
    res = float(np.sqrt(r @ r * d.cell_volume))
    if res > tol * norm + 64 * EPS * scale * l2_norm(out):
        raise SolverError("Poisson solve did not converge", res / norm)
    return out


def _neumann_diag(d) -> np.ndarray:
    diag = np.full((d.nx, d.ny), 2.0 / d.hx**2 + 2.0 / d.hy**2)
    diag[[0, -1], :] -= 1.0 / d.hx**2
    diag[:, [0, -1]] -= 1.0 / d.hy**2
    return diag


def _cg(apply, b: np.ndarray, diag: np.ndarray, tol: float, maxiter: int | None) -> np.ndarray:
    shape = b.shape
    n = b.size
    A = LinearOperator((n, n), matvec=lambda x: apply(x.reshape(shape)).ravel())
    P = LinearOperator((n, n), matvec=lambda x: x / diag.ravel())
    x, info = cg(A, b.ravel(), rtol=tol * 0.1, atol=0.0, maxiter=maxiter, M=P)
    if info != 0:
        r = np.linalg.norm(apply(x.reshape(shape)).ravel() - b.ravel()) / np.linalg.norm(b)
        raise SolverError(f"conjugate gradients stopped after {maxiter} iterations", r)
    return x.reshape(shape)


def project_div_free(u: VelocityField, tol: float = 1e-10, method: str = "fft",
                     maxiter: int | None = None):
    """Helmholtz-Hodge projection: returns ``(u - grad phi, phi)``.

    Normal wall faces are zeroed first, which makes the divergence sum to zero.
    """
    w = u.with_walls_zeroed()
    div = divergence_vector(w)
    if l2_norm(div) == 0.0:
        return w, ScalarField.zeros(u.domain)
    # remove the round-off mean so the compatibility check sees only genuine data
    div = ScalarField(div.domain, CELL, div.data - np.mean(div.data))
    phi = solve_poisson_neumann(div, tol, method, maxiter)
    return w - gradient_scalar(phi), phi


# --- implicit velocity operator -------------------------------------------


def _apply_flat(domain, x: np.ndarray, a: float, b: float) -> np.ndarray:
    """Operator on the concatenated, wall-zeroed velocity components."""
    L = velocity_laplacian_matrix(domain)
    lap = L @ x
    out = x - a * lap if a else x.copy()
    if b:
        out -= b * (L @ (L @ lap))
    return out


def _split(domain, x: np.ndarray) -> VelocityField:
    nu = (domain.nx + 1) * domain.ny
    return VelocityField(domain, x[:nu].reshape(domain.shape("x-face")),
                         x[nu:].reshape(domain.shape("y-face")))


def _join(u: VelocityField) -> np.ndarray:
    return np.concatenate([u.u.ravel(), u.v.ravel()])


def helmholtz_apply(u: VelocityField, a: float, b: float) -> VelocityField:
    """``(I - a Delta + b (-Delta)^3) u`` on clamped velocities."""
    w = u.with_walls_zeroed()
    if not (a or b):
        return w
    return _split(u.domain, _apply_flat(u.domain, _join(w), a, b))


@lru_cache(maxsize=16)
def _helmholtz_symbols(domain, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    lam_u = _eig_dirichlet_nodes(domain.nx, domain.hx)[:, None] + _eig_odd_cells(domain.ny, domain.hy)[None, :]
    lam_v = _eig_odd_cells(domain.nx, domain.hx)[:, None] + _eig_dirichlet_nodes(domain.ny, domain.hy)[None, :]
    return _helmholtz_symbol(lam_u, a, b), _helmholtz_symbol(lam_v, a, b)


def _helmholtz_symbol(lam: np.ndarray, a: float, b: float) -> np.ndarray:
    return 1.0 - a * lam + b * (-lam) ** 3


def helmholtz_solve(rhs: VelocityField, a: float, b: float, tol: float = 1e-10,
                    method: str = "fft", maxiter: int | None = None) -> VelocityField:
    """Solve ``(I - a Delta + b (-Delta)^3) u = rhs`` for a clamped velocity ``u``.

    Wall faces of ``rhs`` are ignored and those of ``u`` are exactly zero.
    """
    if a < 0 or b < 0:
        raise ValueError("helmholtz_solve needs a >= 0 and b >= 0")
    if not tol > 0:
        raise ValueError("tol must be positive")
    d = rhs.domain
    r = rhs.with_walls_zeroed()
    if a == 0 and b == 0:
        return r
    if method == "fft":
        sym_u, sym_v = _helmholtz_symbols(d, a, b)
        u = np.zeros_like(r.u)
        c = sfft.dst(sfft.dst(r.u[1:-1], type=1, axis=0, norm="ortho", workers=_WORKERS),
                     type=2, axis=1, norm="ortho", workers=_WORKERS)
        c /= sym_u
        u[1:-1] = sfft.idst(sfft.idst(c, type=2, axis=1, norm="ortho", workers=_WORKERS),
                            type=1, axis=0, norm="ortho", workers=_WORKERS)
        v = np.zeros_like(r.v)
        c = sfft.dst(sfft.dst(r.v[:, 1:-1], type=1, axis=1, norm="ortho", workers=_WORKERS),
                     type=2, axis=0, norm="ortho", workers=_WORKERS)
        c /= sym_v
        v[:, 1:-1] = sfft.idst(sfft.idst(c, type=2, axis=0, norm="ortho", workers=_WORKERS),
                               type=1, axis=1, norm="ortho", workers=_WORKERS)
        out = VelocityField(d, u, v)
    elif method == "cg":
        nu = r.u.size
        diag = _helmholtz_diag(d, a, b)

        def apply(x):
            w = VelocityField(d, x[:nu].reshape(r.u.shape), x[nu:].reshape(r.v.shape))
            y = helmholtz_apply(w, a, b)
            # keep the wall unknowns decoupled so the system stays SPD
            return np.concatenate([np.where(_wall_mask_u(d), x[:nu].reshape(r.u.shape), y.u).ravel(),
                                   np.where(_wall_mask_v(d), x[nu:].reshape(r.v.shape), y.v).ravel()])

        x = _cg(apply, np.concatenate([r.u.ravel(), r.v.ravel()]), diag, tol, maxiter or _max_iter(d))
        out = VelocityField(d, x[:nu].reshape(r.u.shape), x[nu:].reshape(r.v.shape)).with_walls_zeroed()
    else:
        raise ValueError(f"unknown solver {method!r}")
    _check_helmholtz(out, r, a, b, tol)
    return out


def helmholtz_norm_bound(domain, a: float, b: float) -> float:
    """Largest eigenvalue of the implicit velocity operator."""
    lam = -4.0 / domain.hx**2 - 4.0 / domain.hy**2
    return float(_helmholtz_symbol(np.asarray(lam), a, b))


def _check_helmholtz(out: VelocityField, rhs: VelocityField, a: float, b: float, tol: float) -> None:
    norm = l2_norm(rhs)
    if norm == 0.0:
        return
    d = out.domain
    x = _join(out)
    r = _apply_flat(d, x, a, b) - _join(rhs)
    res = float(np.sqrt(r @ r * d.cell_volume))
    # rounding in forming A x alone is about eps * |A| * |x|
    floor = 64 * EPS * helmholtz_norm_bound(d, a, b) * float(np.sqrt(x @ x * d.cell_volume))
    if res > tol * norm + floor:
        raise SolverError("implicit velocity solve did not converge", res / norm)


def _wall_mask_u(d) -> np.ndarray:
    m = np.zeros(d.shape("x-face"), dtype=bool)
    m[[0, -1], :] = True
    return m


def _wall_mask_v(d) -> np.ndarray:
    m = np.zeros(d.shape("y-face"), dtype=bool)
    m[:, [0, -1]] = True
    return m


def _helmholtz_diag(d, a: float, b: float) -> np.ndarray:
    lam = 2.0 / d.hx**2 + 2.0 / d.hy**2
    # Jacobi scaling with the interior stencil centre of each term
    centre = 1.0 + a * lam + b * lam**3
    du = np.where(_wall_mask_u(d), 1.0, centre)
    dv = np.where(_wall_mask_v(d), 1.0, centre)
    return np.concatenate([du.ravel(), dv.ravel()])
