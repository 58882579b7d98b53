"""Penalized convective Landau-Lifshitz-Gilbert stepping.

The update solves, cell by cell,

    V - m x V = 2 Delta M - (|M|^2 - 1) M / eps - 2 M x (M x H),
    M+ = M + dt (V - (u . grad) M),

where ``V`` is the discrete material derivative and ``m = Theta_k(|M|) M``.
The cross-product system is inverted in closed form, so the step is
explicit apart from that pointwise 3x3 solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParameterError, PreconditionError
from .fields import Vec3Field, VelocityField, l2_norm, ScalarField, CELL
from .operators import BcMode, advect, cell_gradient, laplacian


@dataclass(frozen=True)
class PenaltySpec:
    eps: float
    semi_implicit: bool = False

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError("eps must be positive")


# --- pointwise kernels ----------------------------------------------------


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product over the leading axis of length 3."""
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def skew_solve(m, g) -> np.ndarray:
    """Solve ``x - m x x = g`` (``x`` crossed from the left by ``m``).

    ``m`` and ``g`` have the component axis first and broadcast over the rest.
    Closed form: ``x = (g + m x g + m (m . g)) / (1 + |m|^2)``.
    """
    m = np.asarray(m, dtype=float)
    g = np.asarray(g, dtype=float)
    return (g + cross(m, g) + m * dot(m, g)) / (1.0 + dot(m, m))


def theta_cutoff(s, k: float):
    """Piecewise linear cut-off ``Theta(s / k)``: 1, then ``2 - s/k``, then 0."""
    if not k > 0:
        raise ParameterError("cut-off parameter k must be positive")
    r = np.asarray(s, dtype=float) / k
    out = np.clip(2.0 - r, 0.0, 1.0)
    return out if out.ndim else float(out)


def penalty_g(s):
    out = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return out if out.ndim else float(out)


def penalty_G(s):
    """Primitive of :func:`penalty_g` with ``G(0) = 0``."""
    s = np.asarray(s, dtype=float)
    out = np.where(s <= 0, 0.0, np.where(s < 1, 0.5 * s * s, s - 0.5))
    return out if out.ndim else float(out)


# --- field-level operations -----------------------------------------------


def _hdata(M: Vec3Field, Hext) -> np.ndarray:
    if Hext is None:
        return np.zeros_like(M.data)
    if Hext.domain != M.domain:
        raise ValueError("Hext and M live on different domains")
    return Hext.data


def llg_rhs(M: Vec3Field, Hext: Vec3Field | None, spec: PenaltySpec) -> Vec3Field:
    """Driving field ``2 Delta M - (|M|^2 - 1) M / eps - 2 M x (M x H)``."""
    H = _hdata(M, Hext)
    m = M.data
    lap = laplacian(M, BcMode.NEUMANN_ZERO).data
    out = 2.0 * lap - (dot(m, m) - 1.0) * m / spec.eps - 2.0 * cross(m, cross(m, H))
    return Vec3Field(M.domain, out)


def stability_limit(M: Vec3Field, u: VelocityField | None, eps: float, cfl_safety: float = 1.0) -> float:
    """Largest admissible explicit step ``cfl * min(h^2/8, eps/4, h/max|u|)``."""
    h = M.domain.h
    limit = min(h * h / 8.0, eps / 4.0)
    if u is not None:
        speed = u.max_speed()
        if speed > 0:
            limit = min(limit, h / speed)
    return cfl_safety * limit


@dataclass
class LlgStepResult:
    M: Vec3Field
    V: Vec3Field  # discrete material derivative (M+ - M)/dt + (u . grad) M


def llg_step_detail(M: Vec3Field, u: VelocityField | None, Hext: Vec3Field | None, dt: float,
                    spec: PenaltySpec, cutoff_k: float = 0.0, advection: str = "upwind",
                    cfl_safety: float = 1.0, check_stability: bool = True) -> LlgStepResult:
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if check_stability:
        limit = stability_limit(M, u, spec.eps, cfl_safety)
        if dt > limit * (1 + 1e-12):
            raise ConfigError(f"LLG step dt={dt:.3e} exceeds stability limit {limit:.3e}")
    d = M.domain
    mdat = M.data
    m2 = dot(mdat, mdat)
    mvec = mdat if cutoff_k <= 0 else theta_cutoff(np.sqrt(m2), cutoff_k) * mdat
    adv = advect(u, M, advection).data if u is not None else np.zeros_like(mdat)
    rest = 2.0 * laplacian(M, BcMode.NEUMANN_ZERO).data
    if Hext is not None:
        rest -= 2.0 * cross(mdat, cross(mdat, _hdata(M, Hext)))
    c = (m2 - 1.0) / spec.eps
    if spec.semi_implicit:
        # penalty coefficient frozen at the old |M|^2, applied to M+ = M + dt (V - adv)
        denom = 1.0 + c * dt
        V = skew_solve(mvec / denom, (rest - c * (mdat - dt * adv)) / denom)
    else:
        V = skew_solve(mvec, rest - c * mdat)
    Mnew = mdat + dt * (V - adv)
    return LlgStepResult(Vec3Field(d, Mnew), Vec3Field(d, V))


def llg_step(M: Vec3Field, u: VelocityField | None, Hext: Vec3Field | None, dt: float,
             spec: PenaltySpec, cutoff_k: float = 0.0, **kwargs) -> Vec3Field:
    """One explicit step; raises ``ConfigError`` when ``dt`` exceeds the stability limit."""
    return llg_step_detail(M, u, Hext, dt, spec, cutoff_k, **kwargs).M


# --- sphere-constrained identities ----------------------------------------


def llg_form_eval(M: Vec3Field, u: VelocityField | None, Hext: Vec3Field | None, Mdot: Vec3Field,
                  sphere_tol: float = 1e-8, advection: str = "central"):
    """Residuals of three equivalent sphere-valued LLG forms.

    With ``W = Delta M + H`` and ``V = Mdot + (u . grad) M``:

    * form 1: ``V = -M x W - M x (M x W)``
    * form 2: ``V = -M x W + W + M (|grad M|^2 - M . H)``
    * form 3: ``V = -2 M x W + M x V``

    Returns ``(r1, r2, r3)`` with ``r_k = rhs_k - V``. The forms coincide only
    when ``|M| = 1``; form 2 additionally uses ``M . Delta M = -|grad M|^2``, which
    the discrete operators satisfy up to O(h^2).
    """
    norms = M.norm()
    bad = np.abs(norms - 1.0)
    if bad.max() > sphere_tol:
        i, j = np.unravel_index(np.argmax(bad), bad.shape)
        raise PreconditionError(f"|M| deviates from 1 by {bad[i, j]:.3e} at cell ({i}, {j})")
    m = M.data
    H = _hdata(M, Hext)
    W = laplacian(M, BcMode.NEUMANN_ZERO).data + H
    V = Mdot.data + (advect(u, M, advection).data if u is not None else 0.0)
    grad = cell_gradient(M)
    grad_sq = np.sum(grad**2, axis=(0, 1))
    mxw = cross(m, W)
    r1 = -mxw - cross(m, mxw) - V
    r2 = -mxw + W + m * (grad_sq - dot(m, H)) - V
    r3 = -2.0 * mxw + cross(m, V) - V
    d = M.domain
    return Vec3Field(d, r1), Vec3Field(d, r2), Vec3Field(d, r3)


def sphere_defect(M: Vec3Field, eps: float) -> tuple[float, float, float]:
    """``(|| |M|^2 - 1 ||_L2, max |M|, (4 eps)^-1 || |M|^2 - 1 ||^2)``."""
    m2 = dot(M.data, M.data)
    s = m2 - 1.0
    l2 = float(np.sqrt(np.sum(s * s) * M.domain.cell_volume))
    return l2, float(np.sqrt(np.max(m2))), l2 * l2 / (4.0 * eps)


def lyapunov_G(M: Vec3Field) -> float:
    """``int G(|M|^2 - 1)``; vanishes exactly when ``|M| <= 1`` everywhere."""
    s = dot(M.data, M.data) - 1.0
    return float(np.sum(penalty_G(s)) * M.domain.cell_volume)
