"""Energy bookkeeping: stored energy, accumulated dissipation and work, the
energy-inequality residual, and the eps-sweep diagnostics.

The discrete Lyapunov functional that the LLG update decreases is

    E = 1/2 |u|^2 + 1/2 |F|^2 + 1/2 |grad M|^2 + (8 eps)^-1 | |M|^2 - 1 |^2,

i.e. it carries half of the reported ``e_penalty = (4 eps)^-1 | |M|^2 - 1 |^2``.
The residual is built from ``E`` so that it telescopes against the scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .fields import SimParams, StateSnapshot, Vec3Field, VelocityField, l2_inner, l2_norm
from .magnetization import cross, sphere_defect
from .momentum import kelvin_force_faces
from .operators import advect, clamped_quadratic_forms

CSV_HEADER = ("t,e_kin,e_elastic,e_exchange,e_penalty,d_visc,d_hyper,d_llg,work_ext,"
              "residual,max_abs_M,div_u_linf,div_F_l2")


@dataclass(frozen=True)
class EnergyLedger:
    t: float = 0.0
    e_kin: float = 0.0
    e_elastic: float = 0.0
    e_exchange: float = 0.0
    e_penalty: float = 0.0
    d_visc: float = 0.0
    d_hyper: float = 0.0
    d_llg: float = 0.0
    work_llg: float = 0.0
    work_kelvin: float = 0.0
    work_dtM: float = 0.0
    residual: float = 0.0

    @property
    def work_ext(self) -> float:
        """Power of the external field on the magnetization plus the Kelvin-force power."""
        return self.work_llg + self.work_kelvin

    @property
    def energy(self) -> float:
        """Stored energy in the form the scheme dissipates (half of ``e_penalty``)."""
        return self.e_kin + self.e_elastic + self.e_exchange + 0.5 * self.e_penalty

    @property
    def dissipation(self) -> float:
        return self.d_visc + self.d_hyper + self.d_llg

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["work_ext"] = self.work_ext
        return out


def exchange_energy(M: Vec3Field) -> float:
    """``1/2 |grad M|^2`` from the face differences of the Neumann Laplacian,
    i.e. exactly ``-1/2 <laplacian(M), M>``."""
    d = M.domain
    gx = np.diff(M.data, axis=-2) / d.hx
    gy = np.diff(M.data, axis=-1) / d.hy
    return 0.5 * float(np.sum(gx**2) + np.sum(gy**2)) * d.cell_volume


def total_energy(state: StateSnapshot, eps: float) -> EnergyLedger:
    """Instantaneous components; the cumulative ones are zero."""
    _, _, pen = sphere_defect(state.M, eps)
    return EnergyLedger(
        t=state.t,
        e_kin=0.5 * l2_inner(state.u, state.u),
        e_elastic=0.5 * l2_inner(state.F, state.F),
        e_exchange=exchange_energy(state.M),
        e_penalty=pen,
    )


def material_derivative(state_old: StateSnapshot, state_new: StateSnapshot, dt: float,
                        advection: str = "upwind") -> Vec3Field:
    """``(M+ - M)/dt + (u . grad) M`` with the old velocity and magnetization."""
    rate = (state_new.M - state_old.M) * (1.0 / dt)
    if state_old.u.max_speed() == 0.0:
        return rate
    return rate + advect(state_old.u, state_old.M, advection)


def accumulate_dissipation(ledger: EnergyLedger, state_old: StateSnapshot, state_new: StateSnapshot,
                           dt: float, params: SimParams | None = None,
                           Hext: Vec3Field | None = None,
                           u_implicit: VelocityField | None = None,
                           Mdot: Vec3Field | None = None) -> EnergyLedger:
    """Add one step of dissipation and work (rectangle rule) and refresh the
    instantaneous components at ``state_new``.

    ``u_implicit`` is the velocity the implicit viscous operator acted on
    (before projection). Viscous dissipation and force power are evaluated
    there, because projection adds a pressure gradient whose tangential wall
    values the clamped operators do not see as dissipation of the scheme.
    Defaults to ``state_new.u``. ``Mdot`` is the material derivative of ``M``
    over the step when the caller already has it.
    """
    params = params or SimParams()
    u = u_implicit if u_implicit is not None else state_new.u
    q_visc, q_hyper = clamped_quadratic_forms(u)
    d_visc = params.viscosity * dt * q_visc
    d_hyper = params.eps * dt * q_hyper if params.hyperviscosity_on else 0.0
    V = Mdot if Mdot is not None else material_derivative(state_old, state_new, dt, params.advection)
    d_llg = 0.5 * dt * l2_inner(V, V)
    work_llg = work_kelvin = work_dtM = 0.0
    if Hext is not None:
        Mo = state_old.M.data
        drive = Vec3Field(state_old.domain, -cross(Mo, cross(Mo, Hext.data)))
        work_llg = dt * l2_inner(drive, V)
        work_kelvin = dt * l2_inner(kelvin_force_faces(Hext, state_new.M), u)
        work_dtM = l2_inner(Hext, state_new.M - state_old.M)
    now = total_energy(state_new, params.eps)
    return replace(
        now,
        d_visc=ledger.d_visc + d_visc,
        d_hyper=ledger.d_hyper + d_hyper,
        d_llg=ledger.d_llg + d_llg,
        work_llg=ledger.work_llg + work_llg,
        work_kelvin=ledger.work_kelvin + work_kelvin,
        work_dtM=ledger.work_dtM + work_dtM,
        residual=ledger.residual,
    )


def energy_residual(ledger: EnergyLedger, ledger_0: EnergyLedger) -> float:
    """``[E(t) + D(0, t)] - [E(0) + W(0, t)]``; nonpositive for exact solutions."""
    return (ledger.energy + ledger.dissipation) - (ledger_0.energy + ledger.work_ext)


def eps_sweep_order(results: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of ``log(defect)`` against ``log(eps)``."""
    if len(results) < 3:
        raise ParameterError("need at least 3 (eps, defect) pairs")
    eps = np.array([r[0] for r in results], dtype=float)
    defect = np.array([r[1] for r in results], dtype=float)
    if len(np.unique(eps)) < 3:
        raise ParameterError("need at least 3 distinct eps values")
    if np.log10(eps.max() / eps.min()) < 2 - 1e-12:
        raise ParameterError("eps values must span at least two decades")
    if np.any(eps <= 0) or np.any(defect <= 0):
        raise ParameterError("eps and defect values must be positive")
    slope, _ = np.polyfit(np.log(eps), np.log(defect), 1)
    return float(slope)


def _concentration_norms(state: StateSnapshot) -> tuple[float, float]:
    return l2_norm(state.F) ** 2, 2.0 * exchange_energy(state.M)


def defect_proxy(runs: Sequence[Sequence[StateSnapshot]]) -> np.ndarray:
    """Concentration proxy between consecutive eps levels.

    Entry ``[l, n]`` is ``| |F_l|^2 - |F_l+1|^2 | + | |grad M_l|^2 - |grad M_l+1|^2 |``
    at output ``n``. Runs must share grid and output times.
    """
    runs = [list(r) for r in runs]
    if len(runs) < 2:
        return np.zeros((0, len(runs[0]) if runs else 0))
    n = len(runs[0])
    for r in runs:
        if len(r) != n:
            raise ShapeError("runs have different numbers of outputs")
        for s, s0 in zip(r, runs[0]):
            if s.domain != s0.domain or abs(s.t - s0.t) > 1e-12 * max(1.0, abs(s0.t)):
                raise ShapeError("runs do not share grid and output times")
    norms = np.array([[_concentration_norms(s) for s in r] for r in runs])  # (L, n, 2)
    return np.abs(np.diff(norms, axis=0)).sum(axis=-1)
