"""Time loop and diagnostics output.

Per time level the sub-steps run in a fixed order: magnetization (old
velocity), deformation gradient (old velocity), velocity (new M and F).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..deformation import div_matrix_monitor, transport_limit, transport_step
from ..energetics import CSV_HEADER, EnergyLedger, accumulate_dissipation, energy_residual, total_energy
from ..errors import MvsimError
from ..fields import ScalarField, StateSnapshot, write_field
from ..incompressible import set_workers
from ..magnetization import PenaltySpec, llg_step_detail, lyapunov_G, sphere_defect, stability_limit
from ..momentum import momentum_step
from ..operators import divergence_vector
from .config import RunConfig
from .scenarios import Scenario, build_scenario


@dataclass
class RunResult:
    dt: float
    steps: int
    rows: list[dict]
    final: StateSnapshot
    ledger: EnergyLedger
    ledger_0: EnergyLedger
    # per time level, index 0 is the initial state
    max_abs_M: np.ndarray
    lyapunov: np.ndarray
    defect_l2: np.ndarray
    snapshots: list[StateSnapshot] = field(default_factory=list)

    @property
    def summary(self) -> str:
        return (f"OK t_end={self.final.t:.12g} residual={self.ledger.residual:.6e} "
                f"maxM={self.max_abs_M[-1]:.12g}")


def _tag(exc: MvsimError, stage: str, step: int) -> MvsimError:
    if exc.stage is None:
        exc.stage = stage
    if exc.step is None:
        exc.step = step
    return exc


def choose_dt(cfg: RunConfig, state: StateSnapshot) -> tuple[float, int]:
    """Step size and step count; the step is shrunk so that ``t_end`` is hit exactly."""
    if cfg.dt is None:
        limits = [np.inf]
        if cfg.evolve_M:
            limits.append(stability_limit(state.M, state.u, cfg.eps, 1.0))
        if cfg.evolve_F:
            limits.append(transport_limit(state.u, cfg.f_diffusion, 1.0))
        target = cfg.cfl_safety * min(limits)
        if not np.isfinite(target):
            target = cfg.t_end / 100
    else:
        target = cfg.dt
    steps = max(1, math.ceil(cfg.t_end / target - 1e-9))
    return cfg.t_end / steps, steps


def _row(ledger: EnergyLedger, state: StateSnapshot) -> dict:
    _, maxM, _ = sphere_defect(state.M, 1.0)
    div_u = float(np.max(np.abs(divergence_vector(state.u).data)))
    div_F, _ = div_matrix_monitor(state.F)
    out = {k: v for k, v in ledger.as_dict().items()}
    out.update(max_abs_M=maxM, div_u_linf=div_u, div_F_l2=div_F)
    return out


def format_csv(rows: list[dict]) -> str:
    cols = CSV_HEADER.split(",")
    lines = [CSV_HEADER]
    for r in rows:
        # "+ 0.0" turns a negative zero into a positive one
        lines.append(",".join(f"{float(r[c]) + 0.0:.17g}" for c in cols))
    return "\n".join(lines) + "\n"


def write_snapshot(out_dir: Path, step: int, state: StateSnapshot) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"snap_{step:06d}"
    t = state.t
    write_field(out_dir / f"{stem}_u_x.txt", "u_x", ScalarField(state.domain, "x-face", state.u.u), t)
    write_field(out_dir / f"{stem}_u_y.txt", "u_y", ScalarField(state.domain, "y-face", state.u.v), t)
    write_field(out_dir / f"{stem}_p.txt", "p", state.p, t)
    write_field(out_dir / f"{stem}_F.txt", "F", state.F, t)
    write_field(out_dir / f"{stem}_M.txt", "M", state.M, t)


def run_simulation(cfg: RunConfig, out_dir: str | Path | None = None, write: bool = True,
                   keep_snapshots: bool = False, body_force=None,
                   scenario: Scenario | None = None) -> RunResult:
    """Run ``cfg`` to ``t_end``. Files go under ``out_dir`` (default ``cfg.output_dir``).

    ``body_force(t)`` returns a VelocityField added to the momentum forces at
    the new time level; ``scenario`` replaces the preset initial data.
    """
    set_workers(cfg.effective_threads())
    sc = scenario if scenario is not None else build_scenario(cfg)
    d = cfg.domain()
    state = StateSnapshot(0.0, sc.u0, ScalarField.zeros(d), sc.F0, sc.M0)
    dt, steps = choose_dt(cfg, state)
    params = cfg.sim_params(dt)
    spec = PenaltySpec(cfg.eps, cfg.semi_implicit)
    H = sc.Hext
    out = Path(out_dir if out_dir is not None else cfg.output_dir)

    ledger0 = total_energy(state, cfg.eps)
    ledger = ledger0
    rows = [_row(ledger, state)]
    maxM = [sphere_defect(state.M, 1.0)[1]]
    lyap = [lyapunov_G(state.M)]
    defect = [sphere_defect(state.M, 1.0)[0]]
    snaps = [state] if keep_snapshots else []
    if write and cfg.snapshot_stride:
        write_snapshot(out, 0, state)

    for n in range(1, steps + 1):
        M, F, u, p = state.M, state.F, state.u, state.p
        u_star = Mdot = None
        try:
            if cfg.evolve_M:
                res = llg_step_detail(M, state.u, H, dt, spec, cfg.cutoff_k, cfg.advection,
                                      cfg.cfl_safety)
                M, Mdot = res.M, res.V
        except MvsimError as exc:
            raise _tag(exc, "magnetization", n)
        try:
            if cfg.evolve_F:
                F = transport_step(F, state.u, dt, cfg.f_diffusion, cfg.advection, cfg.cfl_safety)
        except MvsimError as exc:
            raise _tag(exc, "deformation", n)
        try:
            if cfg.evolve_u:
                bf = body_force(n * dt) if body_force is not None else None
                mres = momentum_step(state.u, F, M, H, dt, params, bf, cfg.magnetic_form, n)
                u, p, u_star = mres.u, mres.p, mres.u_star
        except MvsimError as exc:
            raise _tag(exc, "momentum", n)
        new = StateSnapshot(n * dt, u, p, F, M)
        ledger = accumulate_dissipation(ledger, state, new, dt, params, H, u_star, Mdot)
        ledger = replace(ledger, residual=energy_residual(ledger, ledger0))
        state = new
        l2, mm, _ = sphere_defect(M, 1.0)
        maxM.append(mm)
        lyap.append(lyapunov_G(M))
        defect.append(l2)
        if n % cfg.output_stride == 0 or n == steps:
            rows.append(_row(ledger, state))
            if keep_snapshots:
                snaps.append(state)
        if write and cfg.snapshot_stride and (n % cfg.snapshot_stride == 0):
            write_snapshot(out, n, state)

    result = RunResult(dt, steps, rows, state, ledger, ledger0, np.array(maxM), np.array(lyap),
                       np.array(defect), snaps)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / cfg.csv_path).write_text(format_csv(rows))
    return result
