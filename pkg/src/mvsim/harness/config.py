"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys and malformed values raise :class:`ConfigError` before anything
is allocated. ``serialize(parse(text))`` parses back to an equal config.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

from ..errors import ConfigError
from ..fields import DomainSpec, SimParams

SCENARIO_PARTS = ("rest", "shear", "vortex", "bubble", "offsphere-relax")
HEXT_PRESETS = ("zero", "uniform", "gradient")
OFFSPHERE_PROFILES = ("uniform", "vortex")
VORTEX_PROFILES = ("cell", "bump")
F0_PRESETS = ("identity", "curl", "zero")


@dataclass(frozen=True)
class RunConfig:
    # domain
    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 32
    ny: int = 32
    # physics and numerics
    eps: float = 1e-2
    f_diffusion: float = 0.0
    dt: float | None = None  # None means "auto": cfl_safety times the stability limit
    t_end: float = 0.1
    cfl_safety: float = 0.5
    poisson_tol: float = 1e-10
    helmholtz_tol: float = 1e-10
    hyperviscosity_on: bool = True
    cutoff_k: float = 0.0
    viscosity: float = 1.0
    semi_implicit: bool = False
    advection: str = "upwind"
    solver: str = "fft"
    magnetic_form: str = "energy"
    # couplings
    evolve_u: bool = True
    evolve_F: bool = True
    evolve_M: bool = True
    # initial data
    scenario: str = "vortex+bubble"
    vortex_amp: float = 1.0
    vortex_profile: str = "cell"
    vortex_radius: float = 0.4
    shear_amp: float = 1.0
    bubble_radius: float = 0.3
    bubble_angle: float = 1.0
    offsphere_amp: float = 2.0
    offsphere_profile: str = "uniform"
    f0: str = "identity"
    f0_amp: float = 0.1
    mollify_delta: float = 0.0
    # external field
    hext: str = "zero"
    hext_amp: float = 0.0
    # output
    output_dir: str = "."
    csv_path: str = "diagnostics.csv"
    output_stride: int = 1
    snapshot_stride: int = 0
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.validate()

    # --- validation -------------------------------------------------------

    def validate(self) -> None:
        try:
            self.domain()
            self.sim_params(1.0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive or 'auto'")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        parts = self.scenario_parts()
        for p in parts:
            if p not in SCENARIO_PARTS:
                raise ConfigError(f"unknown scenario {p!r}; choose from {', '.join(SCENARIO_PARTS)}")
        if self.hext not in HEXT_PRESETS:
            raise ConfigError(f"unknown hext preset {self.hext!r}")
        if self.offsphere_profile not in OFFSPHERE_PROFILES:
            raise ConfigError(f"unknown offsphere_profile {self.offsphere_profile!r}")
        if self.vortex_profile not in VORTEX_PROFILES:
            raise ConfigError(f"unknown vortex_profile {self.vortex_profile!r}")
        if not 0 < self.vortex_radius <= 0.5 * min(self.Lx, self.Ly):
            raise ConfigError("vortex_radius must lie in (0, min(Lx, Ly)/2]")
        if self.f0 not in F0_PRESETS:
            raise ConfigError(f"unknown f0 preset {self.f0!r}")
        if self.magnetic_form not in ("energy", "stress"):
            raise ConfigError(f"unknown magnetic_form {self.magnetic_form!r}")
        if self.output_stride < 1 or self.snapshot_stride < 0:
            raise ConfigError("output_stride must be >= 1 and snapshot_stride >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 < self.bubble_radius:
            raise ConfigError("bubble_radius must be positive")
        if self.mollify_delta < 0:
            raise ConfigError("mollify_delta must be non-negative")

    def scenario_parts(self) -> list[str]:
        return [p.strip() for p in self.scenario.split("+") if p.strip()]

    # --- derived objects --------------------------------------------------

    def domain(self) -> DomainSpec:
        return DomainSpec(self.Lx, self.Ly, self.nx, self.ny)

    def sim_params(self, dt: float | None = None) -> SimParams:
        return SimParams(
            eps=self.eps, f_diffusion=self.f_diffusion, dt=dt if dt is not None else (self.dt or 1.0),
            t_end=self.t_end, cfl_safety=self.cfl_safety, poisson_tol=self.poisson_tol,
            helmholtz_tol=self.helmholtz_tol, hyperviscosity_on=self.hyperviscosity_on,
            cutoff_k=self.cutoff_k, viscosity=self.viscosity, semi_implicit=self.semi_implicit,
            advection=self.advection, solver=self.solver,
        )

    def effective_threads(self) -> int:
        env = os.environ.get("MVSIM_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError(f"MVSIM_THREADS must be an integer, got {env!r}") from None
            if n < 1:
                raise ConfigError("MVSIM_THREADS must be >= 1")
            return n
        return self.threads

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(key: str, raw: str) -> Any:
    kind = _FIELDS[key].type
    if key == "dt":
        if raw.lower() == "auto":
            return None
        kind = "float"
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            if raw.strip().lstrip("+-").isdigit():
                return int(raw)
            raise ValueError
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError
        return raw
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        values[key] = _parse_value(key, raw)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _format_value(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    return "".join(f"{name} = {_format_value(getattr(cfg, name))}\n" for name in _FIELDS)
