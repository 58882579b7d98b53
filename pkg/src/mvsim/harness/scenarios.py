"""Initial-data presets.

A scenario name is a ``+``-joined list of parts; velocity parts add their
stream functions, the last magnetization part wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..deformation import mollify_initial
from ..fields import CELL, DomainSpec, MatrixField, Vec3Field, VelocityField
from ..operators import curl_matrix, velocity_from_stream
from .config import RunConfig


@dataclass
class Scenario:
    u0: VelocityField
    F0: MatrixField
    M0: Vec3Field
    Hext: Vec3Field | None


# --- stream functions (vanish with their normal derivative on the walls) ---


def vortex_stream(d: DomainSpec, amp: float):
    """Single cell: ``amp * L/pi * sin^2(pi x/Lx) sin^2(pi y/Ly)``."""
    L = min(d.Lx, d.Ly)

    def psi(X, Y):
        return amp * L / np.pi * np.sin(np.pi * X / d.Lx) ** 2 * np.sin(np.pi * Y / d.Ly) ** 2

    return psi


def bump_vortex_stream(d: DomainSpec, amp: float, radius: float):
    """``amp * radius * bump(r / radius)`` around the centre: smooth, and zero
    near the walls, so it meets every wall condition of the velocity operators."""

    def psi(X, Y):
        r = np.hypot(X - d.Lx / 2, Y - d.Ly / 2)
        return amp * radius * _bump(r / radius)

    return psi


def shear_stream(d: DomainSpec, amp: float):
    """Two counter-flowing horizontal bands."""

    def psi(X, Y):
        return amp * d.Ly / (2 * np.pi) * np.sin(np.pi * X / d.Lx) ** 2 * np.sin(2 * np.pi * Y / d.Ly) ** 2

    return psi


# --- magnetization profiles ----------------------------------------------


def _bump(s: np.ndarray) -> np.ndarray:
    """Smooth bump with value 1 at 0 and support ``|s| < 1``."""
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def bubble_field(d: DomainSpec, radius: float, angle: float) -> Vec3Field:
    """Unit field tilted by ``angle * bump(r / radius)`` from ``e_z`` towards ``e_x``.

    Constant ``e_z`` outside the bubble, so the Neumann condition holds.
    """
    X, Y = d.points(CELL)
    r = np.hypot(X - d.Lx / 2, Y - d.Ly / 2)
    theta = angle * _bump(r / radius)
    return Vec3Field(d, np.stack([np.sin(theta), np.zeros_like(theta), np.cos(theta)]))


def offsphere_field(d: DomainSpec, amp: float, profile: str) -> Vec3Field:
    """``uniform``: ``(amp, 0, 0)``. ``vortex``: ``amp`` times the in-plane unit
    vector pointing away from the centre, which is singular at the centre and
    relaxes through an off-sphere core."""
    if profile == "uniform":
        return Vec3Field.constant(d, [amp, 0.0, 0.0])
    X, Y = d.points(CELL)
    dx = X - d.Lx / 2
    dy = Y - d.Ly / 2
    r = np.hypot(dx, dy)
    r = np.where(r > 0, r, 1.0)
    return Vec3Field(d, amp * np.stack([dx / r, dy / r, np.zeros_like(r)]))


def curl_F0(d: DomainSpec, amp: float) -> MatrixField:
    """Identity plus the discrete curls of two smooth potentials; column divergence is zero."""
    Xu, Yu = d.points("x-face")
    Xv, Yv = d.points("y-face")
    psi1 = amp * np.sin(np.pi * Xu / d.Lx) * np.cos(np.pi * Yu / d.Ly)
    psi2 = amp * np.cos(np.pi * Xv / d.Lx) * np.sin(2 * np.pi * Yv / d.Ly)
    return MatrixField.identity(d) + curl_matrix(d, psi1, psi2)


def external_field(d: DomainSpec, preset: str, amp: float) -> Vec3Field | None:
    if preset == "zero":
        return None
    if preset == "uniform":
        return Vec3Field.constant(d, [0.0, 0.0, amp])
    X, Y = d.points(CELL)
    return Vec3Field(d, np.stack([np.zeros_like(X), np.zeros_like(X), amp * X / d.Lx]))


def build_scenario(cfg: RunConfig) -> Scenario:
    d = cfg.domain()
    parts = cfg.scenario_parts()
    streams = []
    if "vortex" in parts:
        if cfg.vortex_profile == "bump":
            streams.append(bump_vortex_stream(d, cfg.vortex_amp, cfg.vortex_radius))
        else:
            streams.append(vortex_stream(d, cfg.vortex_amp))
    if "shear" in parts:
        streams.append(shear_stream(d, cfg.shear_amp))
    if streams and "rest" not in parts:
        u0 = velocity_from_stream(d, lambda X, Y: sum(s(X, Y) for s in streams))
    else:
        u0 = VelocityField.zeros(d)

    if "rest" in parts or cfg.f0 == "zero":
        F0 = MatrixField.constant(d, np.zeros((2, 2)))
    elif cfg.f0 == "curl":
        F0 = curl_F0(d, cfg.f0_amp)
    else:
        F0 = MatrixField.identity(d)
    if cfg.mollify_delta > 0:
        F0 = mollify_initial(F0, cfg.mollify_delta)

    M0 = Vec3Field.constant(d, [0.0, 0.0, 1.0])
    for p in parts:
        if p == "bubble":
            M0 = bubble_field(d, cfg.bubble_radius, cfg.bubble_angle)
        elif p == "offsphere-relax":
            M0 = offsphere_field(d, cfg.offsphere_amp, cfg.offsphere_profile)
    return Scenario(u0, F0, M0, external_field(d, cfg.hext, cfg.hext_amp))
