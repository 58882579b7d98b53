import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mvsim.fields import DomainSpec, MatrixField, ScalarField, Vec3Field, VelocityField
from mvsim.operators import velocity_from_stream

settings.register_profile("mvsim", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("mvsim")


def unit_domain(n: int = 16, m: int | None = None) -> DomainSpec:
    return DomainSpec(1.0, 1.0, n, m or n)


def random_velocity(d: DomainSpec, rng, walls_zero: bool = True) -> VelocityField:
    u = VelocityField(d, rng.standard_normal(d.shape("x-face")), rng.standard_normal(d.shape("y-face")))
    return u.with_walls_zeroed() if walls_zero else u


def random_solenoidal(d: DomainSpec, rng, margin: int = 0) -> VelocityField:
    """Discretely divergence-free velocity from a random corner stream function
    that vanishes on (and ``margin`` nodes inside) the boundary."""
    P = rng.standard_normal((d.nx + 1, d.ny + 1))
    k = margin + 1
    P[:k], P[-k:], P[:, :k], P[:, -k:] = 0.0, 0.0, 0.0, 0.0
    return velocity_from_stream(d, lambda X, Y: P)


def random_cell(d: DomainSpec, rng, kind=ScalarField):
    if kind is ScalarField:
        return ScalarField(d, "cell-center", rng.standard_normal(d.shape("cell-center")))
    if kind is Vec3Field:
        return Vec3Field(d, rng.standard_normal((3, d.nx, d.ny)))
    return MatrixField(d, rng.standard_normal((2, 2, d.nx, d.ny)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
