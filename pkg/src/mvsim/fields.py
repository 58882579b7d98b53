"""Discrete domain, field containers and L2/L-infinity arithmetic.

Layout conventions (MAC grid on ``[0, Lx] x [0, Ly]``):

* ``cell-center`` nodes sit at ``((i + 1/2) hx, (j + 1/2) hy)``, array shape ``(nx, ny)``;
* ``x-face`` nodes sit at ``(i hx, (j + 1/2) hy)``, shape ``(nx + 1, ny)``;
* ``y-face`` nodes sit at ``((i + 1/2) hx, j hy)``, shape ``(nx, ny + 1)``.

Arrays are indexed ``[i, j]`` with ``i`` along x. Multi-component cell fields
carry their component axes first, e.g. ``(3, nx, ny)`` for magnetization and
``(2, 2, nx, ny)`` for the deformation gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar

import numpy as np

from .errors import NonFiniteError, ShapeError

CELL = "cell-center"
XFACE = "x-face"
YFACE = "y-face"
LAYOUTS = (CELL, XFACE, YFACE)


@dataclass(frozen=True)
class DomainSpec:
    Lx: float
    Ly: float
    nx: int
    ny: int

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("nx, ny must be integers")
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"need nx, ny >= 4, got {self.nx}x{self.ny}")
        if not (self.Lx > 0 and self.Ly > 0) or not np.isfinite([self.Lx, self.Ly]).all():
            raise ValueError("side lengths must be positive and finite")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def h(self) -> float:
        return min(self.hx, self.hy)

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    def shape(self, layout: str) -> tuple[int, int]:
        if layout == CELL:
            return (self.nx, self.ny)
        if layout == XFACE:
            return (self.nx + 1, self.ny)
        if layout == YFACE:
            return (self.nx, self.ny + 1)
        raise ValueError(f"unknown layout {layout!r}")

    def points(self, layout: str) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates ``(X, Y)`` of the nodes of ``layout``, each of shape ``shape(layout)``."""
        xc = (np.arange(self.nx) + 0.5) * self.hx
        yc = (np.arange(self.ny) + 0.5) * self.hy
        xn = np.arange(self.nx + 1) * self.hx
        yn = np.arange(self.ny + 1) * self.hy
        if layout == CELL:
            return np.meshgrid(xc, yc, indexing="ij")
        if layout == XFACE:
            return np.meshgrid(xn, yc, indexing="ij")
        if layout == YFACE:
            return np.meshgrid(xc, yn, indexing="ij")
        if layout == "corner":
            return np.meshgrid(xn, yn, indexing="ij")
        raise ValueError(f"unknown layout {layout!r}")


def _check_finite(arr: np.ndarray, what: str) -> None:
    # a single reduction: NaN or inf anywhere makes the sum non-finite
    if not np.isfinite(arr.sum()) and not np.isfinite(arr).all():
        raise NonFiniteError(f"{what} contains non-finite values")


class _Field:
    """Shared arithmetic for the concrete containers.

    Subclasses expose their raw storage through ``arrays()`` and rebuild
    themselves from a list of arrays through ``_rebuild``.
    """

    domain: DomainSpec

    def arrays(self) -> list[np.ndarray]:
        raise NotImplementedError

    def _rebuild(self, arrays: list[np.ndarray]):
        raise NotImplementedError

    def _signature(self) -> tuple:
        return (type(self), self.domain) + tuple(a.shape for a in self.arrays())

    @classmethod
    def _trusted(cls, **attrs):
        """Build without validation; for results of arithmetic on validated fields."""
        obj = object.__new__(cls)
        obj.__dict__.update(attrs)
        return obj

    def _binary(self, other, op):
        if not isinstance(other, _Field):
            return NotImplemented
        if self._signature() != other._signature():
            raise ShapeError("field type, layout or domain mismatch")
        return self._rebuild([op(a, b) for a, b in zip(self.arrays(), other.arrays())])

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        if isinstance(scalar, _Field):
            return NotImplemented
        return self._rebuild([a * scalar for a in self.arrays()])

    __rmul__ = __mul__

    def __neg__(self):
        return self._rebuild([-a for a in self.arrays()])

    def copy(self):
        return self._rebuild([a.copy() for a in self.arrays()])

    def zeros_like(self):
        return self._rebuild([np.zeros_like(a) for a in self.arrays()])


@dataclass(eq=False)
class ScalarField(_Field):
    domain: DomainSpec
    layout: str
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != self.domain.shape(self.layout):
            raise ShapeError(f"{self.layout} data has shape {self.data.shape}, "
                             f"expected {self.domain.shape(self.layout)}")
        _check_finite(self.data, "ScalarField")

    @classmethod
    def zeros(cls, domain: DomainSpec, layout: str = CELL) -> "ScalarField":
        return cls(domain, layout, np.zeros(domain.shape(layout)))

    @classmethod
    def from_function(cls, domain: DomainSpec, fn, layout: str = CELL) -> "ScalarField":
        X, Y = domain.points(layout)
        return cls(domain, layout, np.broadcast_to(fn(X, Y), X.shape).astype(float))

    def arrays(self):
        return [self.data]

    def _rebuild(self, arrays):
        return ScalarField._trusted(domain=self.domain, layout=self.layout, data=arrays[0])

    def _signature(self):
        return (ScalarField, self.domain, self.layout)

    def mean(self) -> float:
        return float(np.sum(self.data) * self.domain.cell_volume / self.domain.area)


@dataclass(eq=False)
class VelocityField(_Field):
    """MAC velocity: ``u`` on x-faces, ``v`` on y-faces."""

    domain: DomainSpec
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.domain.shape(XFACE) or self.v.shape != self.domain.shape(YFACE):
            raise ShapeError("velocity components do not match the MAC layout")
        _check_finite(self.u, "VelocityField.u")
        _check_finite(self.v, "VelocityField.v")

    @classmethod
    def zeros(cls, domain: DomainSpec) -> "VelocityField":
        return cls(domain, np.zeros(domain.shape(XFACE)), np.zeros(domain.shape(YFACE)))

    @classmethod
    def from_function(cls, domain: DomainSpec, fn) -> "VelocityField":
        """Sample ``fn(X, Y) -> (ux, uy)`` at the face nodes of each component."""
        Xu, Yu = domain.points(XFACE)
        Xv, Yv = domain.points(YFACE)
        u = np.broadcast_to(fn(Xu, Yu)[0], Xu.shape)
        v = np.broadcast_to(fn(Xv, Yv)[1], Xv.shape)
        return cls(domain, u.astype(float), v.astype(float))

    def arrays(self):
        return [self.u, self.v]

    def _rebuild(self, arrays):
        return VelocityField._trusted(domain=self.domain, u=arrays[0], v=arrays[1])

    def max_speed(self) -> float:
        return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))

    def with_walls_zeroed(self) -> "VelocityField":
        u = self.u.copy()
        v = self.v.copy()
        u[0, :] = u[-1, :] = 0.0
        v[:, 0] = v[:, -1] = 0.0
        return VelocityField._trusted(domain=self.domain, u=u, v=v)


@dataclass(eq=False)
class CellField(_Field):
    """Cell-centered field with arbitrary leading component axes."""

    domain: DomainSpec
    data: np.ndarray
    ncomp_shape: ClassVar[tuple | None] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape[-2:] != (self.domain.nx, self.domain.ny):
            raise ShapeError(f"cell data has shape {self.data.shape}")
        if self.ncomp_shape is not None and self.data.shape[:-2] != self.ncomp_shape:
            raise ShapeError(f"{type(self).__name__} needs component shape {self.ncomp_shape}, "
                             f"got {self.data.shape[:-2]}")
        _check_finite(self.data, type(self).__name__)

    @property
    def components(self) -> tuple:
        return self.data.shape[:-2]

    def arrays(self):
        return [self.data]

    def _rebuild(self, arrays):
        return type(self)._trusted(domain=self.domain, data=arrays[0])

    @classmethod
    def constant(cls, domain: DomainSpec, value) -> "CellField":
        value = np.asarray(value, dtype=float)
        data = np.broadcast_to(value[..., None, None], value.shape + (domain.nx, domain.ny))
        return cls(domain, data.copy())

    @classmethod
    def from_function(cls, domain: DomainSpec, fn) -> "CellField":
        """``fn(X, Y)`` returns an array with the component axes first."""
        X, Y = domain.points(CELL)
        return cls(domain, np.asarray(fn(X, Y), dtype=float))


class Vec3Field(CellField):
    ncomp_shape = (3,)

    def norm(self) -> np.ndarray:
        """Pointwise Euclidean length ``|M|``."""
        return np.sqrt(np.sum(self.data**2, axis=0))


class MatrixField(CellField):
    ncomp_shape = (2, 2)

    @classmethod
    def identity(cls, domain: DomainSpec) -> "MatrixField":
        return cls.constant(domain, np.eye(2))


@dataclass
class SimParams:
    eps: float = 1e-2
    f_diffusion: float = 0.0
    dt: float = 1e-4
    t_end: float = 0.1
    cfl_safety: float = 0.9
    poisson_tol: float = 1e-10
    helmholtz_tol: float = 1e-10
    hyperviscosity_on: bool = True
    cutoff_k: float = 0.0
    viscosity: float = 1.0
    semi_implicit: bool = False
    advection: str = "upwind"
    solver: str = "fft"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.poisson_tol > 0 and self.helmholtz_tol > 0):
            raise ValueError("solver tolerances must be positive")
        if self.f_diffusion < 0 or self.viscosity < 0 or self.cutoff_k < 0:
            raise ValueError("f_diffusion, viscosity and cutoff_k must be non-negative")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.advection not in ("upwind", "central"):
            raise ValueError(f"unknown advection scheme {self.advection!r}")
        if self.solver not in ("fft", "cg"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class StateSnapshot:
    t: float
    u: VelocityField
    p: ScalarField
    F: MatrixField
    M: Vec3Field
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        doms = {self.u.domain, self.p.domain, self.F.domain, self.M.domain}
        if len(doms) != 1:
            raise ShapeError("snapshot fields live on different domains")

    @property
    def domain(self) -> DomainSpec:
        return self.u.domain


def l2_inner(a: _Field, b: _Field) -> float:
    """Midpoint-rule L2 inner product; every node carries the weight ``hx * hy``."""
    if a._signature() != b._signature():
        raise ShapeError("l2_inner needs fields of equal type, layout and domain")
    total = 0.0
    for x, y in zip(a.arrays(), b.arrays()):
        total += float(np.sum(x * y))
    return total * a.domain.cell_volume


def l2_norm(a: _Field) -> float:
    return float(np.sqrt(max(l2_inner(a, a), 0.0)))


def linf_norm(a: _Field) -> float:
    """Max norm. Vector and matrix cell fields use the pointwise Euclidean/Frobenius length."""
    if isinstance(a, CellField) and a.data.ndim > 2:
        axes = tuple(range(a.data.ndim - 2))
        return float(np.max(np.sqrt(np.sum(a.data**2, axis=axes))))
    return float(max(np.max(np.abs(x)) for x in a.arrays()))


# --- snapshot files -------------------------------------------------------

_MAGIC = "MVSIM1"


def write_field(path, name: str, f: _Field, t: float) -> None:
    """Write ``f`` as an ``MVSIM1`` text snapshot, one node per line.

    Nodes follow C order of the ``(nx_layout, ny_layout)`` array, i.e. ``j``
    varies fastest. Velocity fields must be written per component.
    """
    if " " in name or not name:
        raise ValueError("field names must be non-empty and contain no spaces")
    if isinstance(f, ScalarField):
        layout, comps = f.layout, f.data.reshape(1, -1)
    elif isinstance(f, CellField):
        layout = CELL
        comps = f.data.reshape(-1, f.domain.nx * f.domain.ny)
    else:
        raise TypeError(f"cannot write {type(f).__name__}; split velocity into components")
    d = f.domain
    lines = [f"{_MAGIC} {name} {layout} {d.nx} {d.ny} {comps.shape[0]} "
             f"{d.Lx!r} {d.Ly!r} {float(t)!r}"]
    lines.extend(" ".join(f"{x:.17g}" for x in row) for row in comps.T)
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path) -> tuple[str, _Field, float]:
    text = Path(path).read_text().splitlines()
    head = text[0].split()
    if len(head) != 9 or head[0] != _MAGIC:
        raise ValueError(f"{path}: not an {_MAGIC} snapshot")
    name, layout = head[1], head[2]
    nx, ny, ncomp = int(head[3]), int(head[4]), int(head[5])
    Lx, Ly, t = float(head[6]), float(head[7]), float(head[8])
    domain = DomainSpec(Lx, Ly, nx, ny)
    data = np.array([[float(x) for x in line.split()] for line in text[1:]], dtype=float)
    data = data.reshape(-1, ncomp).T
    if layout != CELL:
        return name, ScalarField(domain, layout, data[0].reshape(domain.shape(layout))), t
    if ncomp == 1:
        return name, ScalarField(domain, CELL, data[0].reshape(nx, ny)), t
    if ncomp == 3:
        return name, Vec3Field(domain, data.reshape(3, nx, ny)), t
    if ncomp == 4:
        return name, MatrixField(domain, data.reshape(2, 2, nx, ny)), t
    return name, CellField(domain, data.reshape(ncomp, nx, ny)), t
