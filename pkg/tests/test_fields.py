import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_cell, random_velocity, unit_domain
from mvsim.errors import NonFiniteError, ShapeError
from mvsim.fields import (CELL, XFACE, YFACE, DomainSpec, MatrixField, ScalarField, SimParams,
                          StateSnapshot, Vec3Field, VelocityField, l2_inner, l2_norm, linf_norm,
                          read_field, write_field)


class TestDomain:
    def test_spacings(self):
        d = DomainSpec(2.0, 1.0, 8, 4)
        assert d.hx == 0.25 and d.hy == 0.25
        assert d.hx * d.nx == d.Lx
        assert d.shape(XFACE) == (9, 4) and d.shape(YFACE) == (8, 5) and d.shape(CELL) == (8, 4)

    @pytest.mark.parametrize("args", [(1.0, 1.0, 3, 8), (1.0, 1.0, 8, 2), (0.0, 1.0, 8, 8),
                                      (1.0, -1.0, 8, 8), (1.0, 1.0, 4.5, 8)])
    def test_rejects_bad_domains(self, args):
        with pytest.raises(ValueError):
            DomainSpec(*args)

    def test_points(self):
        d = DomainSpec(1.0, 2.0, 4, 4)
        X, Y = d.points(CELL)
        assert X[0, 0] == 0.125 and Y[0, 0] == 0.25
        X, Y = d.points(XFACE)
        assert X[-1, 0] == 1.0 and X.shape == (5, 4)


class TestContainers:
    def test_shape_validation(self):
        d = unit_domain(8)
        with pytest.raises(ShapeError):
            ScalarField(d, CELL, np.zeros((9, 8)))
        with pytest.raises(ShapeError):
            VelocityField(d, np.zeros((8, 8)), np.zeros((8, 9)))
        with pytest.raises(ShapeError):
            Vec3Field(d, np.zeros((2, 8, 8)))

    def test_nonfinite_rejected(self):
        d = unit_domain(8)
        data = np.zeros((3, 8, 8))
        data[1, 2, 3] = np.nan
        with pytest.raises(NonFiniteError):
            Vec3Field(d, data)
        with pytest.raises(NonFiniteError):
            ScalarField(d, CELL, np.full((8, 8), np.inf))

    def test_arithmetic_mismatch(self, rng):
        a = random_cell(unit_domain(8), rng)
        b = random_cell(unit_domain(16), rng)
        with pytest.raises(ShapeError):
            a + b
        with pytest.raises(ShapeError):
            l2_inner(a, b)

    def test_arithmetic(self, rng):
        d = unit_domain(8)
        a, b = random_velocity(d, rng), random_velocity(d, rng)
        c = 2.0 * a - b
        assert np.array_equal(c.u, 2.0 * a.u - b.u) and np.array_equal(c.v, 2.0 * a.v - b.v)
        assert np.array_equal((-a).u, -a.u)

    def test_snapshot_domain_check(self):
        d, e = unit_domain(8), unit_domain(16)
        with pytest.raises(ShapeError):
            StateSnapshot(0.0, VelocityField.zeros(d), ScalarField.zeros(e), MatrixField.identity(d),
                          Vec3Field.constant(d, [0, 0, 1]))

    def test_simparams_validation(self):
        with pytest.raises(ValueError):
            SimParams(eps=0.0)
        with pytest.raises(ValueError):
            SimParams(dt=-1.0)
        with pytest.raises(ValueError):
            SimParams(poisson_tol=0.0)


class TestNorms:
    def test_constant_one_measures_area(self):
        for n in (4, 7, 32):
            one = ScalarField.from_function(DomainSpec(1.0, 1.0, n, n + 1), lambda X, Y: np.ones_like(X))
            assert l2_inner(one, one) == pytest.approx(1.0, abs=1e-14)

    def test_zero_field(self, rng):
        d = unit_domain(8)
        b = random_cell(d, rng)
        assert l2_inner(ScalarField.zeros(d), b) == 0.0
        assert l2_norm(ScalarField.zeros(d)) == 0.0
        assert linf_norm(ScalarField.zeros(d)) == 0.0

    def test_x_squared_midpoint(self):
        # midpoint rule for int x^2 = 1/3 has error h^2 / 12
        d = unit_domain(64)
        x = ScalarField.from_function(d, lambda X, Y: X)
        assert abs(l2_inner(x, x) - 1.0 / 3.0) <= 1e-4
        assert l2_inner(x, x) == pytest.approx(1.0 / 3.0 - d.hx**2 / 12.0, abs=1e-14)

    def test_constant_three(self):
        f = ScalarField.from_function(unit_domain(8), lambda X, Y: 3.0 + 0 * X)
        assert l2_norm(f) == pytest.approx(3.0, rel=1e-15)

    def test_brute_force_sum(self, rng):
        d = DomainSpec(1.5, 0.5, 12, 10)
        f = random_cell(d, rng, MatrixField)
        brute = np.sqrt(sum(float(x) ** 2 for x in f.data.ravel()) * d.hx * d.hy)
        assert l2_norm(f) == pytest.approx(brute, rel=1e-14)

    def test_linf_vector_length(self):
        d = unit_domain(8)
        assert linf_norm(Vec3Field.constant(d, [0.0, 0.0, 1.0])) == 1.0
        data = np.zeros((3, 8, 8))
        data[:, 3, 5] = [3.0, 4.0, 0.0]
        assert linf_norm(Vec3Field(d, data)) == 5.0

    @given(st.integers(0, 2**32 - 1))
    def test_cauchy_schwarz_symmetry_triangle(self, seed):
        rng = np.random.default_rng(seed)
        d = unit_domain(8)
        a, b = random_velocity(d, rng, False), random_velocity(d, rng, False)
        assert abs(l2_inner(a, b)) <= l2_norm(a) * l2_norm(b) + 1e-12
        assert l2_inner(a, b) == l2_inner(b, a)
        assert linf_norm(a + b) <= linf_norm(a) + linf_norm(b) + 1e-12

    # squares of |lam| below ~1e-150 underflow, which is not a property of the norm
    @given(st.floats(-10, 10).filter(lambda x: x == 0 or abs(x) > 1e-100), st.integers(0, 2**32 - 1))
    def test_homogeneity(self, lam, seed):
        f = random_cell(unit_domain(8), np.random.default_rng(seed), Vec3Field)
        assert l2_norm(lam * f) == pytest.approx(abs(lam) * l2_norm(f), rel=1e-12)


class TestSnapshotFiles:
    @pytest.mark.parametrize("kind", [ScalarField, Vec3Field, MatrixField])
    def test_round_trip(self, tmp_path, rng, kind):
        d = DomainSpec(1.0, 0.75, 6, 5)
        f = random_cell(d, rng, kind)
        write_field(tmp_path / "f.txt", "F", f, 0.125)
        name, g, t = read_field(tmp_path / "f.txt")
        assert name == "F" and t == 0.125 and type(g) is type(f)
        assert np.array_equal(g.arrays()[0], f.arrays()[0])

    def test_face_scalar_round_trip(self, tmp_path, rng):
        d = unit_domain(5)
        f = ScalarField(d, XFACE, rng.standard_normal(d.shape(XFACE)))
        write_field(tmp_path / "u.txt", "u_x", f, 1.0)
        _, g, _ = read_field(tmp_path / "u.txt")
        assert g.layout == XFACE and np.array_equal(g.data, f.data)

    def test_header(self, tmp_path):
        d = DomainSpec(1.0, 2.0, 4, 4)
        write_field(tmp_path / "m.txt", "M", Vec3Field.constant(d, [0, 0, 1]), 0.5)
        head = (tmp_path / "m.txt").read_text().splitlines()[0]
        assert head == "MVSIM1 M cell-center 4 4 3 1.0 2.0 0.5"

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.txt").write_text("NOPE\n1\n")
        with pytest.raises(ValueError):
            read_field(tmp_path / "x.txt")
