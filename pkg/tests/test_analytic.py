import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdsens.analytic import (DegenerateGeometry, geometric_factor, halfspace_potential, pole_pole_kernel,
                             quadrupole_kernel)
from mdsens.survey import ABSENT, Quadrupole, dipole_dipole, wenner_alpha

A = 0.66
LINE = np.array([[i * A, 0.0, 0.0] for i in range(4)])

coord = st.floats(-3.0, 3.0, allow_nan=False)


class TestHalfspacePotential:
    def test_value(self):
        assert halfspace_potential(100.0, 1.0, (0, 0, 0), (0.66, 0, 0)) == pytest.approx(24.114, abs=5e-4)

    def test_inverse_distance(self):
        v1 = halfspace_potential(100.0, 1.0, (0, 0, 0), (0.66, 0, 0))
        v2 = halfspace_potential(100.0, 1.0, (0, 0, 0), (1.32, 0, 0))
        assert v1 == 2.0 * v2

    def test_linear_in_current(self):
        v = halfspace_potential(100.0, 1.0, (0, 0, 0), (0.3, 0.4, -0.2))
        assert halfspace_potential(100.0, -1.0, (0, 0, 0), (0.3, 0.4, -0.2)) == -v

    def test_coincident(self):
        with pytest.raises(DegenerateGeometry):
            halfspace_potential(1.0, 1.0, (0, 0, 0), (0, 0, 0))


class TestPolePoleKernel:
    def test_shallow_midpoint(self):
        assert pole_pole_kernel((0, 0, 0), (1, 0, 0), (0.5, 0, 0.1)) == pytest.approx(-0.346, abs=5e-4)
        v = pole_pole_kernel((0, 0, 0), (1, 0, 0), (0.5, 0, 0.1))
        # direct evaluation of the kernel
        assert v == pytest.approx((-0.25 + 0.01) / (0.26 ** 3) / (4 * np.pi ** 2), rel=1e-14)

    def test_deep_equidistant_positive(self):
        assert pole_pole_kernel((0, 0, 0), (1, 0, 0), (0.5, 0, -2.0)) > 0

    @settings(max_examples=50, deadline=None)
    @given(coord, coord, st.floats(-3.0, -0.01))
    def test_symmetric(self, x, y, z):
        a, b, p = (0, 0, 0), (1, 0.2, 0), (x, y, z)
        assert pole_pole_kernel(a, b, p) == pole_pole_kernel(b, a, p)

    def test_vectorized(self):
        p = np.array([[0.5, 0, -0.1], [0.5, 0, -2.0]])
        v = pole_pole_kernel((0, 0, 0), (1, 0, 0), p)
        assert v.shape == (2,)
        assert v[0] < 0 < v[1]

    def test_degenerate(self):
        with pytest.raises(DegenerateGeometry):
            pole_pole_kernel((0, 0, 0), (0, 0, 0), (1, 1, -1))
        with pytest.raises(DegenerateGeometry):
            pole_pole_kernel((0, 0, 0), (1, 0, 0), (0, 0, 0))


class TestQuadrupoleKernel:
    def test_signed_sum(self):
        q = wenner_alpha([0, 1, 2, 3])[0]
        p = np.array([1.5 * A, 0.0, -0.3])
        K = lambda a, b: pole_pole_kernel(LINE[a], LINE[b], p)
        ref = K(q.x0, q.y0) - K(q.x1, q.y0) - K(q.x0, q.y1) + K(q.x1, q.y1)
        assert abs(quadrupole_kernel(q, p, positions=LINE) - ref) <= 1e-14 * abs(ref)

    def test_remote(self):
        p = np.array([0.2, 0.1, -0.4])
        q = Quadrupole(0, ABSENT, 2, ABSENT)
        assert quadrupole_kernel(q, p, positions=LINE) == pole_pole_kernel(LINE[0], LINE[2], p)

    def test_point_form(self):
        p = np.array([0.2, 0.1, -0.4])
        v = quadrupole_kernel([LINE[0], None, LINE[2], None], p)
        assert v == pole_pole_kernel(LINE[0], LINE[2], p)

    def test_wenner_deeper_than_dipole(self):
        # relative depth decay: dipole-dipole sensitivity is more surface-concentrated
        wa = wenner_alpha([0, 1, 2, 3])[0]
        dd = dipole_dipole([0, 1, 2, 3], 1, 1)[0]
        mid = np.array([1.5 * A, 0.0])

        def ratio(q):
            deep = abs(quadrupole_kernel(q, [*mid, -0.6], positions=LINE))
            shallow = abs(quadrupole_kernel(q, [*mid, -0.15], positions=LINE))
            return deep / shallow

        assert ratio(wa) > ratio(dd)

    def test_coincident_electrodes(self):
        with pytest.raises(DegenerateGeometry):
            quadrupole_kernel([LINE[0], LINE[0], LINE[1], LINE[2]], (0, 0, -1))


class TestGeometricFactor:
    def test_wenner(self):
        q = wenner_alpha([0, 1, 2, 3])[0]
        assert geometric_factor(q, LINE) == pytest.approx(2 * np.pi * A, rel=1e-12)
        assert geometric_factor(q, LINE) == pytest.approx(4.147, abs=5e-4)

    def test_dipole_dipole(self):
        q = dipole_dipole([0, 1, 2, 3], 1, 1)[0]
        assert geometric_factor(q, LINE) == pytest.approx(6 * np.pi * A, rel=1e-12)
        assert geometric_factor(q, LINE) == pytest.approx(12.44, abs=5e-3)

    def test_pole_pole(self):
        assert geometric_factor(Quadrupole(0, ABSENT, 3, ABSENT), LINE) == pytest.approx(2 * np.pi * 3 * A)

    def test_reciprocal_invariant(self):
        q = Quadrupole(0, 2, 1, 3)
        assert geometric_factor(q, LINE) == pytest.approx(geometric_factor(q.reciprocal(), LINE), rel=1e-14)

    def test_degenerate(self):
        # potential electrodes on the bisector of the current dipole (an equipotential)
        sq = np.array([[0, 0, 0], [2, 0, 0], [1, 1, 0], [1, 2, 0]], float)
        with pytest.raises(DegenerateGeometry):
            geometric_factor(Quadrupole(0, 1, 2, 3), sq)
