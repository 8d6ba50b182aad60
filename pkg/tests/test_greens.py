import numpy as np
import pytest

from mdsens.fvm import MaterialField, assemble_system, electrode_rhs
from mdsens.greens import (SingularSystemError, cell_gradients, factorize, potential_gradients, reading,
                           solve_greens)
from mdsens.mesh import Box, ElectrodeSpec, Grading, MortarKind, build_box_mesh, finalize
from mdsens.survey import ABSENT, Quadrupole, wenner_alpha

PP = 100.0 / (2 * np.pi * 0.66)


class TestFactorize:
    def test_random_residual(self, validation_mesh):
        s = assemble_system(validation_mesh, MaterialField.homogeneous(validation_mesh, 100.0), subcell=False)
        f = factorize(s)
        b = np.random.default_rng(3).standard_normal(s.size)
        x = np.asarray(f.solve(b), dtype=float)
        r = np.abs(s.matrix @ x - b)
        assert np.max(r / (np.abs(s.matrix) @ np.abs(x) + np.abs(b))) <= 1e-10

    def test_detached_electrode(self):
        m = finalize(build_box_mesh(Box((-1, -1, -1), (1, 1, 0)), Grading(uniform=0.25),
                                    electrodes=[ElectrodeSpec(-0.5, 0, 0.25), ElectrodeSpec(0.5, 0, 0.25)]))
        keep = [i for i in m.interfaces if not (i.kind is MortarKind.ELECTRODE and i.electrode == 1)]
        s = assemble_system(m.replace(interfaces=keep), MaterialField.homogeneous(m, 10.0), subcell=False)
        with pytest.raises(SingularSystemError, match="electrode 1"):
            factorize(s)

    def test_deterministic(self, liner_mesh):
        s = assemble_system(liner_mesh, MaterialField.homogeneous(liner_mesh, 100.0), subcell=False)
        b = electrode_rhs(s, 1) - electrode_rhs(s, 4)
        x1 = factorize(s).solve(b)
        x2 = factorize(s).solve(b)
        assert np.array_equal(x1, x2)

    def test_unknown_backend(self, liner_mesh):
        s = assemble_system(liner_mesh, MaterialField.homogeneous(liner_mesh, 100.0), subcell=False)
        with pytest.raises(ValueError, match="backend"):
            factorize(s, backend="nonsense")

    def test_superlu_matches_default(self, liner_mesh):
        s = assemble_system(liner_mesh, MaterialField.homogeneous(liner_mesh, 100.0), subcell=False)
        b = electrode_rhs(s, 0) - electrode_rhs(s, 5)
        x1 = np.asarray(factorize(s).solve(b), dtype=float)
        x2 = np.asarray(factorize(s, backend="superlu").solve(b), dtype=float)
        # the sealed liner makes the system ill-conditioned; compare against the largest potential
        assert np.abs(x1 - x2).max() <= 1e-9 * np.abs(x1).max()


class TestSolveGreens:
    def test_pole_potential(self, halfspace_greens):
        assert halfspace_greens.terminal[1, 2] == pytest.approx(PP, rel=0.03)

    def test_charge_balance(self, liner_greens):
        assert np.abs(liner_greens.charge_balance() - 1.0).max() <= 1e-8

    def test_reciprocity(self, liner_greens):
        assert liner_greens.reciprocity_error() <= 1e-6

    def test_linear_in_rho(self, liner_mesh, liner_greens):
        mat = MaterialField.homogeneous(liner_mesh, 100.0).scaled(2.0)
        g2 = solve_greens(factorize(assemble_system(liner_mesh, mat)))
        assert np.allclose(g2.terminal, 2.0 * liner_greens.terminal, rtol=1e-6)

    def test_shapes(self, liner_mesh, liner_greens):
        ne, n3, nl = liner_mesh.num_electrodes, liner_mesh.domain.num_cells, liner_mesh.liner.num_cells
        assert liner_greens.g.shape == (ne, n3)
        assert liner_greens.g_liner.shape == (ne, nl)
        assert liner_greens.sub_grad.shape == (ne, n3, 4, 3)
        assert liner_greens.sub_grad_liner.shape == (ne, nl, 3, 3)
        assert liner_greens.w_liner_plus.shape == (ne, nl)

    def test_needs_all_electrodes(self, liner_mesh):
        f = factorize(assemble_system(liner_mesh, MaterialField.homogeneous(liner_mesh, 100.0), subcell=False))
        with pytest.raises(ValueError):
            solve_greens(f, electrodes=[0, 1])
        with pytest.raises(ValueError):
            solve_greens(f, current=0.0)


class TestGradients:
    @staticmethod
    def _box_system():
        m = finalize(build_box_mesh(Box((0, 0, -1), (1, 1, 0)), Grading(0.1, 0.1, 0.3, 1.5),
                                    electrodes=[ElectrodeSpec(0.5, 0.5, 0.1)]))
        return assemble_system(m, MaterialField.homogeneous(m, 3.0), subcell=False)

    def test_linear_potential(self):
        s = self._box_system()
        g = s.mesh.domain
        ops = s.ops_domain
        # fluxes of phi = x0 with exact Dirichlet data
        q = ops.flux @ g.cell_centers[:, 0] + ops.dir_flux @ g.nodes[:, 0]
        grad = cell_gradients(g, q, s.materials.sigma)
        assert np.abs(grad - np.array([1.0, 0.0, 0.0])).max() <= 1e-10

    def test_constant_potential(self):
        s = self._box_system()
        g = s.mesh.domain
        q = s.ops_domain.flux @ np.full(g.num_cells, 7.0) + s.ops_domain.dir_flux @ np.full(g.num_nodes, 7.0)
        assert np.abs(cell_gradients(g, q, s.materials.sigma)).max() <= 1e-10
        # zero potential matches the homogeneous Dirichlet data
        assert np.abs(potential_gradients(s, np.zeros(g.num_cells))).max() == 0.0

    def test_below_electrode(self, validation_mesh, validation_greens):
        c = validation_mesh.domain.cell_centers
        a = validation_mesh.electrode_anchors[0]
        i = int(np.argmin(np.linalg.norm(c - (a - [0, 0, 0.5]), axis=1)))
        r = np.linalg.norm(c[i] - a)
        g = validation_greens.grad[0, i]
        assert np.linalg.norm(g) == pytest.approx(100.0 / (2 * np.pi * r ** 2), rel=0.1)
        # the potential decreases away from the source
        assert np.dot(g, c[i] - a) < 0

    def test_shape_check(self, liner_mesh):
        with pytest.raises(ValueError):
            cell_gradients(liner_mesh.domain, np.zeros(3), 1.0)


class TestReading:
    def test_wenner(self, halfspace_greens):
        v = reading(halfspace_greens, wenner_alpha([0, 1, 2, 3])[0])
        assert v == pytest.approx(PP, rel=0.03)

    def test_pole_pole(self, liner_greens):
        q = Quadrupole(2, ABSENT, 4, ABSENT)
        assert reading(liner_greens, q) == liner_greens.terminal[2, 4]

    def test_reciprocal(self, liner_greens):
        q = Quadrupole(0, 5, 1, 3)
        v = reading(liner_greens, q)
        assert reading(liner_greens, q.reciprocal()) == pytest.approx(v, rel=1e-6)

    def test_current_scaling(self, liner_greens):
        q = Quadrupole(0, 5, 1, 3)
        assert reading(liner_greens, q, current=-2.0) == pytest.approx(-2.0 * reading(liner_greens, q), rel=1e-15)

    def test_out_of_range(self, liner_greens):
        with pytest.raises(IndexError):
            reading(liner_greens, Quadrupole(0, 1, 2, 17))
