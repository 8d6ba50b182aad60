import numpy as np
import pytest
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from mdsens import mpfa
from mdsens.fvm import (AssemblyError, MaterialField, assemble_couplings, assemble_subdomain, assemble_system,
                        conservation_residual, electrode_rhs)
from mdsens.greens import factorize
from mdsens.mesh import Box, ElectrodeSpec, FaceTag, Grading, build_box_mesh, compute_geometry, finalize


def _box(grading=Grading(uniform=0.25)):
    return compute_geometry(build_box_mesh(Box((0, 0, 0), (1, 1, 1)), grading))


def _graded_box():
    return _box(Grading(0.1, 0.1, 0.4, 1.6, refine=((0, 0.4, 0.6, 0.08),)))


class TestMpfaExactness:
    @pytest.mark.parametrize("axis", [0, 1, 2])
    def test_linear_potential(self, axis):
        g = _graded_box().domain
        ops = mpfa.discretize(g, np.ones(g.num_cells), g.face_cells[:, 1] < 0)
        gd = g.nodes[:, axis]
        A = ops.stiffness
        u = spla.spsolve(A.tocsc(), -ops.div @ (ops.dir_flux @ gd))
        assert np.abs(u - g.cell_centers[:, axis]).max() <= 1e-10
        q = ops.flux @ u + ops.dir_flux @ gd
        assert np.abs(q + g.face_areas * g.face_normals[:, axis]).max() <= 1e-10

    def test_heterogeneous_layers(self):
        # piecewise-linear potential across a conductivity jump at z = 0.5
        g = _box(Grading(uniform=0.125)).domain
        K = np.where(g.cell_centers[:, 2] < 0.5, 1.0, 4.0)
        ops = mpfa.discretize(g, K, g.face_cells[:, 1] < 0)
        z = g.nodes[:, 2]
        exact = lambda z: np.where(z < 0.5, z, 0.5 + (z - 0.5) / 4.0)
        u = spla.spsolve(ops.stiffness.tocsc(), -ops.div @ (ops.dir_flux @ exact(z)))
        assert np.abs(u - exact(g.cell_centers[:, 2])).max() <= 1e-10

    def test_symmetric_stiffness(self):
        g = _graded_box().domain
        A = mpfa.discretize(g, np.ones(g.num_cells), g.face_cells[:, 1] < 0).stiffness
        assert abs(A - A.T).max() <= 1e-12 * abs(A).max()

    def test_rejects_bad_coefficient(self):
        g = _box().domain
        with pytest.raises(ValueError):
            mpfa.discretize(g, -np.ones(g.num_cells))


class TestAssembleSubdomain:
    def test_coefficient_doubling(self):
        g = _graded_box().domain
        bnd = g.face_tags == FaceTag.OUTER
        K = np.random.default_rng(1).uniform(0.5, 2.0, g.num_cells)
        A1, _ = assemble_subdomain(g, K, bnd)
        A2, _ = assemble_subdomain(g, 2 * K, bnd)
        d = abs(A2 - 2 * A1).max()
        assert d <= 1e-14 * abs(A2).max()

    def test_liner_stiffness_tiny(self, liner_mesh):
        lin = liner_mesh.liner
        K = 2e-3 * 1e-15
        A, _ = assemble_subdomain(lin, np.full(lin.num_cells, K))
        # geometric scale of a 2D transmissibility is O(face length / distance) = O(1)
        geo, _ = assemble_subdomain(lin, np.ones(lin.num_cells))
        assert abs(A).max() <= 1e-17 * abs(geo).max()
        assert abs(A - K * geo).max() <= 1e-12 * abs(A).max()

    def test_one_dimensional_chain(self):
        # electrode chain: series conductance between cell centers
        m = finalize(build_box_mesh(Box((-1, -1, -1), (1, 1, 0)), Grading(uniform=0.1),
                                    electrodes=[ElectrodeSpec(0, 0, 0.3)]))
        A, _ = assemble_subdomain(m.electrodes[0], 2.0)
        assert A.shape == (3, 3)
        assert np.allclose(A.toarray(), 20.0 * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]), rtol=1e-10)


class TestCouplings:
    def test_liner_mortar_rows(self, liner_mesh):
        mat = MaterialField.homogeneous(liner_mesh, 100.0, rho_liner=1e15, liner_thickness=2e-3)
        cpl = assemble_couplings(liner_mesh, mat)
        nl = liner_mesh.liner.num_cells
        # scaled rows: j + (phi_l - phi) / R with R = eps rho / 2 per side
        per_side = cpl["C_l"].data
        assert cpl["C_l"].shape == (2 * nl, nl)
        assert np.allclose(per_side, 1.0 / (0.5 * 2e-3 * 1e15), rtol=1e-14)
        # two sides in series give the through-thickness conductance 1/(eps rho)
        assert 1.0 / (2.0 / per_side[0]) == pytest.approx(5e-13, rel=1e-14)
        assert np.allclose(cpl["M_l"].diagonal(), 1.0, atol=1e-9)

    def test_electrode_mortar_rows(self, liner_mesh):
        mat = MaterialField.homogeneous(liner_mesh, 100.0, rho_electrode=2e-7)
        cpl = assemble_couplings(liner_mesh, mat)
        cond = cpl["C_g"].data / cpl["M_g"].diagonal()[cpl["C_g"].tocoo().row]
        assert np.allclose(cond, 5e6, rtol=1e-12)

    def test_no_liner_empty_blocks(self):
        m = finalize(build_box_mesh(Box((-1, -1, -1), (1, 1, 0)), Grading(uniform=0.25),
                                    electrodes=[ElectrodeSpec(0, 0, 0.25)]))
        cpl = assemble_couplings(m, MaterialField.homogeneous(m, 10.0))
        for k in ("B_l", "C_l", "M_l"):
            assert cpl[k].shape[0] == 0

    def test_needs_mortars(self):
        m = _box()
        with pytest.raises(AssemblyError):
            assemble_couplings(m, MaterialField.homogeneous(m, 1.0))


class TestAssembleSystem:
    def test_dimension_without_liner(self, validation_mesh):
        s = assemble_system(validation_mesh, MaterialField.homogeneous(validation_mesh, 100.0), subcell=False)
        ne = sum(e.num_cells for e in validation_mesh.electrodes)
        nm = sum(validation_mesh.electrode_interface(e).num_cells for e in range(validation_mesh.num_electrodes))
        assert s.size == validation_mesh.domain.num_cells + ne + nm

    def test_dimension_with_liner(self, liner_mesh):
        s = assemble_system(liner_mesh, MaterialField.homogeneous(liner_mesh, 100.0), subcell=False)
        nl = liner_mesh.liner.num_cells
        ne = sum(e.num_cells for e in liner_mesh.electrodes)
        assert s.size == liner_mesh.domain.num_cells + nl + 2 * nl + 2 * ne
        assert s.offsets["j_liner"].stop - s.offsets["j_liner"].start == 2 * nl

    def test_block_pattern(self, liner_mesh):
        s = assemble_system(liner_mesh, MaterialField.homogeneous(liner_mesh, 100.0), subcell=False)
        A = s.matrix.tocsr()
        off = s.offsets
        # no direct 3D-liner or liner-electrode coupling outside the mortars
        assert A[off["phi"], off["phi_liner"]].nnz == 0
        assert A[off["phi_liner"], off["phi_electrodes"]].nnz == 0
        assert A[off["j_liner"], off["j_electrodes"]].nnz == 0

    def test_size_mismatch(self, liner_mesh):
        mat = MaterialField.homogeneous(liner_mesh, 100.0)
        bad = MaterialField(mat.rho[:-1], mat.rho_liner, mat.rho_electrode)
        with pytest.raises(AssemblyError, match="rho has"):
            assemble_system(liner_mesh, bad)

    def test_material_validation(self):
        with pytest.raises(ValueError):
            MaterialField(np.array([1.0, -1.0]), np.zeros(0) + 1, np.ones(1))


class TestElectrodeRhs:
    def test_unit_injection(self, liner_mesh):
        s = assemble_system(liner_mesh, MaterialField.homogeneous(liner_mesh, 100.0), subcell=False)
        b = electrode_rhs(s, 2, 1.0)
        assert np.count_nonzero(b) == 1
        assert b.sum() == 1.0
        assert b[s.top_dof(2)] == 1.0

    def test_zero_current(self, liner_mesh):
        s = assemble_system(liner_mesh, MaterialField.homogeneous(liner_mesh, 100.0), subcell=False)
        assert not np.any(electrode_rhs(s, 0, 0.0))

    def test_dipole_superposition(self, liner_mesh):
        s = assemble_system(liner_mesh, MaterialField.homogeneous(liner_mesh, 100.0), subcell=False)
        b = electrode_rhs(s, 0, 1.0) + electrode_rhs(s, 3, -1.0)
        assert b.sum() == 0.0
        assert b[s.top_dof(0)] == 1.0 and b[s.top_dof(3)] == -1.0

    def test_bad_index(self, liner_mesh):
        s = assemble_system(liner_mesh, MaterialField.homogeneous(liner_mesh, 100.0), subcell=False)
        with pytest.raises(IndexError):
            electrode_rhs(s, liner_mesh.num_electrodes)


class TestConservation:
    def test_local_conservation(self, liner_mesh):
        mat = MaterialField.homogeneous(liner_mesh, 50.0)
        s = assemble_system(liner_mesh, mat, subcell=False)
        f = factorize(s)
        x = np.asarray(f.solve(electrode_rhs(s, 0) - electrode_rhs(s, 5)), dtype=float)
        res = conservation_residual(s, x)
        assert np.abs(res).max() <= 1e-9

    def test_stiffness_row_sums(self):
        # interior rows of a pure Neumann operator sum to zero
        g = _graded_box().domain
        A = mpfa.discretize(g, np.ones(g.num_cells)).stiffness
        assert np.abs(np.asarray(A.sum(axis=1))).max() <= 1e-12 * abs(A).max()
        assert isinstance(A, sps.csr_matrix)
