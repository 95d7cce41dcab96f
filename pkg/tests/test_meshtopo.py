import numpy as np
import pytest

from amgeredist.darcy import assemble
from amgeredist.meshtopo import (DIRICHLET_IN, INTERIOR, NEUMANN, OUTFLOW, PRESSURE, VELOCITY, block_diagonal,
                                 build_dofs, build_mesh, element_matrices, facet_domain_face, reference_mass)


def test_2x2_counts():
    mesh = build_mesh(2, 2)
    assert mesh.n_elements == 4 and mesh.n_facets == 12
    assert mesh.element_element().nnz == 12


def test_single_hex_all_boundary():
    mesh = build_mesh(3, 1)
    assert mesh.n_elements == 1 and mesh.n_facets == 6
    assert np.all(mesh.facet_attr != INTERIOR)


def test_unit_measure():
    mesh = build_mesh(2, 4)
    assert mesh.n_elements == 16
    assert mesh.element_measure.sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("dim,n", [(2, 3), (2, (4, 2)), (3, 2)])
def test_facet_element_counts(dim, n):
    mesh = build_mesh(dim, n)
    counts = mesh.facet_element.row_counts()
    assert np.all(counts[mesh.facet_attr == INTERIOR] == 2)
    assert np.all(counts[mesh.facet_attr != INTERIOR] == 1)


def test_boundary_labels_and_faces():
    mesh = build_mesh(2, 3)
    face = facet_domain_face(mesh)
    attr = mesh.facet_attr
    assert np.all(attr[face == 0] == DIRICHLET_IN)
    assert np.all(attr[face == 1] == OUTFLOW)
    assert np.all(attr[(face == 2) | (face == 3)] == NEUMANN)
    assert np.all((face == -1) == (attr == INTERIOR))


def test_single_element_dofs():
    dofs = build_dofs(build_mesh(2, 1))
    assert np.sum(dofs.dof_kind == VELOCITY) == 4
    assert dofs.n_vel_truedofs == 4
    assert np.sum(dofs.dof_kind == PRESSURE) == 1


def test_shared_facet_two_dofs_one_truedof():
    mesh = build_mesh(2, (2, 1))
    dofs = build_dofs(mesh)
    td_dofs = dofs.dof_truedof.T
    shared = np.flatnonzero(mesh.facet_attr == INTERIOR)
    assert len(shared) == 1
    assert td_dofs.row_counts()[shared[0]] == 2


@pytest.mark.parametrize("dim,n", [(2, 4), (3, 2)])
def test_dof_invariants(dim, n):
    mesh = build_mesh(dim, n)
    dofs = build_dofs(mesh)
    assert np.all(dofs.element_dof.col_counts() == 1)
    assert np.all(dofs.dof_truedof.row_counts() == 1)
    cols = dofs.dof_truedof.col_counts()
    assert set(np.unique(cols[:dofs.n_vel_truedofs])) <= {1, 2}
    assert np.all(cols[dofs.n_vel_truedofs:] == 1)


def _gauss_mass(hx, hy):
    # RT0 basis on [0,hx]x[0,hy] for facets x-, x+, y-, y+ with +axis normals, unit flux each
    g = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    pts = [(hx * (1 + a) / 2, hy * (1 + b) / 2) for a in g for b in g]
    w = hx * hy / 4.0

    def basis(x, y):
        return np.array([[(hx - x) / (hx * hy), 0.0], [x / (hx * hy), 0.0],
                         [0.0, (hy - y) / (hx * hy)], [0.0, y / (hx * hy)]])

    M = np.zeros((4, 4))
    for x, y in pts:
        phi = basis(x, y)
        M += w * phi @ phi.T
    return M


@pytest.mark.parametrize("spacing", [(1.0, 1.0), (0.25, 0.5)])
def test_reference_mass_against_quadrature(spacing):
    np.testing.assert_allclose(reference_mass(spacing), _gauss_mass(*spacing), rtol=0, atol=1e-14)


def test_divergence_row_single_element():
    mesh = build_mesh(2, 1)
    dofs = build_dofs(mesh)
    block = element_matrices(mesh, 1.0).blocks[0]
    signs = dofs.dof_sign[dofs.dof_kind == VELOCITY]
    np.testing.assert_array_equal(block[4, :4] * signs, [1.0, 1.0, 1.0, 1.0])
    np.testing.assert_array_equal(block[4, :4], [-1.0, 1.0, -1.0, 1.0])


def test_doubling_k_halves_velocity_block():
    mesh = build_mesh(2, 2)
    a = element_matrices(mesh, 1.0).blocks[0]
    b = element_matrices(mesh, 2.0).blocks[0]
    np.testing.assert_array_equal(b[:4, :4], a[:4, :4] / 2)
    np.testing.assert_array_equal(b[4], a[4])


def test_velocity_block_spd_and_zero_pressure_block():
    mesh = build_mesh(3, 1)
    blk = element_matrices(mesh, 1.0).blocks[0]
    assert np.all(np.linalg.eigvalsh(blk[:6, :6]) > 0)
    assert blk[6, 6] == 0.0


def test_assembled_operator_symmetric():
    mesh = build_mesh(2, 3)
    dofs = build_dofs(mesh)
    A = assemble(block_diagonal(dofs.element_dof, element_matrices(mesh, 1.0).blocks), dofs.dof_truedof).toarray()
    np.testing.assert_array_equal(A, A.T)
    nv = dofs.n_vel_truedofs
    assert np.all(A[nv:, nv:] == 0)
