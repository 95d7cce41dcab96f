import numpy as np
import pytest

from amgeredist.amge import HierarchyConfig, build_hierarchy, fine_level
from amgeredist.darcy import BoundaryConfig, DarcyOperator, Solution, assemble, qoi_flux, solve_mixed
from amgeredist.meshtopo import (DIRICHLET_IN, NEUMANN, OUTFLOW, VELOCITY, block_diagonal, build_dofs, build_mesh,
                                 element_matrices)
from amgeredist.relmat import bool_multiply


def dense_oracle(mesh, k, bc):
    """Loop assembly and a dense solve with Neumann fluxes removed."""
    dofs = build_dofs(mesh)
    blocks = element_matrices(mesh, k).blocks
    n = dofs.n_truedofs
    A = np.zeros((n, n))
    td = dofs.dof_truedof.indices
    for e, blk in enumerate(blocks):
        loc = td[dofs.element_dof.row(e)]
        A[np.ix_(loc, loc)] += blk
    nv = dofs.n_vel_truedofs
    b = np.zeros(n)
    facet = dofs.truedof_entity[:nv]
    for t in range(nv):
        attr = mesh.facet_attr[facet[t]]
        if attr in (DIRICHLET_IN, OUTFLOW):
            d = np.flatnonzero(td == t)[0]
            b[t] = -bc.dirichlet_value(np.array([attr]))[0] * dofs.dof_sign[d]
    keep = np.ones(n, dtype=bool)
    keep[:nv] = mesh.facet_attr[facet] != NEUMANN
    x = np.zeros(n)
    x[keep] = np.linalg.solve(A[np.ix_(keep, keep)], b[keep])
    return x[:nv], -x[nv:]


def test_one_element_assembly_is_element_matrix():
    mesh = build_mesh(2, 1)
    level = fine_level(mesh)
    A = level.assemble().toarray()
    np.testing.assert_array_equal(A, level.blocks[0])


def test_shared_facet_entry_is_sum():
    mesh = build_mesh(2, (2, 1))
    level = fine_level(mesh)
    A = level.assemble().toarray()
    shared = int(np.flatnonzero(mesh.facet_attr == 0)[0])
    td = level.dofs.dof_truedof.indices
    contributions = 0.0
    for e in range(2):
        d = level.dofs.element_dof.row(e)
        loc = list(td[d]).index(shared)
        contributions += level.blocks[e][loc, loc]
    assert A[shared, shared] == contributions


def test_pattern_inside_truedof_truedof():
    mesh = build_mesh(2, 5)
    level = fine_level(mesh)
    A = level.assemble()
    dt = level.dofs.dof_truedof
    tt = bool_multiply(dt.T, bool_multiply(level.dofs.element_dof.T, bool_multiply(level.dofs.element_dof, dt)))
    # structural zeros are kept, so the pattern is the whole composite relation
    pattern = A.pattern()
    np.testing.assert_array_equal(pattern.indptr, tt.indptr)
    np.testing.assert_array_equal(pattern.indices, tt.indices)


@pytest.mark.parametrize("n", [4, 8, 16])
def test_unit_gradient_exact(n):
    mesh = build_mesh(2, n)
    op = DarcyOperator(fine_level(mesh))
    sol = op.solve()
    facet = op.level.dofs.truedof_entity[:op.n_vel]
    x_normal = mesh.facet_axis[facet] == 0
    np.testing.assert_allclose(sol.q[x_normal], mesh.facet_measure[facet][x_normal], rtol=0, atol=1e-12)
    np.testing.assert_allclose(sol.q[~x_normal], 0.0, atol=1e-12)
    assert op.qoi(sol) == pytest.approx(1.0, abs=1e-12)
    assert np.abs(op.divergence(sol)).max() <= 1e-10
    # pressure is linear, 1 - x, sampled at the centroids
    np.testing.assert_allclose(sol.p, 1.0 - mesh.element_centroid[:, 0], atol=1e-12)


def test_3d_unit_gradient():
    mesh = build_mesh(3, 3)
    op = DarcyOperator(fine_level(mesh))
    assert op.qoi(op.solve()) == pytest.approx(1.0, abs=1e-12)


def test_constant_k_scales_flux():
    mesh = build_mesh(2, 6)
    op = DarcyOperator(fine_level(mesh))
    q1 = op.solve(1.0).q
    q3 = op.solve(3.0).q
    np.testing.assert_allclose(q3, 3.0 * q1, rtol=1e-12, atol=1e-14)


def test_random_lognormal_against_dense_oracle():
    mesh = build_mesh(2, 8)
    rng = np.random.default_rng(7)
    k = np.exp(rng.standard_normal(mesh.n_elements))
    bc = BoundaryConfig(1.0, 0.0)
    op = DarcyOperator(fine_level(mesh))
    sol = op.solve(k, bc)
    q_ref, p_ref = dense_oracle(mesh, k, bc)
    np.testing.assert_allclose(sol.q, q_ref, rtol=0, atol=1e-9)
    np.testing.assert_allclose(sol.p, p_ref, rtol=0, atol=1e-9)


def test_uniform_outflow_flux_of_two():
    mesh = build_mesh(2, 4)
    op = DarcyOperator(fine_level(mesh))
    q = np.zeros(op.n_vel)
    q[op.outflow] = 2.0 * op.td_sign[op.outflow] * op.level.facet_measure[op.level.dofs.truedof_entity[op.outflow]]
    assert op.qoi(Solution(q, np.zeros(mesh.n_elements), 0.0)) == pytest.approx(2.0, abs=1e-14)


def test_flux_conservation():
    mesh = build_mesh(2, 12)
    rng = np.random.default_rng(2)
    op = DarcyOperator(fine_level(mesh))
    sol = op.solve(np.exp(rng.standard_normal(mesh.n_elements)))
    inflow = np.flatnonzero(op.facet_attr == DIRICHLET_IN)
    q_in = -np.dot(op.td_sign[inflow], sol.q[inflow])
    q_out = np.dot(op.td_sign[op.outflow], sol.q[op.outflow])
    assert abs(q_in - q_out) <= 1e-10


def test_symmetric_full_matrix():
    op = DarcyOperator(fine_level(build_mesh(2, 5)))
    A = op.full_matrix(np.linspace(0.5, 2.0, 25)).toarray()
    np.testing.assert_array_equal(A, A.T)
    assert np.all(A[op.n_vel:, op.n_vel:] == 0)


def test_all_neumann_pins_pressure():
    mesh = build_mesh(2, 3, {"x-": NEUMANN, "x+": NEUMANN})
    op = DarcyOperator(fine_level(mesh))
    sol = op.solve()
    np.testing.assert_allclose(sol.q, 0.0, atol=1e-14)


def test_solve_mixed_matches_operator():
    mesh = build_mesh(2, 4)
    level = fine_level(mesh)
    sol = solve_mixed(level.assemble(), level)
    assert qoi_flux(sol, level) == pytest.approx(1.0, abs=1e-12)


def test_coarse_levels_trend_towards_fine():
    mesh = build_mesh(2, 16)
    h = build_hierarchy(mesh, HierarchyConfig(n_levels=3, factor=8))
    q = [DarcyOperator(lv).qoi(DarcyOperator(lv).solve()) for lv in h.levels]
    err = [abs(x - q[0]) for x in q]
    assert err[0] == 0.0 and err[1] < err[2]
