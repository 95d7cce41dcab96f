import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from amgeredist.amge import HierarchyConfig, fine_level, redistribute_level
from amgeredist.meshtopo import build_mesh
from amgeredist.partitioner import parts_connected
from amgeredist.redistribute import (agglomerate_after_redistribution, build_core_core, build_newdof_dof,
                                     coarsen_cores, compose_interpolation, core_newelement,
                                     redistribute_element_matrices, redistribute_elements, select_newtruedofs)
from amgeredist.relmat import Relation, SparseMatrix, bool_multiply, multiply
from amgeredist.simcores import initial_layout


def path_graph(n, kind="core"):
    rows = np.concatenate([np.arange(n - 1), np.arange(1, n), np.arange(n)])
    cols = np.concatenate([np.arange(1, n), np.arange(n - 1), np.arange(n)])
    return Relation.from_pairs(rows, cols, n, n, kind, kind)


def is_bijection(rel):
    return rel.nrows == rel.ncols and np.all(rel.row_counts() == 1) and np.all(rel.col_counts() == 1)


def test_core_core_single_core():
    ee = build_mesh(2, 3).element_element()
    layout = initial_layout(ee, 1)
    cc = build_core_core(layout.core_element, ee)
    assert cc.shape == (1, 1) and cc.nnz == 1


def test_core_core_disconnected_is_block_diagonal():
    ee = Relation.from_pairs([0, 1, 2, 3, 0, 1, 2, 3], [0, 1, 2, 3, 1, 0, 3, 2], 4, 4, "element", "element")
    ce = Relation.from_assignment([0, 0, 1, 1], 2, "core", "element")
    cc = build_core_core(ce, ee)
    assert cc.to_dense().tolist() == [[True, False], [False, True]]


@pytest.mark.parametrize("n,beta,expect", [(512, 8, 64), (1, 5, 1), (3, 2, 2)])
def test_coarsen_cores_counts(n, beta, expect):
    cc = path_graph(n)
    Core_core = coarsen_cores(cc, beta)
    assert Core_core.nrows == expect
    assert parts_connected(Core_core, cc)


@given(st.integers(1, 600), st.integers(1, 16))
def test_ceil_law(n, beta):
    assert coarsen_cores(path_graph(n), beta).nrows == math.ceil(n / beta)


def test_identity_grouping_gives_identity_copies():
    ce = Relation.identity(5, "core", "element")
    Core_element, ne_e = redistribute_elements(Relation.identity(5, "Core", "core"), ce)
    assert ne_e == Relation.identity(5, "newelement", "element")


def _setup(nx, ny, nc, beta):
    mesh = build_mesh(2, (nx, ny))
    ee = mesh.element_element()
    layout = initial_layout(ee, nc)
    level = fine_level(mesh, layout)
    maps, moved = redistribute_level(level, HierarchyConfig(factor=4, beta_c=beta, min_local=1, n_cores=nc))
    return mesh, level, maps, moved


@given(st.integers(2, 10), st.integers(2, 10), st.integers(1, 6), st.sampled_from([2, 4, 8]))
@settings(max_examples=15)
def test_bijections_and_permutation(nx, ny, nc, beta):
    nc = min(nc, nx * ny)
    mesh, level, maps, _ = _setup(nx, ny, nc, beta)
    assert is_bijection(maps.newelement_element)
    assert is_bijection(maps.newdof_dof)
    assert is_bijection(maps.newtruedof_truedof)
    assert maps.Core_core.nrows == math.ceil(nc / beta)
    assert bool_multiply(maps.AE_newelement, maps.newelement_element) == maps.AE_element
    ee = mesh.element_element()
    assert parts_connected(maps.AE_element, ee)


def test_single_core_redistribution_is_identity():
    _, level, maps, _ = _setup(4, 4, 1, 8)
    n_el, n_dof, n_td = level.n_elements, level.dofs.n_dofs, level.dofs.n_truedofs
    assert maps.newelement_element == Relation.identity(n_el, "newelement", "element")
    assert maps.newdof_dof == Relation.identity(n_dof, "newdof", "dof")
    assert maps.newtruedof_truedof == Relation.identity(n_td, "newtruedof", "truedof")


def test_one_element_per_ae_gives_permutation():
    mesh = build_mesh(2, 4)
    ee = mesh.element_element()
    layout = initial_layout(ee, 2)
    Core_core = coarsen_cores(build_core_core(layout.core_element, ee), 2).relabel("Core", "core")
    Core_element, ne_e = redistribute_elements(Core_core, layout.core_element)
    _, AE_element = agglomerate_after_redistribution(ne_e, ee, core_newelement(Core_element), factor=1)
    assert is_bijection(AE_element)


def test_element_matrices_preserved():
    _, level, maps, _ = _setup(6, 5, 4, 2)
    A = level.A_diag()
    A_new = redistribute_element_matrices(A, maps.newdof_dof)
    assert np.linalg.norm(A_new.data) == pytest.approx(np.linalg.norm(A.data), rel=1e-15)
    d = maps.newdof_dof.indices
    np.testing.assert_array_equal(A_new.toarray(), A.toarray()[np.ix_(d, d)])
    ident = redistribute_element_matrices(A, Relation.identity(A.nrows, "newdof", "dof"))
    np.testing.assert_array_equal(ident.toarray(), A.toarray())


def test_compose_interpolation_identities():
    rng = np.random.default_rng(0)
    P_new = SparseMatrix.from_dense(rng.standard_normal((6, 3)), "newtruedof", "coarse")
    ident = Relation.identity(6, "newtruedof", "truedof")
    np.testing.assert_array_equal(compose_interpolation(ident, P_new).toarray(), P_new.toarray())
    perm = Relation.from_assignment(np.array([2, 0, 1, 5, 3, 4]), 6, "newtruedof", "truedof")
    P = compose_interpolation(perm, SparseMatrix.identity(6, "newtruedof"))
    np.testing.assert_array_equal(P.toarray(), perm.to_dense().T.astype(float))


def test_permutation_equivalence_small():
    _, level, maps, moved = _setup(8, 6, 4, 2)
    # relabel stored coordinates, so structural zeros take part in the comparison
    A = level.assemble().to_scipy().tocoo()
    new_of_old = np.empty(A.shape[0], dtype=np.int64)
    new_of_old[maps.newtruedof_truedof.indices] = np.arange(A.shape[0])
    ref = {(int(new_of_old[i]), int(new_of_old[j])): v for i, j, v in zip(A.row, A.col, A.data)}
    A_new = moved.assemble().to_scipy().tocoo()
    got = {(int(i), int(j)): v for i, j, v in zip(A_new.row, A_new.col, A_new.data)}
    assert got.keys() == ref.keys()
    scale = max(abs(v) for v in ref.values())
    assert max(abs(got[k] - ref[k]) for k in ref) <= 1e-12 * scale


def test_coarse_operator_same_through_both_paths():
    _, level, maps, moved = _setup(8, 8, 4, 2)
    from amgeredist.amge import coarsen
    from amgeredist.simcores import CoreLayout
    AE = maps.AE_newelement.relabel("AE", "element")
    owner = moved.layout.owner("element")[AE.indices[AE.indptr[:-1]]]
    lay = CoreLayout(4, moved.layout.active, Relation.from_assignment(owner, moved.layout.n_active, "core",
                                                                       "element"))
    step = coarsen(moved, AE, lay)
    P_new = step.P
    P = compose_interpolation(maps.newtruedof_truedof, P_new)
    A_new = moved.assemble()
    A = level.assemble()
    via_new = multiply(multiply(P_new.T, A_new), P_new).toarray()
    via_old = multiply(multiply(P.T, A), P).toarray()
    np.testing.assert_allclose(via_old, via_new, rtol=0, atol=1e-12 * np.abs(via_new).max())


def test_newdof_counts_follow_cores():
    _, level, maps, _ = _setup(6, 6, 4, 2)
    Core_newdof = bool_multiply(maps.Core_newelement,
                                maps.newelement_newdof.relabel("newelement", "newdof"))
    per_core_elements = maps.Core_element.row_counts()
    assert Core_newdof.row_counts().sum() == level.dofs.n_dofs
    # each element carries 2*dim velocity dofs and one pressure dof
    np.testing.assert_array_equal(Core_newdof.row_counts(), per_core_elements * 5)


def test_select_newtruedofs_identity():
    mesh = build_mesh(2, 3)
    level = fine_level(mesh)
    n = level.dofs.n_dofs
    _, ntd_td = select_newtruedofs(Relation.identity(n, "newdof", "dof"), level.dofs.dof_truedof,
                                   level.dofs.n_vel_truedofs)
    assert ntd_td == Relation.identity(level.dofs.n_truedofs, "newtruedof", "truedof")
