import numpy as np
import pytest

from amgeredist.relmat import bool_multiply, is_partition

from six_element import ELEMENT_DOF, as_dict, build, compare_all


@pytest.fixture(scope="module")
def case():
    return build()


def test_labels_are_bijections(case):
    assert sorted(case["el"].values()) == list(range(1, 7))
    assert sorted(case["td"].values()) == list(range(1, 8))
    assert sorted(case["dof"].values()) == list(range(1, 15))


def test_dof_order_within_elements(case):
    dofs = case["dofs"]
    for e in range(6):
        assert [case["dof"][int(d)] for d in dofs.element_dof.row(e)] == ELEMENT_DOF[case["el"][e]]


def test_all_relations_match(case):
    assert compare_all(case) == []


def test_core_core_adjacency(case):
    cc = case["core_core"]
    assert [set(cc.row(c).tolist()) for c in range(3)] == [{0, 1}, {0, 1, 2}, {1, 2}]


def test_ae_element_is_partition(case):
    assert is_partition(case["AE_element"])


def test_newdofs_and_newtruedofs(case):
    assert case["newdof_dof"].nrows == 14
    Core_newdof = bool_multiply(case["Cnew"], case["newelement_newdof"].relabel("newelement", "newdof"))
    assert Core_newdof.row_counts().tolist() == [4, 10]
    ntd = case["newtruedof_truedof"]
    assert ntd.shape == (7, 7)
    assert np.all(ntd.row_counts() == 1) and np.all(ntd.col_counts() == 1)
