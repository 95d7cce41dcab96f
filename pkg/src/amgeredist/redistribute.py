"""Agglomeration with core redistribution, and redistribution of dofs and element matrices.

Everything here is relation algebra. The current core configuration is given
by ``core_element``; the cores are grouped into ``Cores`` and every element is
copied (``newelement``) onto the Core that now owns it. AEs are formed
Core-locally on the copies, and the dofs, element matrices and true dofs
follow the AEs to their new owners. The resulting ``newtruedof_truedof`` is a
permutation, so the redistributed operator is a symmetric permutation of the
original one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .partitioner import PartitionSpec, coarsen_by_factor, partition_graph
from .relmat import INDEX, Relation, SparseMatrix, bool_multiply, is_partition, multiply, write_mm


@dataclass(eq=False)
class RedistributionMaps:
    beta_c: int
    Core_core: Relation
    Core_element: Relation
    newelement_element: Relation
    Core_newelement: Relation
    AE_newelement: Relation | None = None
    AE_element: Relation | None = None
    newdof_dof: Relation | None = None
    newelement_newdof: Relation | None = None
    newtruedof_newdof: Relation | None = None
    newtruedof_truedof: Relation | None = None
    active: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def relations(self):
        names = ["Core_core", "Core_element", "newelement_element", "Core_newelement", "AE_newelement",
                 "AE_element", "newdof_dof", "newelement_newdof", "newtruedof_newdof", "newtruedof_truedof"]
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}

    def summary(self):
        return {
            "beta_c": int(self.beta_c),
            "cores_before": int(self.Core_core.ncols),
            "cores_after": int(self.Core_core.nrows),
            "active_after": [int(c) for c in self.active] if self.active is not None else None,
            "elements_per_core": [int(c) for c in self.Core_element.row_counts()],
            "n_elements": int(self.newelement_element.ncols),
            "n_agglomerates": int(self.AE_element.nrows) if self.AE_element is not None else None,
        }

    def dump(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, rel in self.relations().items():
            write_mm(directory / f"{name}.mtx", rel)
        (directory / "redistribution.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


# agglomeration with redistribution -------------------------------------------

def build_core_core(core_element: Relation, element_element: Relation) -> Relation:
    """``core_element x element_element x core_element^T``."""
    return bool_multiply(bool_multiply(core_element, element_element), core_element.T)


def coarsen_cores(core_core: Relation, beta_c, seed=0) -> Relation:
    """Group the active cores into ``ceil(n_active / beta_c)`` connected Cores."""
    if beta_c < 1:
        raise ValueError("core coarsening factor must be >= 1")
    n_groups = max(1, math.ceil(core_core.nrows / beta_c))
    rel = partition_graph(core_core, PartitionSpec(n_groups, balance_tol=0.0, seed=seed), part_kind="Core")
    return rel


def compose_core_groupings(first: Relation, second: Relation) -> Relation:
    """Two successive groupings, ``Core2_Core1 x Core1_core``."""
    return bool_multiply(second.relabel(col_kind="Core"), first).relabel(row_kind="Core", col_kind="core")


def redistribute_elements(Core_core: Relation, core_element: Relation):
    """Copy every element onto the Core that now owns it.

    Returns ``(Core_element, newelement_element)``. New elements are numbered
    by enumerating ``Core_element`` row by row, so each Core owns a
    contiguous range of them.
    """
    Core_element = bool_multiply(Core_core, core_element)
    if not is_partition(Core_element):
        raise ValueError("Core_element does not partition the elements")
    n = Core_element.nnz
    newelement_element = Relation(np.arange(n + 1), Core_element.indices, Core_element.ncols, "newelement",
                                  "element", check=False)
    return Core_element, newelement_element


def core_newelement(Core_element: Relation) -> Relation:
    """Ownership of the copies: contiguous ranges in ``Core_element`` row order."""
    return Relation(Core_element.indptr, np.arange(Core_element.nnz), Core_element.nnz, "Core", "newelement",
                    check=False)


def newelement_adjacency(newelement_element: Relation, element_element: Relation) -> Relation:
    """``newelement_element x element_element x newelement_element^T``."""
    return bool_multiply(bool_multiply(newelement_element, element_element), newelement_element.T)


def local_agglomerate(owner_child: Relation, child_child: Relation, factor, balance_tol=0.1, seed=0,
                      n_parts=None):
    """Partition each owner's children on its own, numbering parts owner-major.

    ``n_parts`` optionally fixes the number of parts per owner; otherwise each
    owner forms ``ceil(local / factor)`` parts.
    """
    rows, cols = [], []
    offset = 0
    for c in range(owner_child.nrows):
        local = owner_child.row(c)
        if len(local) == 0:
            continue
        sub = child_child.submatrix(local, local)
        k = n_parts[c] if n_parts is not None else None
        if k is None:
            part = coarsen_by_factor(sub, factor, balance_tol, seed, part_kind="AE")
        else:
            part = partition_graph(sub, PartitionSpec(int(k), balance_tol, seed), part_kind="AE")
        a = part.assignment()
        rows.append(a + offset)
        cols.append(local)
        offset += part.nrows
    return Relation.from_pairs(np.concatenate(rows), np.concatenate(cols), offset, owner_child.ncols, "AE",
                               owner_child.col_kind)


def agglomerate_after_redistribution(newelement_element: Relation, element_element: Relation,
                                     Core_newelement: Relation, factor, balance_tol=0.1, seed=0, n_parts=None):
    """Core-local partitioning of the copies.

    Returns ``(AE_newelement, AE_element)`` with
    ``AE_element = AE_newelement x newelement_element``.
    """
    nn = newelement_adjacency(newelement_element, element_element)
    AE_newelement = local_agglomerate(Core_newelement, nn, factor, balance_tol, seed, n_parts)
    AE_element = bool_multiply(AE_newelement, newelement_element)
    return AE_newelement, AE_element


def active_cores(Core_core: Relation, active):
    """The lowest physical core of each Core group stays active."""
    active = np.asarray(active, dtype=INDEX)
    return np.array([active[Core_core.row(g)].min() for g in range(Core_core.nrows)], dtype=INDEX)


# dofs and element matrices ----------------------------------------------------

def build_newdof_dof(AE_element: Relation, element_dof: Relation, newelement_element: Relation):
    """Copy every dof next to the copy of its element.

    New dofs are ordered by new element, keeping the dof order within each
    element. Returns ``(newdof_dof, newelement_newdof)`` where
    ``newelement_newdof = newelement_element x element_dof x newdof_dof^T``.
    """
    if not is_partition(element_dof):
        raise ValueError("element_dof is not decoupled")
    if not is_partition(AE_element):
        raise ValueError("AE_element is not a partition")
    newelement_dof = bool_multiply(newelement_element, element_dof)
    n = newelement_dof.nnz
    newdof_dof = Relation(np.arange(n + 1), newelement_dof.indices, element_dof.ncols, "newdof", "dof", check=False)
    newelement_newdof = bool_multiply(newelement_dof, newdof_dof.T)
    return newdof_dof, newelement_newdof


def redistribute_element_matrices(A_diag: SparseMatrix, newdof_dof: Relation) -> SparseMatrix:
    """``newdof_dof x A_diag x newdof_dof^T``."""
    N = newdof_dof.as_matrix()
    out = multiply(multiply(N, A_diag), N.T)
    return out


def select_newtruedofs(newdof_dof: Relation, dof_truedof: Relation, n_vel_truedofs=None, newdof_owner=None):
    """One representative new dof per class of copies of a true dof.

    ``newdof_newdof = newdof_truedof x newdof_truedof^T`` links copies of the
    same true dof; the representative of each class is its lowest new dof.
    New true dofs are enumerated velocity classes (true dof index below
    ``n_vel_truedofs``) first, then by the owner of the representative
    (``newdof_owner``, if given) and then by the original true dof, so the
    trivial redistribution gives the identity.

    Returns ``(newtruedof_newdof, newtruedof_truedof)``.
    """
    newdof_truedof = bool_multiply(newdof_dof, dof_truedof)
    newdof_newdof = bool_multiply(newdof_truedof, newdof_truedof.T)
    n_newdof = newdof_newdof.nrows
    if np.any(newdof_newdof.row_counts() == 0):
        raise ValueError("a new dof is not linked to any true dof")
    first = newdof_newdof.indices[newdof_newdof.indptr[:-1]]
    reps = np.flatnonzero(first == np.arange(n_newdof))
    if len(reps) != dof_truedof.ncols:
        raise ValueError("some true dof has no copy")
    rep_truedof = newdof_truedof.indices[newdof_truedof.indptr[reps]]
    kind = rep_truedof >= n_vel_truedofs if n_vel_truedofs is not None else np.zeros(len(reps), dtype=bool)
    owner = np.asarray(newdof_owner)[reps] if newdof_owner is not None else np.zeros(len(reps), dtype=INDEX)
    reps = reps[np.lexsort((rep_truedof, owner, kind))]
    newtruedof_rep = Relation(np.arange(len(reps) + 1), reps, n_newdof, "newtruedof", "newdof", check=False)
    newtruedof_newdof = bool_multiply(newtruedof_rep, newdof_newdof)
    newtruedof_truedof = bool_multiply(newtruedof_newdof, newdof_truedof)
    return newtruedof_newdof, newtruedof_truedof


def compose_interpolation(new_old: Relation, P_new: SparseMatrix) -> SparseMatrix:
    """``new_old^T x P_new``: interpolation onto the previous configuration."""
    if new_old.nrows != P_new.nrows:
        raise ValueError(f"{new_old.name} has {new_old.nrows} rows but P_new has {P_new.nrows}")
    R = new_old.as_matrix()
    P_new = SparseMatrix(P_new.indptr, P_new.indices, P_new.data, P_new.ncols, new_old.row_kind, P_new.col_kind)
    return multiply(R.T, P_new)


def permutation_matrix(rel: Relation) -> SparseMatrix:
    if np.any(rel.row_counts() != 1) or np.any(rel.col_counts() != 1):
        raise ValueError(f"{rel.name} is not a permutation")
    return rel.as_matrix()
