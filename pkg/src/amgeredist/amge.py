"""Element-agglomeration coarse spaces and the multilevel hierarchy.

Every level has the same structure as the fine mesh: elements with measures,
facets carrying one flux true dof each, one pressure per element, decoupled
element dofs and dense element matrices ``[[M, B^T], [B, 0]]``. Coarsening an
AE partition of a level produces the next level:

* coarse facets are maximal vertex-connected sets of fine facets shared by
  the same pair of AEs (or by one AE and the same face of the domain), ordered
  by their lowest fine facet and oriented like it;
* a coarse flux basis function puts ``o(f, F) |f| / |F|`` on each fine facet
  ``f`` of its coarse facet ``F`` and fills the AE interior with the
  minimum-energy flux whose divergence is constant on the AE;
* the coarse pressure basis is the indicator of the AE.

Coarse element matrices are ``P_T^T A_T P_T``; the global interpolation is
assembled from the local ones with a conformity check.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import meshtopo
from .meshtopo import DofSpace, INTERIOR, PRESSURE, VELOCITY
from .redistribute import (RedistributionMaps, active_cores, agglomerate_after_redistribution, build_core_core,
                           build_newdof_dof, coarsen_cores, compose_interpolation, core_newelement,
                           local_agglomerate, redistribute_element_matrices, redistribute_elements,
                           select_newtruedofs)
from .relmat import INDEX, Relation, SparseMatrix, bool_multiply, is_partition, num_triple_product, write_mm
from .simcores import CommLedger, CoreLayout, dist_bool_multiply, initial_layout

CONFORMITY_TOL = 1e-13


class ConformityError(RuntimeError):
    pass


class LocalSolveError(RuntimeError):
    pass


# levels -----------------------------------------------------------------------

@dataclass(eq=False)
class Level:
    """One level of the hierarchy.

    ``blocks`` are the reference element matrices (unit permeability) in
    ``element_dof`` row order. ``P`` maps this level's true dofs to those of
    the next finer level (``None`` on the fine level). ``element_origin``
    relates each element to the fine-mesh elements it is made of.
    """

    index: int
    dim: int
    element_facet: Relation
    facet_vertex: Relation
    facet_attr: np.ndarray
    facet_face: np.ndarray
    facet_measure: np.ndarray
    element_measure: np.ndarray
    element_origin: Relation
    dofs: DofSpace
    blocks: list
    layout: CoreLayout
    P: SparseMatrix | None = None
    redistribution: RedistributionMaps | None = None
    ledger: CommLedger = field(default_factory=CommLedger)
    build_seconds: float = 0.0

    @property
    def n_elements(self):
        return self.element_facet.nrows

    @property
    def n_facets(self):
        return self.element_facet.ncols

    @property
    def n_active(self):
        return self.layout.n_active

    @property
    def facet_element(self):
        return self.element_facet.T

    def element_element(self):
        return bool_multiply(self.element_facet, self.facet_element)

    def A_diag(self):
        return meshtopo.block_diagonal(self.dofs.element_dof, self.blocks)

    def assemble(self):
        """Reference operator ``dof_truedof^T A_diag dof_truedof``."""
        dt = self.dofs.dof_truedof
        return num_triple_product(dt.T, self.A_diag(), dt)

    def incidence_dofs(self):
        """Velocity dof of every ``element_facet`` entry, in CSR entry order."""
        ef, dofs = self.element_facet, self.dofs
        vel = np.flatnonzero(dofs.dof_kind == VELOCITY)
        el = dofs.dof_element_index()[vel]
        facet = dofs.truedof_entity[dofs.dof_truedof_index()[vel]]
        keys = el * self.n_facets + facet
        order = np.argsort(keys)
        want = ef.rows() * self.n_facets + ef.indices
        pos = np.searchsorted(keys[order], want)
        if len(vel) != ef.nnz or np.any(keys[order][np.minimum(pos, len(vel) - 1)] != want):
            raise ValueError("velocity dofs do not match element_facet one to one")
        return vel[order[pos]]

    def summary(self):
        return {
            "level": self.index,
            "n_elements": int(self.n_elements),
            "n_facets": int(self.n_facets),
            "n_truedofs": int(self.dofs.n_truedofs),
            "n_active": int(self.n_active),
            "active_cores": [int(c) for c in self.layout.active],
            "max_local_elements": int(self.layout.max_local()),
            "redistributed": self.redistribution is not None,
        }


def _attach_ownership(layout: CoreLayout, level_like):
    layout.derive_owner("facet", level_like.element_facet)
    layout.derive_owner("dof", level_like.dofs.element_dof)
    layout.derive_owner("truedof", level_like.dofs.dof_truedof)
    return layout


def fine_level(mesh, layout: CoreLayout | None = None, k=1.0) -> Level:
    """Level 0 built from a structured mesh."""
    dofs = meshtopo.build_dofs(mesh)
    blocks = meshtopo.element_matrices(mesh, k).blocks
    if layout is None:
        layout = CoreLayout(1, [0], Relation(np.array([0, mesh.n_elements]), np.arange(mesh.n_elements),
                                             mesh.n_elements, "core", "element"))
    level = Level(0, mesh.dim, mesh.element_facet, mesh.facet_vertex, mesh.facet_attr.copy(),
                  meshtopo.facet_domain_face(mesh), mesh.facet_measure.copy(), mesh.element_measure.copy(),
                  Relation.identity(mesh.n_elements, "element", "origin"), dofs, blocks, layout)
    _attach_ownership(layout, level)
    return level


# coarse facets ----------------------------------------------------------------

def coarse_facets(level: Level, AE_element: Relation):
    """Group the fine facets on AE interfaces into coarse facets.

    Returns ``(cfacet_facet, interior_owner)`` where ``interior_owner[f]`` is
    the AE containing facet ``f`` in its interior, or -1 for facets that lie
    on a coarse facet.
    """
    ae = AE_element.assignment()
    fe = level.facet_element
    counts = fe.row_counts()
    if np.any((counts < 1) | (counts > 2)):
        raise ValueError("every facet needs one or two adjacent elements")
    first = fe.indices[fe.indptr[:-1]]
    last = fe.indices[fe.indptr[1:] - 1]
    a1, a2 = ae[first], ae[last]
    two = counts == 2
    n_ae = AE_element.nrows
    interior = two & (a1 == a2)
    # key: (lower AE, upper AE) for AE interfaces, (AE, n_ae + domain face) on the boundary
    lo = np.minimum(a1, a2)
    hi = np.where(two, np.maximum(a1, a2), n_ae + level.facet_face)
    if np.any(~two & (level.facet_face < 0)):
        raise ValueError("boundary facet without a domain face")
    key = lo * (n_ae + 2 * level.dim + 1) + hi
    key[interior] = -1

    cand = np.flatnonzero(~interior)
    fv = level.facet_vertex.to_scipy()[cand]
    ff = (fv @ fv.T).tocoo()
    same = key[cand[ff.row]] == key[cand[ff.col]]
    g = sp.csr_array((np.ones(int(same.sum())), (ff.row[same], ff.col[same])), shape=(len(cand), len(cand)))
    _, label = connected_components(g, directed=False)
    # number coarse facets by their lowest fine facet
    lowest = np.full(label.max() + 1 if len(label) else 0, np.iinfo(INDEX).max, dtype=INDEX)
    np.minimum.at(lowest, label, cand)
    rank = np.empty(len(lowest), dtype=INDEX)
    rank[np.argsort(lowest)] = np.arange(len(lowest))
    cfacet_facet = Relation.from_pairs(rank[label], cand, len(lowest), level.n_facets, "facet", "finefacet")
    interior_owner = np.where(interior, a1, -1)
    return cfacet_facet, interior_owner


# local interpolation ----------------------------------------------------------

@dataclass(eq=False)
class LocalInterp:
    """Interpolation of one AE.

    ``P_T`` maps the coarse dofs ``[coarse facets (ascending) | pressure]`` to
    the local fine true dofs ``[facets | elements]``; ``A_T`` is the local
    fine operator and ``A_c`` the coarse element matrix ``P_T^T A_T P_T``.
    """

    ae: int
    facets: np.ndarray
    elements: np.ndarray
    cfacets: np.ndarray
    cfacet_sign: np.ndarray
    P_T: np.ndarray
    A_T: np.ndarray
    A_c: np.ndarray


def local_operator(level: Level, elements, facets, blocks=None):
    """Assemble ``A_T`` on local true dofs ``[facets | elements]``."""
    blocks = level.blocks if blocks is None else blocks
    n_f = len(facets)
    pos = {int(f): i for i, f in enumerate(facets)}
    pos.update({level.n_facets + int(e): n_f + i for i, e in enumerate(elements)})
    nv = level.dofs.n_vel_truedofs
    entity = level.dofs.truedof_entity
    A = np.zeros((n_f + len(elements),) * 2)
    for e in elements:
        dofs = level.dofs.element_dof.row(e)
        td = level.dofs.dof_truedof.indices[dofs]
        loc = np.array([pos[int(entity[t]) if t < nv else level.n_facets + int(entity[t])] for t in td])
        A[np.ix_(loc, loc)] += blocks[e]
    return A


def build_local_interpolation(level: Level, ae, elements, facets, interior_mask, cfacets, cfacet_weights,
                              cfacet_sign, blocks=None) -> LocalInterp:
    """Coarse basis of one AE from local saddle-point solves.

    Parameters
    ----------
    elements, facets : ndarray
        Fine elements of the AE and all fine facets they touch (ascending).
    interior_mask : ndarray of bool
        Which of ``facets`` are interior to the AE.
    cfacets : ndarray
        Coarse facets of the AE (ascending).
    cfacet_weights : list of ndarray
        For each coarse facet, the fixed boundary fluxes on ``facets``
        (zero on interior facets).
    cfacet_sign : ndarray
        Outward sign of each coarse facet for this AE.
    """
    A = local_operator(level, elements, facets, blocks)
    n_f, n_e = len(facets), len(elements)
    I = np.flatnonzero(interior_mask)
    Bd = np.flatnonzero(~interior_mask)
    M = A[:n_f, :n_f]
    B = A[n_f:, :n_f]
    w = level.element_measure[elements]
    vol = w.sum()
    n_c = len(cfacets)
    P = np.zeros((n_f + n_e, n_c + 1))
    n_i = len(I)
    K = np.zeros((n_i + n_e + 1, n_i + n_e + 1))
    K[:n_i, :n_i] = M[np.ix_(I, I)]
    K[:n_i, n_i:n_i + n_e] = B[:, I].T
    K[n_i:n_i + n_e, :n_i] = B[:, I]
    K[n_i:n_i + n_e, -1] = w
    K[-1, n_i:n_i + n_e] = w
    rhs = np.zeros((n_i + n_e + 1, n_c))
    for j in range(n_c):
        qb = cfacet_weights[j][Bd]
        rhs[:n_i, j] = -M[np.ix_(I, Bd)] @ qb
        rhs[n_i:n_i + n_e, j] = cfacet_sign[j] / vol * w - B[:, Bd] @ qb
        P[Bd, j] = qb
    if n_c:
        try:
            lu = scipy.linalg.lu_factor(K, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise LocalSolveError(f"local solve failed on AE {ae}: {exc}") from exc
        if np.any(np.abs(np.diag(lu[0])) < 1e-14 * max(1.0, np.abs(K).max())):
            raise LocalSolveError(f"singular local saddle-point system on AE {ae} (is it connected?)")
        sol = scipy.linalg.lu_solve(lu, rhs)
        P[I, :n_c] = sol[:n_i]
    P[n_f:, n_c] = 1.0
    A_c = P.T @ A @ P
    A_c = 0.5 * (A_c + A_c.T)
    return LocalInterp(ae, facets, elements, cfacets, cfacet_sign, P, A, A_c)


def coarse_element_matrices(interps):
    """``[P_T^T A_T P_T for each AE]``."""
    return [li.A_c for li in interps]


def assemble_global_P(level: Level, interps, n_cfacets, n_ae) -> SparseMatrix:
    """Global interpolation from fine true dofs to coarse true dofs.

    Fine facets on a coarse facet receive a value from each adjacent AE;
    those values must agree.
    """
    nf = level.n_facets
    rows, cols, vals = [], [], []
    for li in interps:
        nz = np.nonzero(li.P_T[:len(li.facets), :len(li.cfacets)])
        rows.append(li.facets[nz[0]])
        cols.append(li.cfacets[nz[1]])
        vals.append(li.P_T[nz])
        rows.append(nf + li.elements)
        cols.append(np.full(len(li.elements), n_cfacets + li.ae))
        vals.append(li.P_T[len(li.facets):, -1])
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    n_rows, n_cols = nf + level.n_elements, n_cfacets + n_ae
    key = rows * n_cols + cols
    order = np.argsort(key, kind="stable")
    key, vals = key[order], vals[order]
    uniq, start = np.unique(key, return_index=True)
    spread = np.maximum.reduceat(vals, start) - np.minimum.reduceat(vals, start)
    if np.any(spread > CONFORMITY_TOL):
        bad = int(np.argmax(spread))
        raise ConformityError(f"interpolation entry ({uniq[bad] // n_cols}, {uniq[bad] % n_cols}) differs by "
                              f"{spread[bad]:.3e} between AEs")
    r = uniq // n_cols
    indptr = np.zeros(n_rows + 1, dtype=INDEX)
    np.cumsum(np.bincount(r, minlength=n_rows), out=indptr[1:])
    return SparseMatrix(indptr, uniq - r * n_cols, vals[start], n_cols, "truedof", "coarsetruedof")


@dataclass(eq=False)
class Coarsening:
    level: Level
    P: SparseMatrix
    interps: list
    cfacet_facet: Relation


def coarsen(level: Level, AE_element: Relation, layout: CoreLayout, ledger: CommLedger | None = None) -> Coarsening:
    """Build the next level from an AE partition of ``level``.

    ``layout`` is the core layout of the new level (its ``core_element`` is
    over AEs). AE-local products are logged against ``level.layout`` with AEs
    owned by the core that owns their elements.
    """
    if not is_partition(AE_element):
        raise ValueError("AE_element must partition the elements")
    ledger = ledger if ledger is not None else CommLedger()
    n_ae = AE_element.nrows
    ae_of = AE_element.assignment()

    # AE-local relation products on the fine layout
    fine_layout = level.layout
    el_owner = fine_layout.owner("element")
    ae_owner = el_owner[AE_element.indices[AE_element.indptr[:-1]]]
    if np.any(el_owner != ae_owner[ae_of]):
        raise ValueError("an AE spans several cores")
    fine_layout.set_owner("AE", ae_owner)
    AE_element = AE_element.relabel("AE", "element")
    AE_dof, _ = dist_bool_multiply(AE_element, level.dofs.element_dof, fine_layout, ledger, level.index, "AE_dof")
    AE_facet, _ = dist_bool_multiply(AE_element, level.element_facet, fine_layout, ledger, level.index, "AE_facet")

    cfacet_facet, interior_owner = coarse_facets(level, AE_element)
    n_cf = cfacet_facet.nrows
    facet_cfacet = cfacet_facet.T
    cf_of = np.full(level.n_facets, -1, dtype=INDEX)
    cf_of[facet_cfacet.rows()] = facet_cfacet.indices
    cf_measure = np.bincount(cf_of[cf_of >= 0], weights=level.facet_measure[cf_of >= 0], minlength=n_cf)

    # outward sign of every fine facet on a coarse facet, as seen from its AE
    inc_dof = level.incidence_dofs()
    inc_sign = level.dofs.dof_sign[inc_dof]
    inc_f = level.element_facet.indices
    inc_ae = ae_of[level.element_facet.rows()]
    lowest_f = cfacet_facet.indices[cfacet_facet.indptr[:-1]]
    on_cf = cf_of[inc_f] >= 0
    sign_f_in_ae = {(int(a), int(f)): float(sg) for f, sg, a in zip(inc_f[on_cf], inc_sign[on_cf], inc_ae[on_cf])}
    AE_cfacet = bool_multiply(AE_facet.relabel(col_kind="finefacet"), facet_cfacet.relabel("finefacet", "facet"))

    interps = []
    for T in range(n_ae):
        elements = AE_element.row(T)
        facets = AE_facet.row(T)
        interior_mask = interior_owner[facets] == T
        cfs = AE_cfacet.row(T)
        signs = np.empty(len(cfs))
        weights = []
        for j, F in enumerate(cfs):
            f0 = int(lowest_f[F])
            sF = sign_f_in_ae[(T, f0)]
            signs[j] = sF
            wgt = np.zeros(len(facets))
            members = cfacet_facet.row(F)
            idx = np.searchsorted(facets, members)
            for i, f in zip(idx, members):
                # o(f, F) |f| / |F| with o(f, F) = s_f(T) s_F(T)
                wgt[i] = sign_f_in_ae[(T, int(f))] * sF * level.facet_measure[f] / cf_measure[F]
            weights.append(wgt)
        interps.append(build_local_interpolation(level, T, elements, facets, interior_mask, cfs, weights, signs))

    P = assemble_global_P(level, interps, n_cf, n_ae)

    # coarse level structure
    ed_rows, ed_sign, ed_kind, dt_cols = [], [], [], []
    for T, li in enumerate(interps):
        for F, s in zip(li.cfacets, li.cfacet_sign):
            ed_rows.append(T)
            ed_sign.append(s)
            ed_kind.append(VELOCITY)
            dt_cols.append(F)
        ed_rows.append(T)
        ed_sign.append(1.0)
        ed_kind.append(PRESSURE)
        dt_cols.append(n_cf + T)
    n_dofs = len(ed_rows)
    element_dof = Relation.from_pairs(ed_rows, np.arange(n_dofs), n_ae, n_dofs, "element", "dof")
    dof_truedof = Relation.from_pairs(np.arange(n_dofs), dt_cols, n_dofs, n_cf + n_ae, "dof", "truedof")
    dofs = DofSpace(element_dof, dof_truedof, np.array(ed_sign), np.array(ed_kind, dtype=INDEX), n_cf,
                    np.concatenate([np.arange(n_cf), np.arange(n_ae)]).astype(INDEX))
    cattr = np.zeros(n_cf, dtype=INDEX)
    cface = np.full(n_cf, -1, dtype=INDEX)
    cattr[cf_of[cf_of >= 0]] = level.facet_attr[cf_of >= 0]
    cface[cf_of[cf_of >= 0]] = level.facet_face[cf_of >= 0]
    element_facet = AE_cfacet.relabel("element", "facet")
    facet_vertex = bool_multiply(cfacet_facet.relabel(col_kind="facet"), level.facet_vertex)
    element_measure = np.bincount(ae_of, weights=level.element_measure, minlength=n_ae)
    element_origin = bool_multiply(AE_element.relabel(col_kind="element"), level.element_origin)
    coarse = Level(level.index + 1, level.dim, element_facet, facet_vertex, cattr, cface, cf_measure,
                   element_measure, element_origin.relabel("element", "origin"), dofs,
                   coarse_element_matrices(interps), layout)
    _attach_ownership(layout, coarse)
    return Coarsening(coarse, P, interps, cfacet_facet)


def galerkin_pair(fine: Level, P: SparseMatrix, coarse: Level):
    """``(P^T A P, assembled coarse operator)`` as scipy matrices."""
    A = fine.assemble().to_scipy()
    Pm = P.to_scipy()
    return (Pm.T @ A @ Pm).tocsr(), coarse.assemble().to_scipy().tocsr()


# redistributed copies ---------------------------------------------------------

def redistributed_level(level: Level, maps: RedistributionMaps, A_diag_new: SparseMatrix, layout: CoreLayout):
    """The same level laid out on the new core configuration.

    Elements become the new elements, dofs the new dofs and true dofs the new
    true dofs; facets follow their velocity true dofs.
    """
    ne_e = maps.newelement_element
    nd_d = maps.newdof_dof
    ntd_td = maps.newtruedof_truedof
    e_of = ne_e.indices
    d_of = nd_d.indices
    td_of = ntd_td.indices
    nv = level.dofs.n_vel_truedofs
    if np.any(td_of[:nv] >= nv) or np.any(td_of[nv:] < nv):
        raise ValueError("new true dofs must list velocity before pressure")
    facet_of = level.dofs.truedof_entity[td_of[:nv]]
    newtd_of_td = np.empty_like(td_of)
    newtd_of_td[td_of] = np.arange(len(td_of))

    newdof_newtruedof = Relation.from_pairs(np.arange(len(d_of)), newtd_of_td[level.dofs.dof_truedof.indices[d_of]],
                                            len(d_of), len(td_of), "dof", "truedof")
    newfacet_of_facet = np.empty(level.n_facets, dtype=INDEX)
    newfacet_of_facet[facet_of] = np.arange(nv)
    ef = level.element_facet.take_rows(e_of)
    element_facet = Relation.from_pairs(ef.rows(), newfacet_of_facet[ef.indices], len(e_of), level.n_facets,
                                        "element", "facet")
    dofs = DofSpace(maps.newelement_newdof.relabel("element", "dof"), newdof_newtruedof, level.dofs.dof_sign[d_of],
                    level.dofs.dof_kind[d_of], nv,
                    np.concatenate([np.arange(nv), np.arange(len(td_of) - nv)]).astype(INDEX))
    blocks = []
    Ad = A_diag_new.to_scipy().tocsr()
    for e in range(len(e_of)):
        d = dofs.element_dof.row(e)
        blocks.append(Ad[d][:, d].toarray())
    red = Level(level.index, level.dim, element_facet, level.facet_vertex.take_rows(facet_of),
                level.facet_attr[facet_of], level.facet_face[facet_of], level.facet_measure[facet_of],
                level.element_measure[e_of], level.element_origin.take_rows(e_of), dofs, blocks, layout,
                redistribution=maps)
    _attach_ownership(layout, red)
    return red


# hierarchy ----------------------------------------------------------------------

@dataclass(frozen=True)
class HierarchyConfig:
    n_levels: int = 3
    factor: int = 8
    beta_c: int = 8
    min_local: int = 64
    n_cores: int = 1
    redistribution: bool = True
    balance_tol: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_levels < 1 or self.factor < 1 or self.beta_c < 1 or self.min_local < 1 or self.n_cores < 1:
            raise ValueError("hierarchy parameters must be positive")


@dataclass(frozen=True)
class PlanLevel:
    global_elements: int
    local_elements: int
    n_cores: int
    redistributed: bool


@dataclass(frozen=True)
class HierarchyPlan:
    levels: tuple
    redistribution: bool

    def local_sizes(self):
        return [lv.local_elements for lv in self.levels]

    def pairs(self):
        return [(lv.local_elements, lv.n_cores) for lv in self.levels]

    def to_dict(self):
        return {"redistribution": self.redistribution,
                "levels": [{"level": i, "global_elements": lv.global_elements, "local_elements": lv.local_elements,
                            "n_cores": lv.n_cores, "redistributed": lv.redistributed}
                           for i, lv in enumerate(self.levels)]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(PlanLevel(int(d["global_elements"]), int(d["local_elements"]), int(d["n_cores"]),
                                   bool(d["redistributed"])) for d in data["levels"]), bool(data["redistribution"]))


def _cdiv(a, b):
    return -(-a // b)


def plan_hierarchy(global_ne, n_cores, factor, beta_c=8, min_local=64, redistribution=True, max_levels=None):
    """Element counts and active cores per level of a uniform hierarchy.

    Each level divides the global element count by ``factor``. A level is
    added while the coarsened count still gives every active core at least
    one element and exceeds one. With redistribution, whenever the next local
    size would drop below ``min_local`` the active core count is divided by
    ``beta_c`` (rounding up), repeatedly if needed, before coarsening.
    """
    if min(global_ne, n_cores, factor, beta_c, min_local) < 1:
        raise ValueError("plan parameters must be positive")
    nc = int(n_cores)
    g = int(global_ne)
    levels = [PlanLevel(g, _cdiv(g, nc), nc, False)]
    while max_levels is None or len(levels) < max_levels:
        if factor == 1:
            break
        g_next = _cdiv(g, factor)
        moved = False
        nc_next = nc
        if redistribution:
            while nc_next > 1 and _cdiv(g_next, nc_next) < min_local:
                nc_next = _cdiv(nc_next, beta_c)
                moved = True
        if g_next < nc_next or g_next <= 1 or g_next >= g:
            break
        g, nc = g_next, nc_next
        levels.append(PlanLevel(g, _cdiv(g, nc), nc, moved))
    return HierarchyPlan(tuple(levels), bool(redistribution))


@dataclass(eq=False)
class Hierarchy:
    levels: list
    config: HierarchyConfig
    ledger: CommLedger
    build_seconds: float

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    def plan(self):
        out = []
        for lv in self.levels:
            out.append(PlanLevel(lv.n_elements, lv.layout.max_local(), lv.n_active, lv.redistribution is not None))
        return HierarchyPlan(tuple(out), self.config.redistribution)

    def dump(self, directory):
        """Per-level P, A, relations (Matrix Market) and a JSON plan."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for lv in self.levels:
            d = directory / f"level{lv.index}"
            d.mkdir(exist_ok=True)
            write_mm(d / "A.mtx", lv.assemble())
            if lv.P is not None:
                write_mm(d / "P.mtx", lv.P)
            write_mm(d / "element_facet.mtx", lv.element_facet)
            write_mm(d / "element_dof.mtx", lv.dofs.element_dof)
            write_mm(d / "dof_truedof.mtx", lv.dofs.dof_truedof)
            write_mm(d / "core_element.mtx", lv.layout.core_element)
            write_mm(d / "element_origin.mtx", lv.element_origin)
            if lv.redistribution is not None:
                lv.redistribution.dump(d / "redistribution")
        plan = self.plan().to_dict()
        plan["levels_detail"] = [lv.summary() for lv in self.levels]
        (directory / "plan.json").write_text(json.dumps(plan, indent=2, sort_keys=True) + "\n")


def _log_level_products(level: Level, ledger: CommLedger):
    dist_bool_multiply(level.element_facet, level.facet_element, level.layout, ledger, level.index,
                       "element_element")
    dt = level.dofs.dof_truedof
    dist_bool_multiply(dt.T, dt, level.layout, ledger, level.index, "truedof_truedof")


def _log_move(old_layout: CoreLayout, new_owner_phys, level: Level, ledger: CommLedger):
    """One message per (old owner, new owner) pair; volume = moved element-matrix entries."""
    old_phys = old_layout.active[old_layout.owner("element")]
    size = level.dofs.element_dof.row_counts() ** 2
    pairs = {}
    for e in range(level.n_elements):
        s, d = int(old_phys[e]), int(new_owner_phys[e])
        if s != d:
            pairs[(s, d)] = pairs.get((s, d), 0) + int(size[e])
    for (s, d), v in sorted(pairs.items()):
        ledger.record(level.index, "redistribution", s, d, 1, v)


def build_hierarchy(mesh, config: HierarchyConfig) -> Hierarchy:
    """Coarsen the fine mesh level by level, redistributing when cores run dry.

    Without redistribution every core agglomerates its own elements, so AEs
    never straddle cores and the hierarchy stops once a core is down to one
    element. With redistribution, when the next local size would fall below
    ``min_local`` the active cores are grouped by ``beta_c`` (repeatedly if
    needed) and the level is moved to the grouped configuration first.
    """
    t_start = time.perf_counter()
    ledger = CommLedger()
    ee = mesh.element_element()
    layout = initial_layout(ee, config.n_cores)
    level = fine_level(mesh, layout)
    levels = [level]
    _log_level_products(level, ledger)
    while len(levels) < config.n_levels and config.factor > 1:
        t0 = time.perf_counter()
        cur = levels[-1]
        M = cur.n_elements
        nc = cur.n_active
        g_next = _cdiv(M, config.factor)
        if g_next <= 1:
            break
        need = config.redistribution and nc > 1 and _cdiv(g_next, nc) < config.min_local
        ee = cur.element_element()
        if need:
            maps, work = _redistribute(cur, ee, config, ledger)
            AE_local = maps.AE_newelement
            red_layout = work.layout
            Core_of_ae = red_layout.owner("element")[AE_local.indices[AE_local.indptr[:-1]]]
            coarse_layout = CoreLayout(cur.layout.n_cores_total, red_layout.active,
                                       Relation.from_assignment(Core_of_ae, red_layout.n_active, "core", "element"))
            step = coarsen(work, AE_local.relabel("AE", "element"), coarse_layout, ledger)
            P = compose_interpolation(maps.newtruedof_truedof, step.P)
        else:
            maps = None
            AE_element = local_agglomerate(cur.layout.core_element, ee, config.factor, config.balance_tol,
                                           config.seed)
            core_of_ae = cur.layout.owner("element")[AE_element.indices[AE_element.indptr[:-1]]]
            coarse_layout = CoreLayout(cur.layout.n_cores_total, cur.layout.active,
                                       Relation.from_assignment(core_of_ae, nc, "core", "element"))
            step = coarsen(cur, AE_element, coarse_layout, ledger)
            P = step.P
        coarse = step.level
        if coarse.n_elements >= M:
            break
        coarse.P = SparseMatrix(P.indptr, P.indices, P.data, P.ncols, "truedof", "coarsetruedof")
        coarse.redistribution = maps
        _log_level_products(coarse, ledger)
        coarse.build_seconds = time.perf_counter() - t0
        levels.append(coarse)
    for lv in levels:
        lv.ledger = ledger.filter(level=lv.index)
    return Hierarchy(levels, config, ledger, time.perf_counter() - t_start)


def _redistribute(level: Level, ee: Relation, config: HierarchyConfig, ledger: CommLedger):
    """Group the cores, move the level and agglomerate on the new configuration."""
    layout = level.layout
    core_element = layout.core_element.relabel("core", "element")
    core_core, _ = dist_bool_multiply(core_element, ee, layout, ledger, level.index, "core_element_element")
    core_core = bool_multiply(core_core, core_element.T)
    g_next = _cdiv(level.n_elements, config.factor)
    Core_core = coarsen_cores(core_core, config.beta_c, config.seed)
    while Core_core.nrows > 1 and _cdiv(g_next, Core_core.nrows) < config.min_local:
        CC = bool_multiply(bool_multiply(Core_core, core_core), Core_core.T).relabel("Core", "Core")
        group = coarsen_cores(CC, config.beta_c, config.seed)
        Core_core = bool_multiply(group.relabel(col_kind="Core"), Core_core)
    Core_core = Core_core.relabel("Core", "core")
    Core_element, newelement_element = redistribute_elements(Core_core, core_element)
    Cnew = core_newelement(Core_element)
    AE_newelement, AE_element = agglomerate_after_redistribution(newelement_element, ee, Cnew, config.factor,
                                                                 config.balance_tol, config.seed)
    newdof_dof, newelement_newdof = build_newdof_dof(AE_element, level.dofs.element_dof, newelement_element)
    A_diag_new = redistribute_element_matrices(level.A_diag(), newdof_dof)
    newdof_Core = Cnew.assignment()[newelement_newdof.assignment()]
    newtruedof_newdof, newtruedof_truedof = select_newtruedofs(newdof_dof, level.dofs.dof_truedof,
                                                               level.dofs.n_vel_truedofs, newdof_Core)
    active = active_cores(Core_core, layout.active)
    maps = RedistributionMaps(config.beta_c, Core_core, Core_element, newelement_element, Cnew, AE_newelement,
                              AE_element, newdof_dof, newelement_newdof, newtruedof_newdof, newtruedof_truedof,
                              active)
    new_layout = CoreLayout(layout.n_cores_total, active, Cnew.relabel("core", "element"))
    phys_of_element = np.empty(level.n_elements, dtype=INDEX)
    phys_of_element[newelement_element.indices] = active[Cnew.assignment()]
    _log_move(layout, phys_of_element, level, ledger)
    work = redistributed_level(level, maps, A_diag_new, new_layout)
    return maps, work


def redistribute_level(level: Level, config: HierarchyConfig, ledger: CommLedger | None = None):
    """Move ``level`` to grouped cores and agglomerate there.

    Returns ``(maps, moved)`` where ``moved`` is the same discrete operator
    on the new configuration: its assembled matrix is
    ``Pi A Pi^T`` with ``Pi = maps.newtruedof_truedof``.
    """
    ledger = ledger if ledger is not None else CommLedger()
    return _redistribute(level, level.element_element(), config, ledger)
