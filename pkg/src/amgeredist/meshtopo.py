"""Structured quad/hex meshes, decoupled RT0/P0 dof spaces and element matrices.

Conventions
-----------
* Elements are numbered with x fastest: ``e = i + nx * (j + ny * k)``.
* Facets are grouped by normal axis (all x-normal facets, then y, then z)
  and numbered x-fastest on their lattice. Each element lists its facets in
  ascending order, which is ``[x-, x+, y-, y+, z-, z+]``.
* Every facet carries a global normal pointing in the +axis direction. A
  velocity dof has sign +1 when that normal is outward for its owning
  element (the element sits on the - side), -1 otherwise.
* Velocity dofs are normal fluxes through facets (integrated, not averaged).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .relmat import INDEX, Relation, SparseMatrix, write_mm

INTERIOR = 0
DIRICHLET_IN = 1
OUTFLOW = 2
NEUMANN = 3

ATTRIBUTE_NAMES = {INTERIOR: "interior", DIRICHLET_IN: "dirichlet_in", OUTFLOW: "outflow", NEUMANN: "neumann"}

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")

VELOCITY = 0
PRESSURE = 1


def default_boundary_spec(dim):
    spec = {face: NEUMANN for face in FACES[: 2 * dim]}
    spec["x-"] = DIRICHLET_IN
    spec["x+"] = OUTFLOW
    return spec


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    shape: tuple
    spacing: tuple
    vertex_coords: np.ndarray
    element_centroid: np.ndarray
    element_measure: np.ndarray
    facet_measure: np.ndarray
    facet_axis: np.ndarray
    facet_attr: np.ndarray
    element_facet: Relation
    facet_vertex: Relation
    boundary_spec: dict = field(default_factory=dict)

    @property
    def n_elements(self):
        return len(self.element_measure)

    @property
    def n_facets(self):
        return len(self.facet_measure)

    @property
    def h(self):
        return max(self.spacing)

    @property
    def facet_element(self):
        return self.element_facet.T

    def element_element(self):
        return self.element_facet @ self.facet_element


def _facet_offsets(shape):
    dim = len(shape)
    sizes = []
    for a in range(dim):
        dims = list(shape)
        dims[a] += 1
        sizes.append(int(np.prod(dims)))
    return np.concatenate([[0], np.cumsum(sizes)]).astype(INDEX)


def _facet_index(shape, axis, idx):
    dims = list(shape)
    dims[axis] += 1
    return _facet_offsets(shape)[axis] + np.ravel_multi_index(idx, dims, order="F")


def build_mesh(dim, n_per_axis, boundary_spec=None) -> Mesh:
    """Structured mesh of the unit square/cube.

    ``n_per_axis`` is an int or a tuple of per-axis cell counts. Boundary faces
    are labelled from ``boundary_spec`` (face name -> attribute); by default the
    x- face is the Dirichlet inflow, x+ the outflow and the rest Neumann.
    """
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    shape = (int(n_per_axis),) * dim if np.isscalar(n_per_axis) else tuple(int(n) for n in n_per_axis)
    if len(shape) != dim:
        raise ValueError("n_per_axis does not match dim")
    if min(shape) < 1:
        raise ValueError("n_per_axis must be >= 1")
    spec = default_boundary_spec(dim)
    spec.update(boundary_spec or {})

    spacing = tuple(1.0 / n for n in shape)
    n_el = int(np.prod(shape))
    cell = np.array(np.unravel_index(np.arange(n_el), shape, order="F"))  # (dim, n_el)
    centroid = ((cell.T + 0.5) * np.array(spacing))
    measure = np.full(n_el, float(np.prod(spacing)))

    vdims = tuple(n + 1 for n in shape)
    n_vert = int(np.prod(vdims))
    vcoords = np.array(np.unravel_index(np.arange(n_vert), vdims, order="F")).T * np.array(spacing)

    offsets = _facet_offsets(shape)
    n_facets = int(offsets[-1])
    f_axis = np.empty(n_facets, dtype=INDEX)
    f_measure = np.empty(n_facets)
    f_attr = np.zeros(n_facets, dtype=INDEX)
    fv_rows, fv_cols = [], []
    for a in range(dim):
        dims = list(shape)
        dims[a] += 1
        count = int(np.prod(dims))
        ids = offsets[a] + np.arange(count)
        f_axis[ids] = a
        f_measure[ids] = np.prod(spacing) / spacing[a]
        lattice = np.array(np.unravel_index(np.arange(count), dims, order="F"))
        f_attr[ids[lattice[a] == 0]] = spec[FACES[2 * a]]
        f_attr[ids[lattice[a] == shape[a]]] = spec[FACES[2 * a + 1]]
        others = [b for b in range(dim) if b != a]
        for corner in np.ndindex(*(2,) * (dim - 1)):
            v = lattice.copy()
            for b, c in zip(others, corner):
                v[b] += c
            fv_rows.append(ids)
            fv_cols.append(np.ravel_multi_index(v, vdims, order="F"))
    facet_vertex = Relation.from_pairs(np.concatenate(fv_rows), np.concatenate(fv_cols), n_facets, n_vert,
                                       "facet", "vertex")

    ef_rows, ef_cols = [], []
    for a in range(dim):
        for shift in (0, 1):
            idx = cell.copy()
            idx[a] += shift
            ef_rows.append(np.arange(n_el))
            ef_cols.append(_facet_index(shape, a, idx))
    element_facet = Relation.from_pairs(np.concatenate(ef_rows), np.concatenate(ef_cols), n_el, n_facets,
                                        "element", "facet")
    return Mesh(dim, shape, spacing, vcoords, centroid, measure, f_measure, f_axis, f_attr, element_facet,
                facet_vertex, spec)


def facet_domain_face(mesh):
    """Index into ``FACES`` of the domain face holding each facet (-1 for interior)."""
    face = np.full(mesh.n_facets, -1, dtype=INDEX)
    rows = mesh.facet_vertex.rows()
    coords = mesh.vertex_coords[mesh.facet_vertex.indices]
    for a in range(mesh.dim):
        on_axis = mesh.facet_axis == a
        x = np.full(mesh.n_facets, np.nan)
        x[rows] = coords[:, a]
        face[on_axis & (x == 0.0)] = 2 * a
        face[on_axis & np.isclose(x, 1.0, rtol=0, atol=1e-12)] = 2 * a + 1
    return face


# dofs ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DofSpace:
    """Decoupled dofs and their map to true dofs.

    True dofs are laid out as ``[velocity (one per facet) | pressure (one per
    element)]``; ``truedof_entity`` gives the facet or element behind each.
    """

    element_dof: Relation
    dof_truedof: Relation
    dof_sign: np.ndarray
    dof_kind: np.ndarray
    n_vel_truedofs: int
    truedof_entity: np.ndarray

    @property
    def n_dofs(self):
        return self.element_dof.ncols

    @property
    def n_truedofs(self):
        return self.dof_truedof.ncols

    @property
    def n_elements(self):
        return self.element_dof.nrows

    def dof_truedof_index(self):
        """Truedof of each dof (``dof_truedof`` has exactly one entry per row)."""
        if np.any(self.dof_truedof.row_counts() != 1):
            raise ValueError("dof_truedof must map every dof to exactly one truedof")
        return self.dof_truedof.indices.copy()

    def dof_element_index(self):
        return self.element_dof.assignment()


def build_dofs(mesh, boundary=True, pressure=True) -> DofSpace:
    """One velocity dof per element-facet incidence plus one pressure dof per element.

    ``boundary=False`` drops dofs on boundary facets and ``pressure=False``
    drops pressure dofs; both only serve to reproduce figure-style relation
    tables and are not valid inputs to :func:`element_matrices`.
    """
    ef = mesh.element_facet
    attr = mesh.facet_attr
    keep_facet = np.ones(mesh.n_facets, dtype=bool) if boundary else attr == INTERIOR
    vel_td = np.full(mesh.n_facets, -1, dtype=INDEX)
    vel_td[keep_facet] = np.arange(int(keep_facet.sum()))
    n_vel = int(keep_facet.sum())

    ed_rows, dt_cols, signs, kinds, entity = [], [], [], [], []
    facet_lo = _lower_element(mesh)
    for e in range(mesh.n_elements):
        for f in ef.row(e):
            if not keep_facet[f]:
                continue
            ed_rows.append(e)
            dt_cols.append(vel_td[f])
            signs.append(1.0 if facet_lo[f] == e else -1.0)
            kinds.append(VELOCITY)
        if pressure:
            ed_rows.append(e)
            dt_cols.append(n_vel + e)
            signs.append(1.0)
            kinds.append(PRESSURE)
    n_dofs = len(ed_rows)
    n_td = n_vel + (mesh.n_elements if pressure else 0)
    entity = np.concatenate([np.flatnonzero(keep_facet), np.arange(mesh.n_elements) if pressure else []]).astype(INDEX)
    element_dof = Relation.from_pairs(ed_rows, np.arange(n_dofs), mesh.n_elements, n_dofs, "element", "dof")
    dof_truedof = Relation.from_pairs(np.arange(n_dofs), dt_cols, n_dofs, n_td, "dof", "truedof")
    return DofSpace(element_dof, dof_truedof, np.array(signs), np.array(kinds, dtype=INDEX), n_vel, entity)


def _lower_element(mesh):
    """Element on the - side of each facet (-1 if none)."""
    lo = np.full(mesh.n_facets, -1, dtype=INDEX)
    per_element = mesh.element_facet.indices.reshape(mesh.n_elements, 2 * mesh.dim)
    for a in range(mesh.dim):
        lo[per_element[:, 2 * a + 1]] = np.arange(mesh.n_elements)
    return lo


# element matrices ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ElementMatrices:
    """Dense per-element blocks ordered ``[velocity dofs | pressure dof]``."""

    blocks: list
    k: np.ndarray


def reference_mass(spacing):
    """RT0 flux-dof mass matrix of an axis-aligned box, facets ``[x-, x+, y-, y+, ...]``.

    The basis function of facet ``x+`` is ``(x / (hx * |facet|), 0, ..)``, so the
    x-block is ``hx / (6 |facet_x|) [[2, 1], [1, 2]]``; axes do not couple.
    """
    dim = len(spacing)
    vol = float(np.prod(spacing))
    m = np.zeros((2 * dim, 2 * dim))
    for a, h in enumerate(spacing):
        area = vol / h
        m[2 * a:2 * a + 2, 2 * a:2 * a + 2] = h / (6.0 * area) * np.array([[2.0, 1.0], [1.0, 2.0]])
    return m


def reference_divergence(dim):
    """Outward flux sums of the +axis-oriented facet basis: ``[-1, +1, -1, +1, ..]``."""
    return np.tile([-1.0, 1.0], dim)


def element_matrices(mesh, k) -> ElementMatrices:
    """Saddle blocks ``[[M / k, B^T], [B, 0]]`` for every element."""
    k = np.broadcast_to(np.asarray(k, dtype=np.float64), (mesh.n_elements,))
    if np.any(~(k > 0)):
        raise ValueError("permeability must be positive")
    m = reference_mass(mesh.spacing)
    b = reference_divergence(mesh.dim)
    nv = 2 * mesh.dim
    blocks = []
    for ke in k:
        a = np.zeros((nv + 1, nv + 1))
        a[:nv, :nv] = m / ke
        a[nv, :nv] = b
        a[:nv, nv] = b
        blocks.append(a)
    return ElementMatrices(blocks, np.array(k))


def block_diagonal(element_dof: Relation, blocks) -> SparseMatrix:
    """``A_diag``: dof-by-dof block-diagonal matrix, structural zeros kept."""
    rows, cols, vals = [], [], []
    for e, block in enumerate(blocks):
        d = element_dof.row(e)
        rows.append(np.repeat(d, len(d)))
        cols.append(np.tile(d, len(d)))
        vals.append(np.asarray(block).ravel())
    n = element_dof.ncols
    if not rows:
        return SparseMatrix(np.zeros(n + 1), [], [], n, "dof", "dof")
    return SparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n), "dof", "dof")


def dump_mesh(mesh, directory):
    """Write topology relations as Matrix Market plus a ``mesh.txt`` metadata file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_mm(directory / "element_facet.mtx", mesh.element_facet)
    write_mm(directory / "facet_vertex.mtx", mesh.facet_vertex)
    lines = [
        f"dim {mesh.dim}",
        "n_per_axis " + " ".join(str(n) for n in mesh.shape),
        "n_elements %d" % mesh.n_elements,
        "n_facets %d" % mesh.n_facets,
    ]
    lines += [f"face {face} {ATTRIBUTE_NAMES[a]}" for face, a in mesh.boundary_spec.items()]
    lines.append("facet_attributes " + " ".join(str(int(a)) for a in mesh.facet_attr))
    (directory / "mesh.txt").write_text("\n".join(lines) + "\n")
