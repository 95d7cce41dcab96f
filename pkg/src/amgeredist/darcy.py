"""Mixed Darcy assembly, solve and outflow flux.

Unknowns are the flux true dofs ``q`` and ``p' = -p``, which makes the
global matrix ``[[M(k), B^T], [B, 0]]`` symmetric with ``B`` the outward
flux sum per element. Dirichlet pressure enters the velocity right-hand side
as ``-p_D s_f`` on each Dirichlet facet (``s_f`` the outward sign of the
facet's only dof); Neumann flux true dofs are removed from the system.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .meshtopo import DIRICHLET_IN, NEUMANN, OUTFLOW, VELOCITY
from .relmat import INDEX, Relation, SparseMatrix, num_triple_product, write_mm_array

RESIDUAL_TOL = 1e-10


class SolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundaryConfig:
    """Pressure on the inflow and outflow faces; all other boundary facets are no-flow."""

    p_in: float = 1.0
    p_out: float = 0.0

    def dirichlet_value(self, attr):
        return np.where(attr == DIRICHLET_IN, self.p_in, np.where(attr == OUTFLOW, self.p_out, 0.0))


@dataclass(eq=False)
class Solution:
    q: np.ndarray
    p: np.ndarray
    residual: float


def assemble(A_diag: SparseMatrix, dof_truedof: Relation) -> SparseMatrix:
    """``dof_truedof^T A_diag dof_truedof``."""
    if A_diag.nrows != dof_truedof.nrows or A_diag.ncols != dof_truedof.nrows:
        raise ValueError(f"A_diag {A_diag.shape} does not match dof_truedof {dof_truedof.shape}")
    return num_triple_product(dof_truedof.T, A_diag, dof_truedof)


class DarcyOperator:
    """Per-level solver with the assembly pattern precomputed.

    For permeability ``k`` (one value per element) the velocity entries of
    element ``e`` are divided by ``k[e]`` and scattered into the reduced
    system (Neumann flux dofs removed) through a fixed sparse map.
    """

    def __init__(self, level):
        self.level = level
        dofs = level.dofs
        nv = dofs.n_vel_truedofs
        n_td = dofs.n_truedofs
        td = dofs.dof_truedof_index()
        self.n_vel = nv
        self.n_truedofs = n_td

        vel_td = np.arange(nv)
        facet = dofs.truedof_entity[:nv]
        attr = level.facet_attr[facet]
        self.facet_attr = attr
        td_dofs = dofs.dof_truedof.T
        boundary = td_dofs.row_counts()[:nv] == 1
        self.td_sign = np.zeros(nv)
        first_dof = td_dofs.indices[td_dofs.indptr[:nv]]
        self.td_sign[boundary] = dofs.dof_sign[first_dof[boundary]]
        self.outflow = np.flatnonzero(boundary & (attr == OUTFLOW))
        self.dirichlet = np.flatnonzero(boundary & ((attr == DIRICHLET_IN) | (attr == OUTFLOW)))
        self.outflow_measure = float(level.facet_measure[facet[self.outflow]].sum())

        keep = np.ones(n_td, dtype=bool)
        keep[vel_td[boundary & (attr == NEUMANN)]] = False
        if len(self.dirichlet) == 0:
            keep[n_td - 1] = False  # pin one pressure when nothing fixes its level
        self.free = np.flatnonzero(keep)
        new = np.full(n_td, -1, dtype=INDEX)
        new[self.free] = np.arange(len(self.free))
        n = len(self.free)

        A_diag = level.A_diag()
        rows = A_diag.rows()
        cols = A_diag.indices
        dof_el = dofs.dof_element_index()
        self.entry_element = dof_el[rows]
        self.entry_velocity = (dofs.dof_kind[rows] == VELOCITY) & (dofs.dof_kind[cols] == VELOCITY)
        self.ref_data = A_diag.data.copy()
        r, c = new[td[rows]], new[td[cols]]
        ok = (r >= 0) & (c >= 0)
        key = r[ok] * n + c[ok]
        uniq, slot = np.unique(key, return_inverse=True)
        self.pattern_rows = uniq // n
        self.pattern_cols = uniq - self.pattern_rows * n
        indptr = np.zeros(n + 1, dtype=INDEX)
        np.cumsum(np.bincount(self.pattern_rows, minlength=n), out=indptr[1:])
        self.indptr = indptr
        self.scatter = sp.csr_array((np.ones(len(slot)), (slot, np.flatnonzero(ok))),
                                    shape=(len(uniq), A_diag.nnz))
        self.n = n

    def element_scale(self, k):
        if k is None:
            return np.ones(self.level.n_elements)
        k = np.broadcast_to(np.asarray(k, dtype=np.float64), (self.level.n_elements,))
        if np.any(~(k > 0)):
            raise ValueError("permeability must be positive")
        return 1.0 / k

    def matrix(self, k=None):
        """Reduced system matrix (free true dofs only) for permeability ``k``."""
        scale = np.where(self.entry_velocity, self.element_scale(k)[self.entry_element], 1.0)
        data = self.scatter @ (self.ref_data * scale)
        return sp.csr_array((data, self.pattern_cols, self.indptr), shape=(self.n, self.n))

    def rhs(self, bc: BoundaryConfig):
        b = np.zeros(self.n_truedofs)
        d = self.dirichlet
        b[d] = -bc.dirichlet_value(self.facet_attr[d]) * self.td_sign[d]
        return b

    def solve(self, k=None, bc: BoundaryConfig = BoundaryConfig(), max_refine=3) -> Solution:
        A = self.matrix(k)
        b_full = self.rhs(bc)
        b = b_full[self.free]
        return _solve_reduced(A, b, self.free, self.n_vel, self.n_truedofs, max_refine)

    def qoi(self, sol: Solution):
        if len(self.outflow) == 0:
            raise ValueError("no outflow boundary")
        return float(np.dot(self.td_sign[self.outflow], sol.q[self.outflow]) / self.outflow_measure)

    def divergence(self, sol: Solution, k=None):
        """Net outward flux of every element."""
        A = self.full_matrix(k)
        return A[self.n_vel:, :self.n_vel] @ sol.q

    def full_matrix(self, k=None):
        A = assemble(self.level.A_diag(), self.level.dofs.dof_truedof).to_scipy().tocsr()
        if k is None:
            return A
        s = self.element_scale(k)
        scaled = np.where(self.entry_velocity, s[self.entry_element], 1.0)
        Ad = self.level.A_diag()
        Ad = SparseMatrix(Ad.indptr, Ad.indices, Ad.data * scaled, Ad.ncols, "dof", "dof")
        return assemble(Ad, self.level.dofs.dof_truedof).to_scipy().tocsr()

    def factor_fill(self):
        """Stored entries of the sparse LU factors of the reference system."""
        lu = splu(self.matrix().tocsc())
        return int(lu.L.nnz + lu.U.nnz)


def _solve_reduced(A, b, free, n_vel, n_td, max_refine):
    try:
        lu = splu(A.tocsc())
    except RuntimeError as exc:
        raise SolveError(f"singular Darcy system: {exc}") from exc
    x = lu.solve(b)
    norm_b = np.linalg.norm(b)
    scale = norm_b if norm_b > 0 else 1.0
    res = np.linalg.norm(b - A @ x) / scale
    for _ in range(max_refine):
        if res <= RESIDUAL_TOL:
            break
        x = x + lu.solve(b - A @ x)
        res = np.linalg.norm(b - A @ x) / scale
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        raise SolveError(f"relative residual {res:.3e} above {RESIDUAL_TOL:g}")
    full = np.zeros(n_td)
    full[free] = x
    return Solution(full[:n_vel].copy(), -full[n_vel:], float(res))


def solve_mixed(A, level, bc: BoundaryConfig = BoundaryConfig(), max_refine=3) -> Solution:
    """Solve an already assembled global system on ``level``."""
    op = DarcyOperator(level)
    A = A.to_scipy() if isinstance(A, SparseMatrix) else sp.csr_array(A)
    A = A.tocsr()[op.free][:, op.free]
    b = op.rhs(bc)[op.free]
    return _solve_reduced(A, b, op.free, op.n_vel, op.n_truedofs, max_refine)


def qoi_flux(solution: Solution, level, bc: BoundaryConfig = BoundaryConfig()) -> float:
    """Mean outward normal flux over the outflow boundary."""
    return DarcyOperator(level).qoi(solution)


def dump_solution(solution: Solution, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_mm_array(directory / "q.mtx", solution.q)
    write_mm_array(directory / "p.mtx", solution.p)
