"""Boolean relation tables and numeric sparse matrices.

A :class:`Relation` ``object1_object2`` is a boolean sparse matrix whose rows
are entities of kind ``object1`` and whose columns are entities of kind
``object2``. Composite relations are boolean products. A
:class:`SparseMatrix` carries real values with optional entity-kind labels.

Both types are stored as canonical CSR (row-major, ascending column within a
row, no duplicates). Products accumulate each output entry in Gustavson
order: over the left row's entries by ascending column, then over the right
row. This makes every assembly bitwise reproducible for a fixed input.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import kernels

INDEX = np.int64


class KindMismatchError(ValueError):
    """Operands relate entity kinds that do not conform."""


class DimensionError(ValueError):
    """Operand shapes do not conform."""


def _transpose_csr(indptr, indices, ncols, data=None):
    nrows = len(indptr) - 1
    rows = np.repeat(np.arange(nrows, dtype=INDEX), np.diff(indptr))
    order = np.argsort(indices, kind="stable")
    t_indptr = np.zeros(ncols + 1, dtype=INDEX)
    np.cumsum(np.bincount(indices, minlength=ncols), out=t_indptr[1:])
    t_indices = rows[order]
    if data is None:
        return t_indptr, t_indices
    return t_indptr, t_indices, np.asarray(data)[order]


def _check_kinds(left, right):
    if left is not None and right is not None and left != right:
        raise KindMismatchError(f"cannot multiply: left columns are '{left}' but right rows are '{right}'")


class Relation:
    """Boolean incidence between ``row_kind`` and ``col_kind`` entities."""

    __slots__ = ("indptr", "indices", "ncols", "row_kind", "col_kind")

    def __init__(self, indptr, indices, ncols, row_kind, col_kind, check=True):
        self.indptr = np.asarray(indptr, dtype=INDEX)
        self.indices = np.asarray(indices, dtype=INDEX)
        self.ncols = int(ncols)
        self.row_kind = row_kind
        self.col_kind = col_kind
        if check:
            self._validate()

    def _validate(self):
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices) or np.any(np.diff(self.indptr) < 0):
            raise ValueError("malformed row pointer")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= self.ncols):
            raise ValueError("column index out of bounds")
        rows = np.repeat(np.arange(self.nrows, dtype=INDEX), np.diff(self.indptr))
        same_row = rows[1:] == rows[:-1]
        if np.any(self.indices[1:][same_row] <= self.indices[:-1][same_row]):
            raise ValueError("entries not sorted or duplicated within a row")

    # construction -------------------------------------------------------
    @classmethod
    def from_pairs(cls, rows, cols, nrows, ncols, row_kind, col_kind):
        rows = np.asarray(rows, dtype=INDEX)
        cols = np.asarray(cols, dtype=INDEX)
        if len(rows) and (rows.min() < 0 or rows.max() >= nrows):
            raise ValueError("row index out of bounds")
        if len(cols) and (cols.min() < 0 or cols.max() >= ncols):
            raise ValueError("column index out of bounds")
        keys = np.unique(rows * max(ncols, 1) + cols)
        r = keys // max(ncols, 1)
        indptr = np.zeros(nrows + 1, dtype=INDEX)
        np.cumsum(np.bincount(r, minlength=nrows), out=indptr[1:])
        return cls(indptr, keys - r * max(ncols, 1), ncols, row_kind, col_kind, check=False)

    @classmethod
    def from_rows(cls, rows, ncols, row_kind, col_kind):
        r = [i for i, row in enumerate(rows) for _ in row]
        c = [j for row in rows for j in row]
        return cls.from_pairs(r, c, len(rows), ncols, row_kind, col_kind)

    @classmethod
    def from_assignment(cls, assignment, nrows, row_kind, col_kind):
        """Parent-child relation from ``assignment[child] = parent``."""
        assignment = np.asarray(assignment, dtype=INDEX)
        return cls.from_pairs(assignment, np.arange(len(assignment)), nrows, len(assignment), row_kind, col_kind)

    @classmethod
    def identity(cls, n, row_kind, col_kind=None):
        return cls(np.arange(n + 1), np.arange(n), n, row_kind, col_kind or row_kind, check=False)

    @classmethod
    def empty(cls, nrows, ncols, row_kind, col_kind):
        return cls(np.zeros(nrows + 1), np.zeros(0), ncols, row_kind, col_kind, check=False)

    @classmethod
    def from_dense(cls, dense, row_kind, col_kind):
        dense = np.asarray(dense)
        r, c = np.nonzero(dense)
        return cls.from_pairs(r, c, dense.shape[0], dense.shape[1], row_kind, col_kind)

    @classmethod
    def from_scipy(cls, mat, row_kind, col_kind):
        mat = sp.csr_array(mat)
        mat.eliminate_zeros()
        mat.sum_duplicates()
        mat.sort_indices()
        return cls(mat.indptr, mat.indices, mat.shape[1], row_kind, col_kind)

    # queries --------------------------------------------------------------
    @property
    def nrows(self):
        return len(self.indptr) - 1

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return len(self.indices)

    @property
    def name(self):
        return f"{self.row_kind}_{self.col_kind}"

    def row(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def rows(self):
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.nrows, dtype=INDEX), np.diff(self.indptr))

    def pairs(self):
        return self.rows(), self.indices.copy()

    def row_counts(self):
        return np.diff(self.indptr)

    def col_counts(self):
        return np.bincount(self.indices, minlength=self.ncols)

    def assignment(self):
        """For a partition relation, the parent index of each column."""
        if not is_partition(self):
            raise ValueError(f"{self.name} is not a partition")
        out = np.empty(self.ncols, dtype=INDEX)
        out[self.indices] = self.rows()
        return out

    def take_rows(self, rows, row_kind=None):
        """Relation made of the given rows, in the given order, all columns kept."""
        rows = np.asarray(rows, dtype=INDEX)
        counts = np.diff(self.indptr)[rows]
        indptr = np.zeros(len(rows) + 1, dtype=INDEX)
        np.cumsum(counts, out=indptr[1:])
        starts = np.repeat(self.indptr[rows], counts)
        offs = np.arange(indptr[-1], dtype=INDEX) - np.repeat(indptr[:-1], counts)
        return Relation(indptr, self.indices[starts + offs], self.ncols, row_kind or self.row_kind, self.col_kind,
                        check=False)

    def mask_rows(self, keep):
        """Same shape, with rows where ``keep`` is false emptied."""
        keep = np.asarray(keep, dtype=bool)
        counts = np.where(keep, np.diff(self.indptr), 0)
        indptr = np.zeros(self.nrows + 1, dtype=INDEX)
        np.cumsum(counts, out=indptr[1:])
        entry_keep = np.repeat(keep, np.diff(self.indptr))
        return Relation(indptr, self.indices[entry_keep], self.ncols, self.row_kind, self.col_kind, check=False)

    def submatrix(self, rows, cols, row_kind=None, col_kind=None):
        """Restriction to the given row and column subsets, renumbered in order."""
        m = self.to_scipy()[np.asarray(rows, dtype=INDEX)][:, np.asarray(cols, dtype=INDEX)]
        return Relation.from_scipy(m, row_kind or self.row_kind, col_kind or self.col_kind)

    # algebra ----------------------------------------------------------------
    @property
    def T(self):
        return transpose(self)

    def __matmul__(self, other):
        if isinstance(other, Relation):
            return bool_multiply(self, other)
        return NotImplemented

    def __eq__(self, other):
        if not isinstance(other, Relation):
            return NotImplemented
        return (
            self.row_kind == other.row_kind
            and self.col_kind == other.col_kind
            and self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    def same_structure(self, other):
        """Equality ignoring entity-kind labels."""
        return self.shape == other.shape and np.array_equal(self.indptr, other.indptr) and np.array_equal(
            self.indices, other.indices
        )

    __hash__ = None

    def relabel(self, row_kind=None, col_kind=None):
        return Relation(self.indptr, self.indices, self.ncols, row_kind or self.row_kind, col_kind or self.col_kind,
                        check=False)

    def to_scipy(self):
        return sp.csr_array((np.ones(self.nnz), self.indices, self.indptr), shape=self.shape)

    def to_dense(self):
        out = np.zeros(self.shape, dtype=bool)
        out[self.rows(), self.indices] = True
        return out

    def as_matrix(self):
        return SparseMatrix(self.indptr, self.indices, np.ones(self.nnz), self.ncols, self.row_kind, self.col_kind)

    def __repr__(self):
        return f"Relation({self.name}, shape={self.shape}, nnz={self.nnz})"


class SparseMatrix:
    """Real CSR matrix with optional row/column entity-kind labels."""

    __slots__ = ("indptr", "indices", "data", "ncols", "row_kind", "col_kind")

    def __init__(self, indptr, indices, data, ncols, row_kind=None, col_kind=None):
        self.indptr = np.asarray(indptr, dtype=INDEX)
        self.indices = np.asarray(indices, dtype=INDEX)
        self.data = np.asarray(data, dtype=np.float64)
        self.ncols = int(ncols)
        self.row_kind = row_kind
        self.col_kind = col_kind

    @classmethod
    def from_scipy(cls, mat, row_kind=None, col_kind=None):
        mat = sp.csr_array(mat)
        mat.sum_duplicates()
        mat.sort_indices()
        return cls(mat.indptr, mat.indices, mat.data, mat.shape[1], row_kind, col_kind)

    @classmethod
    def from_dense(cls, dense, row_kind=None, col_kind=None, keep_zeros=False):
        dense = np.asarray(dense, dtype=np.float64)
        mask = np.ones(dense.shape, dtype=bool) if keep_zeros else dense != 0
        r, c = np.nonzero(mask)
        indptr = np.zeros(dense.shape[0] + 1, dtype=INDEX)
        np.cumsum(np.bincount(r, minlength=dense.shape[0]), out=indptr[1:])
        return cls(indptr, c, dense[r, c], dense.shape[1], row_kind, col_kind)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, row_kind=None, col_kind=None):
        """Duplicates are summed in input order; structural zeros are kept."""
        rows = np.asarray(rows, dtype=INDEX)
        cols = np.asarray(cols, dtype=INDEX)
        keys = rows * max(shape[1], 1) + cols
        uniq, slot = np.unique(keys, return_inverse=True)
        data = np.zeros(len(uniq))
        np.add.at(data, slot, np.asarray(vals, dtype=np.float64))
        r = uniq // max(shape[1], 1)
        indptr = np.zeros(shape[0] + 1, dtype=INDEX)
        np.cumsum(np.bincount(r, minlength=shape[0]), out=indptr[1:])
        return cls(indptr, uniq - r * max(shape[1], 1), data, shape[1], row_kind, col_kind)

    @classmethod
    def identity(cls, n, kind=None):
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), n, kind, kind)

    @property
    def nrows(self):
        return len(self.indptr) - 1

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return len(self.indices)

    def rows(self):
        return np.repeat(np.arange(self.nrows, dtype=INDEX), np.diff(self.indptr))

    @property
    def T(self):
        indptr, indices, data = _transpose_csr(self.indptr, self.indices, self.ncols, self.data)
        return SparseMatrix(indptr, indices, data, self.nrows, self.col_kind, self.row_kind)

    def __matmul__(self, other):
        if isinstance(other, Relation):
            other = other.as_matrix()
        if isinstance(other, SparseMatrix):
            return multiply(self, other)
        return self.to_scipy() @ other

    def __rmatmul__(self, other):
        if isinstance(other, Relation):
            return multiply(other.as_matrix(), self)
        return NotImplemented

    def pattern(self, row_kind=None, col_kind=None):
        return Relation(self.indptr, self.indices, self.ncols, row_kind or self.row_kind or "row",
                        col_kind or self.col_kind or "col", check=False)

    def to_scipy(self):
        return sp.csr_array((self.data, self.indices, self.indptr), shape=self.shape)

    def toarray(self):
        return self.to_scipy().toarray()

    def __repr__(self):
        return f"SparseMatrix({self.row_kind}_{self.col_kind}, shape={self.shape}, nnz={self.nnz})"


# operations -------------------------------------------------------------------

def transpose(rel: Relation) -> Relation:
    indptr, indices = _transpose_csr(rel.indptr, rel.indices, rel.ncols)
    return Relation(indptr, indices, rel.nrows, rel.col_kind, rel.row_kind, check=False)


def bool_multiply(r1: Relation, r2: Relation) -> Relation:
    """Composite relation: ``(i, k)`` present iff some ``j`` links them."""
    _check_kinds(r1.col_kind, r2.row_kind)
    if r1.ncols != r2.nrows:
        raise DimensionError(f"{r1.name} {r1.shape} x {r2.name} {r2.shape}")
    indptr, indices = kernels.bool_spgemm(r1.indptr, r1.indices, r2.indptr, r2.indices, r2.ncols)
    return Relation(indptr, indices, r2.ncols, r1.row_kind, r2.col_kind, check=False)


def multiply(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    _check_kinds(a.col_kind, b.row_kind)
    if a.ncols != b.nrows:
        raise DimensionError(f"{a.shape} x {b.shape}")
    indptr, indices, data = kernels.num_spgemm(a.indptr, a.indices, a.data, b.indptr, b.indices, b.data, b.ncols)
    return SparseMatrix(indptr, indices, data, b.ncols, a.row_kind, b.col_kind)


def num_triple_product(pl, a, pr) -> SparseMatrix:
    """``pl @ a @ pr`` as written; callers pass transposes explicitly."""
    as_num = lambda m: m.as_matrix() if isinstance(m, Relation) else m
    return multiply(multiply(as_num(pl), as_num(a)), as_num(pr))


def is_partition(rel: Relation) -> bool:
    """True iff every column belongs to exactly one row."""
    return bool(np.all(rel.col_counts() == 1))


# Matrix Market ------------------------------------------------------------------

def write_mm(path, obj, comment=""):
    """Write a Relation (values 1.0) or SparseMatrix in coordinate real general format."""
    mat = obj.to_scipy().tocoo()
    scipy.io.mmwrite(str(path), mat, comment=comment, field="real", symmetry="general")


def read_mm_relation(path, row_kind, col_kind) -> Relation:
    return Relation.from_scipy(scipy.io.mmread(str(path)), row_kind, col_kind)


def read_mm_matrix(path, row_kind=None, col_kind=None) -> SparseMatrix:
    return SparseMatrix.from_scipy(scipy.io.mmread(str(path)), row_kind, col_kind)


def write_mm_array(path, vec, comment=""):
    scipy.io.mmwrite(str(path), np.asarray(vec, dtype=np.float64).reshape(-1, 1), comment=comment, field="real",
                     symmetry="general")
