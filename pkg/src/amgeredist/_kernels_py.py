"""Pure numpy/Python implementations of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and bitwise-identical output; ``amgeredist.kernels`` picks one at import.
CSR inputs are assumed canonical (column indices ascending within a row).
"""

from collections import deque

import numpy as np

INDEX = np.int64


def _expand(a_indptr, a_indices, b_indptr, b_indices):
    # Gustavson order: row i of A, its entries k ascending, then row k of B.
    a_rows = np.repeat(np.arange(len(a_indptr) - 1, dtype=INDEX), np.diff(a_indptr))
    b_len = np.diff(b_indptr)[a_indices]
    total = int(b_len.sum())
    owner = np.repeat(np.arange(len(a_indices), dtype=INDEX), b_len)
    start = np.repeat(b_indptr[a_indices].astype(INDEX), b_len)
    offset = np.arange(total, dtype=INDEX) - np.repeat(np.cumsum(b_len) - b_len, b_len)
    b_pos = start + offset
    return a_rows[owner], owner, b_pos


def _compress(keys, n_rows, n_cols):
    rows = keys // max(n_cols, 1)
    cols = keys - rows * max(n_cols, 1)
    indptr = np.zeros(n_rows + 1, dtype=INDEX)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
    return indptr, cols.astype(INDEX)


def bool_spgemm(a_indptr, a_indices, b_indptr, b_indices, n_cols):
    """Boolean product of two CSR patterns; returns sorted, duplicate-free CSR."""
    n_rows = len(a_indptr) - 1
    rows, _, b_pos = _expand(a_indptr, a_indices, b_indptr, b_indices)
    keys = np.unique(rows * max(n_cols, 1) + np.asarray(b_indices, dtype=INDEX)[b_pos])
    return _compress(keys, n_rows, n_cols)


def num_spgemm(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, n_cols):
    """Numeric CSR product keeping structural zeros.

    Each output entry is accumulated in Gustavson order, which ``np.add.at``
    reproduces because it applies updates sequentially in index order.
    """
    n_rows = len(a_indptr) - 1
    rows, owner, b_pos = _expand(a_indptr, a_indices, b_indptr, b_indices)
    keys = rows * max(n_cols, 1) + np.asarray(b_indices, dtype=INDEX)[b_pos]
    uniq, slot = np.unique(keys, return_inverse=True)
    data = np.zeros(len(uniq), dtype=np.float64)
    np.add.at(data, slot, np.asarray(a_data, dtype=np.float64)[owner] * np.asarray(b_data, dtype=np.float64)[b_pos])
    indptr, indices = _compress(uniq, n_rows, n_cols)
    return indptr, indices, data


def bfs_distance(indptr, indices, sources):
    n = len(indptr) - 1
    dist = np.full(n, -1, dtype=INDEX)
    queue = deque()
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            queue.append(int(s))
    while queue:
        v = queue.popleft()
        for w in indices[indptr[v]:indptr[v + 1]]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(int(w))
    return dist


def grow_regions(indptr, indices, seeds, capacity):
    """Grow one BFS region per seed, always extending the smallest part.

    Parts below ``capacity`` are preferred; once every growable part is full
    the smallest growable part overflows. Unreachable nodes stay at -1.
    """
    n = len(indptr) - 1
    n_parts = len(seeds)
    part = np.full(n, -1, dtype=INDEX)
    size = np.zeros(n_parts, dtype=INDEX)
    queues = [deque() for _ in range(n_parts)]
    for p, s in enumerate(seeds):
        part[s] = p
        size[p] = 1
    for p, s in enumerate(seeds):
        queues[p].extend(int(w) for w in indices[indptr[s]:indptr[s + 1]] if part[w] < 0)
    while True:
        best = -1
        best_over = -1
        for p in range(n_parts):
            q = queues[p]
            while q and part[q[0]] >= 0:
                q.popleft()
            if not q:
                continue
            if size[p] < capacity[p]:
                if best < 0 or size[p] < size[best]:
                    best = p
            elif best_over < 0 or size[p] < size[best_over]:
                best_over = p
        if best < 0:
            best = best_over
        if best < 0:
            break
        v = queues[best].popleft()
        part[v] = best
        size[best] += 1
        queues[best].extend(int(w) for w in indices[indptr[v]:indptr[v + 1]] if part[w] < 0)
    return part
