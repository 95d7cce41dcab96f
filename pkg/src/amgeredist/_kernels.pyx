# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; twins of ``_kernels_py`` with identical output."""

import numpy as np
cimport numpy as cnp

ctypedef cnp.int64_t idx_t

cnp.import_array()


cdef void _isort(idx_t* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef idx_t key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] > key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


def bool_spgemm(a_indptr, a_indices, b_indptr, b_indices, Py_ssize_t n_cols):
    cdef idx_t[::1] ap = np.ascontiguousarray(a_indptr, dtype=np.int64)
    cdef idx_t[::1] ai = np.ascontiguousarray(a_indices, dtype=np.int64)
    cdef idx_t[::1] bp = np.ascontiguousarray(b_indptr, dtype=np.int64)
    cdef idx_t[::1] bi = np.ascontiguousarray(b_indices, dtype=np.int64)
    cdef Py_ssize_t n_rows = ap.shape[0] - 1
    cdef idx_t[::1] mark = np.full(max(n_cols, 1), -1, dtype=np.int64)
    cdef idx_t[::1] row_buf = np.empty(max(n_cols, 1), dtype=np.int64)
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    cdef idx_t[::1] cp = indptr
    cdef Py_ssize_t cap = max(16, 2 * ai.shape[0])
    out = np.empty(cap, dtype=np.int64)
    cdef idx_t[::1] ci = out
    cdef Py_ssize_t i, jj, kk, k, j, cnt, nnz = 0, t
    for i in range(n_rows):
        cnt = 0
        for jj in range(ap[i], ap[i + 1]):
            k = ai[jj]
            for kk in range(bp[k], bp[k + 1]):
                j = bi[kk]
                if mark[j] != i:
                    mark[j] = i
                    row_buf[cnt] = j
                    cnt += 1
        _isort(&row_buf[0], cnt)
        if nnz + cnt > cap:
            cap = max(2 * cap, nnz + cnt)
            out = np.resize(out, cap)
            ci = out
        for t in range(cnt):
            ci[nnz + t] = row_buf[t]
        nnz += cnt
        cp[i + 1] = nnz
    return indptr, out[:nnz].copy()


def num_spgemm(a_indptr, a_indices, a_data, b_indptr, b_indices, b_data, Py_ssize_t n_cols):
    cdef idx_t[::1] ap = np.ascontiguousarray(a_indptr, dtype=np.int64)
    cdef idx_t[::1] ai = np.ascontiguousarray(a_indices, dtype=np.int64)
    cdef double[::1] ax = np.ascontiguousarray(a_data, dtype=np.float64)
    cdef idx_t[::1] bp = np.ascontiguousarray(b_indptr, dtype=np.int64)
    cdef idx_t[::1] bi = np.ascontiguousarray(b_indices, dtype=np.int64)
    cdef double[::1] bx = np.ascontiguousarray(b_data, dtype=np.float64)
    cdef Py_ssize_t n_rows = ap.shape[0] - 1
    cdef idx_t[::1] mark = np.full(max(n_cols, 1), -1, dtype=np.int64)
    cdef idx_t[::1] row_buf = np.empty(max(n_cols, 1), dtype=np.int64)
    cdef double[::1] acc = np.zeros(max(n_cols, 1), dtype=np.float64)
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    cdef idx_t[::1] cp = indptr
    cdef Py_ssize_t cap = max(16, 2 * ai.shape[0])
    out_i = np.empty(cap, dtype=np.int64)
    out_x = np.empty(cap, dtype=np.float64)
    cdef idx_t[::1] ci = out_i
    cdef double[::1] cx = out_x
    cdef Py_ssize_t i, jj, kk, k, j, cnt, nnz = 0, t
    cdef double v
    for i in range(n_rows):
        cnt = 0
        for jj in range(ap[i], ap[i + 1]):
            k = ai[jj]
            v = ax[jj]
            for kk in range(bp[k], bp[k + 1]):
                j = bi[kk]
                if mark[j] != i:
                    mark[j] = i
                    row_buf[cnt] = j
                    cnt += 1
                    acc[j] = 0.0
                acc[j] += v * bx[kk]
        _isort(&row_buf[0], cnt)
        if nnz + cnt > cap:
            cap = max(2 * cap, nnz + cnt)
            out_i = np.resize(out_i, cap)
            out_x = np.resize(out_x, cap)
            ci = out_i
            cx = out_x
        for t in range(cnt):
            ci[nnz + t] = row_buf[t]
            cx[nnz + t] = acc[row_buf[t]]
        nnz += cnt
        cp[i + 1] = nnz
    return indptr, out_i[:nnz].copy(), out_x[:nnz].copy()


def bfs_distance(indptr, indices, sources):
    cdef idx_t[::1] p = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef idx_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef Py_ssize_t n = p.shape[0] - 1
    dist_arr = np.full(n, -1, dtype=np.int64)
    cdef idx_t[::1] dist = dist_arr
    cdef idx_t[::1] queue = np.empty(max(n, 1), dtype=np.int64)
    cdef Py_ssize_t head = 0, tail = 0, v, w, jj
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            queue[tail] = s
            tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        for jj in range(p[v], p[v + 1]):
            w = ix[jj]
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue[tail] = w
                tail += 1
    return dist_arr


def grow_regions(indptr, indices, seeds, capacity):
    cdef idx_t[::1] p = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef idx_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef idx_t[::1] sd = np.ascontiguousarray(seeds, dtype=np.int64)
    cdef idx_t[::1] cap = np.ascontiguousarray(capacity, dtype=np.int64)
    cdef Py_ssize_t n = p.shape[0] - 1
    cdef Py_ssize_t n_parts = sd.shape[0]
    part_arr = np.full(n, -1, dtype=np.int64)
    cdef idx_t[::1] part = part_arr
    cdef idx_t[::1] size = np.zeros(max(n_parts, 1), dtype=np.int64)
    # per-part FIFO queues as singly linked lists over one slot pool
    cdef Py_ssize_t n_slots = ix.shape[0] + n + 1
    cdef idx_t[::1] node = np.empty(n_slots, dtype=np.int64)
    cdef idx_t[::1] nxt = np.full(n_slots, -1, dtype=np.int64)
    cdef idx_t[::1] head = np.full(max(n_parts, 1), -1, dtype=np.int64)
    cdef idx_t[::1] tail = np.full(max(n_parts, 1), -1, dtype=np.int64)
    cdef Py_ssize_t used = 0, q, s, jj, w, v, best, best_over
    for q in range(n_parts):
        part[sd[q]] = q
        size[q] = 1
    for q in range(n_parts):
        s = sd[q]
        for jj in range(p[s], p[s + 1]):
            w = ix[jj]
            if part[w] < 0:
                node[used] = w
                if tail[q] >= 0:
                    nxt[tail[q]] = used
                else:
                    head[q] = used
                tail[q] = used
                used += 1
    while True:
        best = -1
        best_over = -1
        for q in range(n_parts):
            while head[q] >= 0 and part[node[head[q]]] >= 0:
                head[q] = nxt[head[q]]
            if head[q] < 0:
                tail[q] = -1
                continue
            if size[q] < cap[q]:
                if best < 0 or size[q] < size[best]:
                    best = q
            elif best_over < 0 or size[q] < size[best_over]:
                best_over = q
        if best < 0:
            best = best_over
        if best < 0:
            break
        v = node[head[best]]
        head[best] = nxt[head[best]]
        if head[best] < 0:
            tail[best] = -1
        part[v] = best
        size[best] += 1
        for jj in range(p[v], p[v + 1]):
            w = ix[jj]
            if part[w] < 0:
                if used >= n_slots:
                    n_slots = 2 * n_slots
                    node = np.resize(np.asarray(node), n_slots)
                    nxt = np.resize(np.asarray(nxt), n_slots)
                node[used] = w
                nxt[used] = -1
                if tail[best] >= 0:
                    nxt[tail[best]] = used
                else:
                    head[best] = used
                tail[best] = used
                used += 1
    return part_arr
