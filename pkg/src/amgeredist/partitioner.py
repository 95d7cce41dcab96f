"""Connected graph partitioning (a deterministic stand-in for METIS).

Algorithm: farthest-point seeding by BFS distance, BFS region growing that
always extends the currently smallest part up to a size cap, then a repair
pass that merges any disconnected fragment into its smallest neighbouring
part, then boundary moves that pull oversized parts back inside the balance
band without breaking connectivity. Ties go to the lowest node index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import kernels
from .relmat import INDEX, Relation


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionSpec:
    n_parts: int
    balance_tol: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_parts < 1:
            raise PartitionError("n_parts must be >= 1")


def _graph(adjacency: Relation):
    """Symmetric CSR without self loops."""
    if adjacency.nrows != adjacency.ncols:
        raise PartitionError("adjacency must be square")
    rows, cols = adjacency.pairs()
    keep = rows != cols
    g = sp.csr_array((np.ones(int(keep.sum())), (rows[keep], cols[keep])), shape=adjacency.shape)
    if (g != g.T).nnz:
        raise PartitionError("adjacency must be symmetric")
    g.sort_indices()
    return g.indptr.astype(INDEX), g.indices.astype(INDEX)


def _farthest_seeds(indptr, indices, n_parts, start):
    dist = kernels.bfs_distance(indptr, indices, [start])
    seeds = [int(np.argmax(dist))]
    for _ in range(1, n_parts):
        d = kernels.bfs_distance(indptr, indices, seeds)
        d[seeds] = -1
        seeds.append(int(np.argmax(d)))
    return seeds


def _components(indptr, indices, nodes):
    """Connected components of the subgraph induced by ``nodes`` (sorted)."""
    n = len(indptr) - 1
    g = sp.csr_array((np.ones(len(indices)), indices, indptr), shape=(n, n))[nodes][:, nodes]
    _, labels = connected_components(g, directed=False)
    return labels


def _repair(indptr, indices, part, n_parts):
    """Merge every fragment except the largest of each part into its smallest neighbour part."""
    for _ in range(len(part)):
        changed = False
        sizes = np.bincount(part, minlength=n_parts)
        for p in range(n_parts):
            nodes = np.flatnonzero(part == p)
            if len(nodes) == 0:
                continue
            labels = _components(indptr, indices, nodes)
            if labels.max() == 0:
                continue
            counts = np.bincount(labels)
            keep = int(np.argmax(counts))
            for c in range(len(counts)):
                if c == keep:
                    continue
                frag = nodes[labels == c]
                nbr = np.unique(part[np.concatenate([indices[indptr[v]:indptr[v + 1]] for v in frag])])
                nbr = nbr[nbr != p]
                target = int(nbr[np.argmin(sizes[nbr])]) if len(nbr) else -1
                if target < 0:
                    raise PartitionError("fragment without neighbouring part")
                part[frag] = target
                sizes = np.bincount(part, minlength=n_parts)
                changed = True
        if not changed:
            return part
    return part


def _still_connected(indptr, indices, part, p, removed):
    nodes = np.flatnonzero(part == p)
    nodes = nodes[nodes != removed]
    if len(nodes) <= 1:
        return len(nodes) == 1
    return _components(indptr, indices, nodes).max() == 0


def _balance_band(n, n_parts, tol):
    mean = n / n_parts
    hi = max(math.ceil(mean), math.floor(mean * (1 + tol)))
    lo = min(math.floor(mean), math.ceil(mean * (1 - tol)))
    return lo, hi


def _movable(indptr, indices, part, a, b):
    """Lowest node of part ``a`` touching part ``b`` whose removal keeps ``a`` connected."""
    for v in np.flatnonzero(part == a):
        if np.any(part[indices[indptr[v]:indptr[v + 1]]] == b) and _still_connected(indptr, indices, part, a, v):
            return int(v)
    return -1


def _part_path(adj_parts, start, accept, blocked):
    """BFS over the part graph from ``start`` to the first part satisfying ``accept``."""
    prev = {start: -1}
    queue = [start]
    for a in queue:
        for b in adj_parts[a]:
            if b in prev or (a, b) in blocked:
                continue
            prev[b] = a
            if accept(b):
                path = [b]
                while prev[path[-1]] >= 0:
                    path.append(prev[path[-1]])
                return path[::-1]
            queue.append(b)
    return None


def _rebalance(indptr, indices, part, n_parts, tol, max_moves):
    """Shift nodes along chains of adjacent parts until sizes sit in the band.

    Each step moves one node per hop from an oversized part towards a part
    with room (or into an undersized part from one with spare nodes), so
    every intermediate part keeps its size and every part stays connected.
    """
    lo, hi = _balance_band(len(part), n_parts, tol)
    blocked = set()
    for _ in range(max_moves):
        sizes = np.bincount(part, minlength=n_parts)
        rows = np.repeat(np.arange(len(part)), np.diff(indptr))
        pa, pb = part[rows], part[indices]
        cut = pa != pb
        adj_parts = [[] for _ in range(n_parts)]
        for a, b in sorted(set(zip(pa[cut].tolist(), pb[cut].tolist()))):
            adj_parts[a].append(b)
        over = np.flatnonzero(sizes > hi)
        under = np.flatnonzero(sizes < lo)
        if len(over):
            s = int(over[np.argmax(sizes[over])])
            path = _part_path(adj_parts, s, lambda q: sizes[q] < hi, blocked)
        elif len(under):
            t = int(under[np.argmin(sizes[under])])
            # search backwards: from the needy part to a donor with spare nodes
            rev = [[] for _ in range(n_parts)]
            for a in range(n_parts):
                for b in adj_parts[a]:
                    rev[b].append(a)
            path = _part_path(rev, t, lambda q: sizes[q] > lo, {(b, a) for a, b in blocked})
            path = path[::-1] if path else None
        else:
            return part
        if path is None:
            return part
        trial = part.copy()
        ok = True
        for a, b in reversed(list(zip(path[:-1], path[1:]))):
            v = _movable(indptr, indices, trial, a, b)
            if v < 0:
                blocked.add((a, b))
                ok = False
                break
            trial[v] = b
        if ok:
            part = trial
            blocked.clear()
    return part


def partition_graph(adjacency: Relation, spec: PartitionSpec, part_kind="part") -> Relation:
    """Partition a connected graph into ``spec.n_parts`` connected parts.

    Returns the ``part_node`` relation. Self loops are ignored. A disconnected
    input is partitioned component by component, with parts allotted in
    proportion to component size (at least one each).
    """
    n = adjacency.nrows
    n_parts = spec.n_parts
    if n_parts > n:
        raise PartitionError(f"n_parts={n_parts} exceeds number of nodes {n}")
    node_kind = adjacency.row_kind
    if n_parts == 1:
        return Relation.from_assignment(np.zeros(n, dtype=INDEX), 1, part_kind, node_kind)
    indptr, indices = _graph(adjacency)

    n_comp, comp = connected_components(
        sp.csr_array((np.ones(len(indices)), indices, indptr), shape=(n, n)), directed=False)
    if n_comp > 1:
        return _partition_components(adjacency, spec, comp, n_comp, part_kind)

    seeds = _farthest_seeds(indptr, indices, n_parts, spec.seed % n)
    cap = np.full(n_parts, math.ceil(n / n_parts), dtype=INDEX)
    part = kernels.grow_regions(indptr, indices, np.asarray(seeds, dtype=INDEX), cap)
    if np.any(part < 0):
        raise PartitionError("region growing left nodes unassigned")
    part = _repair(indptr, indices, part, n_parts)
    part = _rebalance(indptr, indices, part, n_parts, spec.balance_tol, max_moves=n)
    part = _canonical_order(part, n_parts)
    return Relation.from_assignment(part, n_parts, part_kind, node_kind)


def _canonical_order(part, n_parts):
    """Renumber parts by their lowest node so output is independent of seed order."""
    used = np.unique(part)
    if len(used) != n_parts:
        raise PartitionError("a part became empty")
    first = np.array([np.flatnonzero(part == p)[0] for p in range(n_parts)])
    rank = np.empty(n_parts, dtype=INDEX)
    rank[np.argsort(first)] = np.arange(n_parts)
    return rank[part]


def _partition_components(adjacency, spec, comp, n_comp, part_kind):
    n = adjacency.nrows
    if spec.n_parts < n_comp:
        raise PartitionError(f"{n_comp} disconnected components cannot form {spec.n_parts} connected parts")
    sizes = np.bincount(comp, minlength=n_comp)
    alloc = np.ones(n_comp, dtype=INDEX)
    for _ in range(spec.n_parts - n_comp):
        alloc[np.argmax(sizes / alloc - (alloc >= sizes) * n)] += 1
    part = np.empty(n, dtype=INDEX)
    offset = 0
    for c in range(n_comp):
        nodes = np.flatnonzero(comp == c)
        sub = adjacency.submatrix(nodes, nodes)
        local = partition_graph(sub, PartitionSpec(int(alloc[c]), spec.balance_tol, spec.seed)).assignment()
        part[nodes] = local + offset
        offset += int(alloc[c])
    part = _canonical_order(part, spec.n_parts)
    return Relation.from_assignment(part, spec.n_parts, part_kind, adjacency.row_kind)


def coarsen_by_factor(adjacency: Relation, factor, balance_tol=0.1, seed=0, part_kind="part") -> Relation:
    """Partition into ``ceil(n_nodes / factor)`` connected parts."""
    if factor < 1:
        raise PartitionError("coarsening factor must be >= 1")
    n_parts = max(1, math.ceil(adjacency.nrows / factor))
    return partition_graph(adjacency, PartitionSpec(n_parts, balance_tol, seed), part_kind)


def part_sizes(part_node: Relation):
    return part_node.row_counts()


def parts_connected(part_node: Relation, adjacency: Relation) -> bool:
    """BFS check that every part induces a connected subgraph."""
    indptr, indices = _graph(adjacency)
    for p in range(part_node.nrows):
        nodes = part_node.row(p)
        if len(nodes) == 0:
            return False
        if _components(indptr, indices, nodes).max() != 0:
            return False
    return True
