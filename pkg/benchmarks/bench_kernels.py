"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [n]``; ``n`` is the cells per
axis of the 2D test mesh (default 128).
"""

import sys
import timeit

import numpy as np

from amgeredist import _kernels_py
from amgeredist.meshtopo import build_mesh

try:
    from amgeredist import _kernels as _compiled
except ImportError:
    _compiled = None


def _cases(n):
    mesh = build_mesh(2, (n, n))
    ef = mesh.element_facet
    fe = ef.T
    ee = ef @ fe
    rng = np.random.default_rng(0)
    data_a = rng.standard_normal(ef.nnz)
    data_b = rng.standard_normal(fe.nnz)
    n_parts = max(1, ee.nrows // 8)
    seeds = np.sort(rng.choice(ee.nrows, n_parts, replace=False)).astype(ee.indices.dtype)
    cap = np.full(n_parts, -(-ee.nrows // n_parts), dtype=seeds.dtype)
    return {
        "bool_spgemm": lambda k: k.bool_spgemm(ef.indptr, ef.indices, fe.indptr, fe.indices, fe.ncols),
        "num_spgemm": lambda k: k.num_spgemm(ef.indptr, ef.indices, data_a, fe.indptr, fe.indices, data_b,
                                             fe.ncols),
        "bfs_distance": lambda k: k.bfs_distance(ee.indptr, ee.indices, seeds[:1]),
        "grow_regions": lambda k: k.grow_regions(ee.indptr, ee.indices, seeds, cap),
    }


def main(n=128, repeat=5):
    print(f"mesh {n}x{n}, best of {repeat}")
    print(f"{'kernel':14s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, fn in _cases(n).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=repeat)) * 1e3
        if _compiled is None:
            print(f"{name:14s} {t_py:12.3f} {'n/a':>12s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_compiled), number=1, repeat=repeat)) * 1e3
        print(f"{name:14s} {t_py:12.3f} {t_c:12.3f} {t_py / t_c:8.1f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 128)
