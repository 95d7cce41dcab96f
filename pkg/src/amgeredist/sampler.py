"""Log-normal permeability from a truncated cosine expansion.

``u(x) = sigma * sum_j sqrt(lam_j) xi_j phi_j(x) / s(x)`` with tensor cosine
modes ``phi_j(x) = prod_a c_{j_a} cos(pi j_a x_a)`` (``c_0 = 1``,
``c_j = sqrt(2)``), Matern-like weights
``lam_j ~ (1 + (lc * pi |j|)^2) ** -(nu + d / 2)`` and ``s(x)`` chosen so the
pointwise variance is exactly ``sigma^2`` at every element centroid.

Coarse fields are measure-weighted averages of the fine log-field over the
fine elements of each coarse element, so every level sees the same draw.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .relmat import write_mm_array

TAG_FIELD = 1
TAG_MC = 2


def make_stream(seed, level, index, tag=TAG_FIELD):
    """Independent counter-based generator for one (seed, level, sample, purpose) key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(level), int(index),
                                                                        int(tag)])))


@dataclass(frozen=True)
class FieldParams:
    sigma: float = 1.0
    corr_len: float = 0.1
    nu: float = 1.0
    n_modes: int = 64

    def __post_init__(self):
        if self.sigma < 0 or self.corr_len <= 0 or self.nu <= 0 or self.n_modes < 1:
            raise ValueError("field parameters must be positive (sigma may be zero)")


@dataclass(eq=False)
class FieldSample:
    xi: np.ndarray
    u: list

    @property
    def k(self):
        return [np.exp(u) for u in self.u]


class FieldSampler:
    """Precomputed modes at the element centroids of a structured mesh."""

    def __init__(self, centroids, shape, params: FieldParams = FieldParams()):
        centroids = np.asarray(centroids, dtype=np.float64)
        self.params = params
        dim = centroids.shape[1]
        per_axis = [min(params.n_modes, n) for n in shape]
        idx = np.array(np.meshgrid(*[np.arange(m) for m in per_axis], indexing="ij")).reshape(dim, -1).T
        wave = np.pi * np.linalg.norm(idx, axis=1)
        lam = (1.0 + (params.corr_len * wave) ** 2) ** (-(params.nu + dim / 2.0))
        phi = np.ones((len(centroids), len(idx)))
        for a in range(dim):
            c = np.where(idx[:, a] == 0, 1.0, np.sqrt(2.0))
            phi *= c * np.cos(np.pi * np.outer(centroids[:, a], idx[:, a]))
        weighted = phi * np.sqrt(lam)
        norm = np.sqrt((weighted ** 2).sum(axis=1))
        self.basis = weighted / norm[:, None]
        self.n_terms = len(idx)
        self.wavenumbers = idx

    @classmethod
    def for_mesh(cls, mesh, params: FieldParams = FieldParams()):
        return cls(mesh.element_centroid, mesh.shape, params)

    def fine_field(self, rng):
        xi = rng.standard_normal(self.n_terms)
        return xi, self.params.sigma * (self.basis @ xi)


def sample_fine_field(mesh, params: FieldParams, stream) -> FieldSample:
    """One fine-level log-field drawn from ``stream`` (a numpy Generator)."""
    xi, u = FieldSampler.for_mesh(mesh, params).fine_field(stream)
    return FieldSample(xi, [u])


class FieldProjector:
    """Measure-weighted averaging from the fine mesh onto every level."""

    def __init__(self, hierarchy, fine_measure=None):
        levels = hierarchy.levels if hasattr(hierarchy, "levels") else hierarchy
        fine_measure = levels[0].element_measure if fine_measure is None else fine_measure
        self.ops = []
        for lv in levels:
            eo = lv.element_origin
            rows = eo.rows()
            w = fine_measure[eo.indices]
            total = np.bincount(rows, weights=w, minlength=eo.nrows)
            self.ops.append(sp.csr_array((w / total[rows], eo.indices, eo.indptr), shape=eo.shape))

    def __len__(self):
        return len(self.ops)

    def level(self, u0, ell):
        return self.ops[ell] @ u0

    def all_levels(self, u0):
        return [op @ u0 for op in self.ops]


def project_field(sample: FieldSample, hierarchy) -> FieldSample:
    """Fill ``sample.u`` with the projection of its fine field onto every level."""
    proj = FieldProjector(hierarchy)
    return FieldSample(sample.xi, proj.all_levels(sample.u[0]))


def dump_field(sample: FieldSample, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for ell, u in enumerate(sample.u):
        write_mm_array(directory / f"u_level{ell}.mtx", u)
        with open(directory / f"field_level{ell}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "u", "k"])
            for e, (ue, ke) in enumerate(zip(u, np.exp(u))):
                w.writerow([e, repr(float(ue)), repr(float(ke))])
