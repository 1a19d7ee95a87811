"""Density evaluation and cluster extraction within a single chunk.

Each sample's density is the sum of a triangular sharing kernel
``sh(d) = max(0, 1 - d / sigma)`` over every chunk member including itself,
so raw densities are always >= 1. Clusters are pulled out recursively: the
densest unassigned sample becomes a peak, its cluster is the connected
component of unassigned samples linked at distance <= sigma, the members are
removed, and densities are recomputed on the residual set. The sharing
radius sigma is a fixed fraction of the chunk diameter, which keeps the
procedure stable when feature scales change between streams.

All operations are pure functions; the O(n^2) kernel is intentional at the
chunk sizes this package targets (~1000 samples).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import Chunk, ChunkCluster, ChunkClustering

__all__ = [
    "DensityConfig",
    "pairwise_distances",
    "sharing_density",
    "extract_clusters",
    "merge_overlapped",
]


@dataclass(frozen=True)
class DensityConfig:
    """Knobs for density evaluation and intra-chunk merging.

    lambda_share: fraction of the chunk diameter used as sharing radius.
    eta_overlap: two clusters merge when their peak distance is at most
        eta_overlap * (R_i + R_j).
    """

    lambda_share: float = 0.1
    eta_overlap: float = 1.0

    def __post_init__(self):
        if not 0 < self.lambda_share <= 1:
            raise ValueError(f"lambda_share must be in (0, 1], got {self.lambda_share}")
        if not self.eta_overlap > 0:
            raise ValueError(f"eta_overlap must be > 0, got {self.eta_overlap}")


def pairwise_distances(chunk: Chunk) -> np.ndarray:
    """Symmetric n x n Euclidean distance matrix for one chunk."""
    d = cdist(chunk.X, chunk.X)
    # cdist can leave tiny positive values on the diagonal; pin it to 0 and
    # symmetrize so d[i][j] == d[j][i] holds bit-exactly.
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def sharing_density(distances: np.ndarray, sigma_share: float) -> np.ndarray:
    """Raw sharing density per sample: F(i) = sum_j max(0, 1 - d_ij / sigma)."""
    if sigma_share <= 0:
        raise ValueError(f"sigma_share must be > 0, got {sigma_share}")
    kernel = 1.0 - distances / sigma_share
    np.maximum(kernel, 0.0, out=kernel)
    return kernel.sum(axis=1)


def _component_from(adjacency: np.ndarray, start: int) -> np.ndarray:
    """Indices of the connected component containing ``start``."""
    n = adjacency.shape[0]
    reached = np.zeros(n, dtype=bool)
    frontier = np.zeros(n, dtype=bool)
    frontier[start] = True
    while frontier.any():
        reached |= frontier
        frontier = adjacency[frontier].any(axis=0) & ~reached
    return np.flatnonzero(reached)


def extract_clusters(
    chunk: Chunk,
    config: DensityConfig,
    distances: np.ndarray | None = None,
) -> ChunkClustering:
    """Recursively extract density-peak clusters from one chunk.

    Returns a partition of the chunk: every sample belongs to exactly one
    cluster. Peak densities are normalized by the chunk size before storage
    so values from different chunks share one scale. Ties in density are
    broken toward the lowest sample id.
    """
    n = chunk.n
    d = pairwise_distances(chunk) if distances is None else distances
    diameter = float(d.max())
    if diameter == 0.0:
        # All samples coincide: one cluster centered on sample 0.
        members = np.arange(n)
        cluster = ChunkCluster(peak_id=0, members=members, density=1.0, radius=0.0)
        return ChunkClustering(
            chunk=chunk,
            assignments=np.zeros(n, dtype=int),
            clusters=[cluster],
            sigma_share=0.0,
        )

    sigma = config.lambda_share * diameter
    assignments = np.full(n, -1, dtype=int)
    clusters: list[ChunkCluster] = []
    unassigned = np.ones(n, dtype=bool)

    while unassigned.any():
        idx = np.flatnonzero(unassigned)
        sub = d[np.ix_(idx, idx)]
        dens = sharing_density(sub, sigma)
        peak_local = int(np.argmax(dens))  # first max -> lowest id
        adjacency = sub <= sigma
        members_local = _component_from(adjacency, peak_local)
        members = idx[members_local]
        peak = int(idx[peak_local])
        radius = float(d[peak, members].max())
        clusters.append(
            ChunkCluster(
                peak_id=peak,
                members=members,
                density=float(dens[peak_local]) / n,
                radius=radius,
            )
        )
        assignments[members] = len(clusters) - 1
        unassigned[members] = False

    return ChunkClustering(
        chunk=chunk, assignments=assignments, clusters=clusters, sigma_share=sigma
    )


def merge_overlapped(clustering: ChunkClustering, config: DensityConfig) -> ChunkClustering:
    """Merge cluster pairs whose peaks sit within eta * (R_i + R_j).

    Repeats until no pair qualifies, always taking the lowest-index pair
    first. The merged cluster keeps the denser peak (ties: lower peak id),
    takes the union of members, and gets its radius recomputed from the
    kept peak.
    """
    X = clustering.chunk.X
    clusters = list(clustering.clusters)

    def overlapping(a: ChunkCluster, b: ChunkCluster) -> bool:
        gap = float(np.linalg.norm(X[a.peak_id] - X[b.peak_id]))
        return gap <= config.eta_overlap * (a.radius + b.radius)

    def merge(a: ChunkCluster, b: ChunkCluster) -> ChunkCluster:
        if (b.density, -b.peak_id) > (a.density, -a.peak_id):
            a, b = b, a
        members = np.union1d(a.members, b.members)
        radius = float(np.linalg.norm(X[members] - X[a.peak_id], axis=1).max())
        return ChunkCluster(peak_id=a.peak_id, members=members, density=a.density, radius=radius)

    merged = True
    while merged:
        merged = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if overlapping(clusters[i], clusters[j]):
                    clusters[i] = merge(clusters[i], clusters[j])
                    del clusters[j]
                    merged = True
                    break
            if merged:
                break

    assignments = np.full(clustering.chunk.n, -1, dtype=int)
    for k, cluster in enumerate(clusters):
        assignments[cluster.members] = k
    return ChunkClustering(
        chunk=clustering.chunk,
        assignments=assignments,
        clusters=clusters,
        sigma_share=clustering.sigma_share,
    )
