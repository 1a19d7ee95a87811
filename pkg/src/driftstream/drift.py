"""Matching chunk clusters against historical clusters.

A chunk cluster either merges into a nearby historical cluster (drift
adaptation) or stands alone as a novel-concept candidate. Merging requires a
populated boundary between the two centers: if the band between them holds
too few samples, or their mean density falls below a fraction of the chunk
cluster's peak density, a density drop is declared and the pair stays apart.
Unmerged clusters are validated against a dynamic threshold derived from the
historical density distribution (mean minus one population standard
deviation, in absolute value); candidates that fail are attached to their
nearest historical cluster instead of opening a new one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .core import (
    Chunk,
    ChunkClustering,
    DegenerateGeometryError,
    DriftReport,
    StreamSummary,
)

__all__ = ["DriftConfig", "pair_neighbors", "boundary_samples", "check_merge"]


@dataclass(frozen=True)
class DriftConfig:
    """Thresholds for neighbor pairing and the density-drop test."""

    rho_neighbor: float = 1.2
    epsilon_band: float = 0.25
    theta_drop: float = 0.5
    min_boundary: int = 3

    def __post_init__(self):
        if self.rho_neighbor <= 0 or self.theta_drop <= 0 or self.min_boundary <= 0:
            raise ValueError("drift thresholds must be positive")
        if not 0 < self.epsilon_band < 0.5:
            raise ValueError(f"epsilon_band must be in (0, 0.5), got {self.epsilon_band}")


def pair_neighbors(
    summary: StreamSummary,
    clustering: ChunkClustering,
    chunk: Chunk,
    config: DriftConfig,
) -> List[Tuple[int, int]]:
    """All (historical cluster_id, chunk-cluster index) neighbor pairs.

    A pair qualifies when the center distance is at most
    rho_neighbor * (R_hist + R_chunk). A chunk cluster may pair with several
    historical clusters and vice versa.
    """
    pairs: List[Tuple[int, int]] = []
    for hid in sorted(summary.clusters):
        rec = summary.clusters[hid]
        for c, cluster in enumerate(clustering.clusters):
            gap = float(np.linalg.norm(rec.center - chunk.X[cluster.peak_id]))
            if gap <= config.rho_neighbor * (rec.radius + cluster.radius):
                pairs.append((hid, c))
    return pairs


def boundary_samples(
    chunk: Chunk,
    center_a: np.ndarray,
    center_b: np.ndarray,
    radius_a: float,
    radius_b: float,
    config: DriftConfig,
) -> np.ndarray:
    """Sample ids lying in the band between two cluster centers.

    A sample x is a boundary sample when its distances to the two centers
    differ by at most epsilon_band * d(a, b), and it sits within
    max(radius_a, radius_b, d(a, b)/2) of the midpoint.
    """
    center_a = np.asarray(center_a, dtype=float)
    center_b = np.asarray(center_b, dtype=float)
    gap = float(np.linalg.norm(center_a - center_b))
    if gap == 0.0:
        raise DegenerateGeometryError("coincident cluster centers")
    da = np.linalg.norm(chunk.X - center_a, axis=1)
    db = np.linalg.norm(chunk.X - center_b, axis=1)
    midpoint = 0.5 * (center_a + center_b)
    dm = np.linalg.norm(chunk.X - midpoint, axis=1)
    in_band = np.abs(da - db) <= config.epsilon_band * gap
    near = dm <= max(radius_a, radius_b, gap / 2.0)
    return np.flatnonzero(in_band & near)


def check_merge(
    summary: StreamSummary,
    clustering: ChunkClustering,
    chunk: Chunk,
    densities: np.ndarray,
    config: DriftConfig,
) -> DriftReport:
    """Classify every chunk cluster as updated, novel, or rejected-novel.

    ``densities`` must be the chunk's normalized per-sample densities (they
    share a scale with the clustering's peak densities). Each chunk cluster
    merges into the nearest paired historical cluster whose shared boundary
    shows no density drop; coincident centers count as no drop. Unmerged
    clusters are novel candidates, validated against the dynamic threshold
    |mean - population std| of historical cluster densities (skipped when
    fewer than two historical clusters exist). Failed candidates attach to
    the nearest historical cluster.
    """
    pairs = pair_neighbors(summary, clustering, chunk, config)
    by_cluster: Dict[int, List[int]] = {}
    for hid, c in pairs:
        by_cluster.setdefault(c, []).append(hid)

    def center_gap(hid: int, c: int) -> float:
        rec = summary.clusters[hid]
        return float(np.linalg.norm(rec.center - chunk.X[clustering.clusters[c].peak_id]))

    def has_drop(hid: int, c: int) -> bool:
        rec = summary.clusters[hid]
        cluster = clustering.clusters[c]
        try:
            xb = boundary_samples(
                chunk, rec.center, chunk.X[cluster.peak_id], rec.radius, cluster.radius, config
            )
        except DegenerateGeometryError:
            return False
        if len(xb) < config.min_boundary:
            return True
        return float(densities[xb].mean()) < config.theta_drop * cluster.density

    report = DriftReport()
    candidates: List[int] = []
    for c in range(len(clustering.clusters)):
        mergeable = [hid for hid in by_cluster.get(c, []) if not has_drop(hid, c)]
        if mergeable:
            target = min(mergeable, key=lambda hid: (center_gap(hid, c), hid))
            report.updated.append((target, c))
        else:
            candidates.append(c)

    hist = np.array([summary.clusters[hid].density for hid in sorted(summary.clusters)])
    apply_threshold = len(hist) >= 2
    threshold = abs(float(hist.mean()) - float(hist.std())) if apply_threshold else 0.0
    for c in candidates:
        if not apply_threshold or clustering.clusters[c].density >= threshold:
            report.novel.append(c)
        else:
            nearest = min(sorted(summary.clusters), key=lambda hid: (center_gap(hid, c), hid))
            report.rejected_novel.append((c, nearest))
    return report
