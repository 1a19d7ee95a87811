"""Per-chunk orchestration: cluster, drift-check, query, classify, update.

One pipeline instance owns one :class:`StreamSummary` and processes chunks
strictly in order; the summary is the only state carried between chunks, so
a run can be resumed from a serialized snapshot and reproduce the remaining
results exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import classify as classify_mod
from . import density as density_mod
from . import drift as drift_mod
from .active import Oracle, QueryConfig, active_query
from .core import (
    Chunk,
    ChunkClustering,
    ClusterRecord,
    DriftReport,
    LabeledBatch,
    QueryAbortedError,
    QueryBatch,
    StreamSummary,
    SubClusterRecord,
    validate_chunk,
)
from .density import DensityConfig
from .drift import DriftConfig

__all__ = [
    "PipelineConfig",
    "ChunkResult",
    "process_chunk",
    "update_summary",
    "save_snapshot",
    "load_snapshot",
    "SnapshotError",
    "SNAPSHOT_VERSION",
]

SNAPSHOT_VERSION = "cdsc-al/1"


class SnapshotError(ValueError):
    """Snapshot file is unreadable or carries an unknown version tag."""


@dataclass(frozen=True)
class PipelineConfig:
    density: DensityConfig = field(default_factory=DensityConfig)
    drift: DriftConfig = field(default_factory=DriftConfig)
    query: QueryConfig = field(default_factory=QueryConfig)
    k_neighbors: int = 5
    stale_after: Optional[int] = None  # retire clusters untouched this many chunks
    on_oracle_failure: str = "fallback"  # "fallback" | "raise"

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.stale_after is not None and self.stale_after < 1:
            raise ValueError("stale_after must be >= 1 when set")
        if self.on_oracle_failure not in ("fallback", "raise"):
            raise ValueError(f"unknown oracle-failure policy {self.on_oracle_failure!r}")


@dataclass
class ChunkResult:
    """Everything the harness needs about one processed chunk."""

    t: int
    predictions: LabeledBatch
    queries: QueryBatch
    drift: DriftReport
    summary_stats: Tuple[int, int]  # (|clusters|, |subclusters|)
    timings: Dict[str, float]


def process_chunk(
    summary: StreamSummary,
    chunk: Chunk,
    oracle: Oracle,
    config: PipelineConfig,
) -> Tuple[StreamSummary, ChunkResult]:
    """Run the full per-chunk sequence and mutate the summary in place.

    The first chunk (empty summary) skips drift checking: every cluster is
    novel by definition. An oracle failure on a later chunk degrades to an
    unlabeled chunk (empty query batch) under the default policy, because
    the summary still provides prototypes; on the first chunk it is fatal
    either way.
    """
    validate_chunk(chunk)
    timings: Dict[str, float] = {}

    tic = time.perf_counter()
    distances = density_mod.pairwise_distances(chunk)
    clustering = density_mod.extract_clusters(chunk, config.density, distances=distances)
    clustering = density_mod.merge_overlapped(clustering, config.density)
    if clustering.sigma_share > 0:
        densities = density_mod.sharing_density(distances, clustering.sigma_share) / chunk.n
    else:
        densities = np.ones(chunk.n)
    timings["density"] = time.perf_counter() - tic

    tic = time.perf_counter()
    if summary.is_empty:
        report = DriftReport(novel=list(range(len(clustering.clusters))))
    else:
        report = drift_mod.check_merge(summary, clustering, chunk, densities, config.drift)
    timings["drift"] = time.perf_counter() - tic

    tic = time.perf_counter()
    try:
        queries, labels = active_query(
            chunk,
            clustering,
            report,
            densities,
            oracle,
            config.query,
            known_classes=summary.labels_seen(),
        )
    except QueryAbortedError:
        if config.on_oracle_failure == "raise" or not summary.subclusters:
            raise
        queries, labels = QueryBatch(budget=0), LabeledBatch()
    timings["query"] = time.perf_counter() - tic

    tic = time.perf_counter()
    prototypes = classify_mod.assemble_prototypes(summary, queries, labels, chunk)
    predictions = classify_mod.knn_propagate(
        prototypes, chunk, queries, labels, k=config.k_neighbors
    )
    timings["classify"] = time.perf_counter() - tic

    tic = time.perf_counter()
    update_summary(summary, clustering, report, predictions, densities, chunk, chunk.t, config)
    timings["update"] = time.perf_counter() - tic

    if __debug__:
        summary.audit()

    result = ChunkResult(
        t=chunk.t,
        predictions=predictions,
        queries=queries,
        drift=report,
        summary_stats=(len(summary.clusters), len(summary.subclusters)),
        timings=timings,
    )
    return summary, result


def update_summary(
    summary: StreamSummary,
    clustering: ChunkClustering,
    report: DriftReport,
    predictions: LabeledBatch,
    densities: np.ndarray,
    chunk: Chunk,
    t: int,
    config: PipelineConfig | None = None,
) -> StreamSummary:
    """Fold one chunk's clusters and predicted labels into the summary.

    Macro level: updated historical records are overwritten with the merged
    chunk cluster's peak/density/radius; confirmed novel clusters get fresh
    ids. Micro level: for every live cluster and every label among its
    assigned chunk samples, the highest-density sample of that label becomes
    the sub-cluster center if the pair is new or if it beats the stored
    density. Rejected-novel members feed the sub-clusters of the historical
    cluster they were attached to.
    """
    for hid, c in report.updated:
        cluster = clustering.clusters[c]
        rec = summary.clusters[hid]
        rec.center = chunk.X[cluster.peak_id].copy()
        rec.density = cluster.density
        rec.radius = cluster.radius
        rec.last_updated = t

    # cluster id -> chunk-cluster indices it governs this chunk
    owned: Dict[int, List[int]] = {}
    for hid, c in report.updated:
        owned.setdefault(hid, []).append(c)
    for c, hid in report.rejected_novel:
        owned.setdefault(hid, []).append(c)
    for c in report.novel:
        cluster = clustering.clusters[c]
        cid = summary.allocate_cluster_id()
        summary.clusters[cid] = ClusterRecord(
            cluster_id=cid,
            center=chunk.X[cluster.peak_id].copy(),
            density=cluster.density,
            radius=cluster.radius,
            last_updated=t,
        )
        owned.setdefault(cid, []).append(c)

    for cid in sorted(owned):
        member_ids = np.concatenate(
            [clustering.clusters[c].members for c in sorted(owned[cid])]
        )
        by_label: Dict[str, int] = {}
        for i in member_ids:
            i = int(i)
            label = predictions[i]
            best = by_label.get(label)
            if best is None or (densities[i], -i) > (densities[best], -best):
                by_label[label] = i
        for label in sorted(by_label):
            i = by_label[label]
            key = (cid, label)
            existing = summary.subclusters.get(key)
            if existing is None:
                summary.subclusters[key] = SubClusterRecord(
                    parent_cluster_id=cid,
                    center=chunk.X[i].copy(),
                    label=label,
                    density=float(densities[i]),
                    last_updated=t,
                )
            elif float(densities[i]) > existing.density:
                existing.center = chunk.X[i].copy()
                existing.density = float(densities[i])
                existing.last_updated = t

    stale_after = config.stale_after if config is not None else None
    if stale_after is not None:
        stale = [cid for cid, rec in summary.clusters.items() if t - rec.last_updated >= stale_after]
        for cid in stale:
            del summary.clusters[cid]
        summary.subclusters = {
            key: sub for key, sub in summary.subclusters.items() if key[0] in summary.clusters
        }
    return summary


def save_snapshot(summary: StreamSummary, path: str, t: int = 0) -> None:
    """Serialize the summary (plus the last processed chunk index) as JSON."""
    doc = {
        "version": SNAPSHOT_VERSION,
        "t": t,
        "next_cluster_id": summary.next_cluster_id,
        "clusters": [
            {
                "cluster_id": rec.cluster_id,
                "center": [float(v) for v in rec.center],
                "density": rec.density,
                "radius": rec.radius,
                "last_updated": rec.last_updated,
            }
            for _, rec in sorted(summary.clusters.items())
        ],
        "subclusters": [
            {
                "parent_cluster_id": sub.parent_cluster_id,
                "center": [float(v) for v in sub.center],
                "label": sub.label,
                "density": sub.density,
                "last_updated": sub.last_updated,
            }
            for _, sub in sorted(summary.subclusters.items())
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_snapshot(path: str) -> Tuple[StreamSummary, int]:
    """Read a snapshot back; returns (summary, last processed chunk index)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"corrupted snapshot at byte offset {exc.pos}: {exc.msg}") from exc
    version = doc.get("version")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version!r} (want {SNAPSHOT_VERSION})")
    summary = StreamSummary(next_cluster_id=int(doc["next_cluster_id"]))
    for rec in doc["clusters"]:
        summary.clusters[int(rec["cluster_id"])] = ClusterRecord(
            cluster_id=int(rec["cluster_id"]),
            center=np.asarray(rec["center"], dtype=float),
            density=float(rec["density"]),
            radius=float(rec["radius"]),
            last_updated=int(rec["last_updated"]),
        )
    for sub in doc["subclusters"]:
        record = SubClusterRecord(
            parent_cluster_id=int(sub["parent_cluster_id"]),
            center=np.asarray(sub["center"], dtype=float),
            label=str(sub["label"]),
            density=float(sub["density"]),
            last_updated=int(sub["last_updated"]),
        )
        summary.subclusters[(record.parent_cluster_id, record.label)] = record
    summary.audit()
    return summary, int(doc.get("t", 0))
