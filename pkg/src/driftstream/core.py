"""Shared domain types for the streaming classifier.

Everything here is a value object; the only stateful container is
:class:`StreamSummary`, which is owned and mutated by exactly one pipeline
instance. Class identifiers are opaque strings so that human annotators can
declare new classes on the fly; hot paths intern them to integer indices
locally where needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

__all__ = [
    "Sample",
    "Chunk",
    "ClusterRecord",
    "SubClusterRecord",
    "StreamSummary",
    "ChunkCluster",
    "ChunkClustering",
    "DriftReport",
    "QueryBatch",
    "LabeledBatch",
    "ChunkValidationError",
    "DegenerateGeometryError",
    "NoPrototypesError",
    "QueryAbortedError",
    "SummaryAuditError",
    "validate_chunk",
]


class ChunkValidationError(ValueError):
    """A chunk violated one of its structural invariants."""


class DegenerateGeometryError(ValueError):
    """Two cluster centers coincide; boundary extraction is undefined."""


class NoPrototypesError(ValueError):
    """Classification was invoked with no labeled prototypes available."""


class QueryAbortedError(RuntimeError):
    """The oracle failed or timed out; carries the unanswered batch."""

    def __init__(self, message: str, batch: "QueryBatch"):
        super().__init__(message)
        self.batch = batch


class SummaryAuditError(AssertionError):
    """A StreamSummary invariant was violated (debug audit walk)."""


@dataclass(frozen=True)
class Sample:
    """One stream observation: a chunk-local id plus its feature vector."""

    id: int
    features: np.ndarray


class Chunk:
    """A fixed-size batch of feature vectors, the unit of processing.

    Samples are stored as one (n, m) float array; sample ids are the row
    indices 0..n-1. Ground-truth labels never travel with a chunk — the
    pipeline is feature-only by construction.
    """

    __slots__ = ("t", "X")

    def __init__(self, t: int, X: np.ndarray):
        self.t = int(t)
        self.X = np.asarray(X, dtype=float)
        if self.X.ndim != 2:
            raise ChunkValidationError(
                f"chunk {t}: feature matrix must be 2-D, got shape {self.X.shape}"
            )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(id=int(i), features=self.X[i])

    @property
    def samples(self) -> List[Sample]:
        return [self.sample(i) for i in range(self.n)]

    def __repr__(self) -> str:
        return f"Chunk(t={self.t}, n={self.n}, dim={self.dim})"


def validate_chunk(chunk: Chunk, expected_dim: int | None = None) -> Chunk:
    """Check chunk invariants; return the chunk unchanged if they hold.

    Raises :class:`ChunkValidationError` naming the chunk index and the
    first offending sample id.
    """
    if chunk.t < 1:
        raise ChunkValidationError(f"chunk {chunk.t}: time index must be >= 1")
    if chunk.n < 1:
        raise ChunkValidationError(f"chunk {chunk.t}: empty chunk")
    if expected_dim is not None and chunk.dim != expected_dim:
        raise ChunkValidationError(
            f"chunk {chunk.t}: dimension {chunk.dim} != expected {expected_dim}"
        )
    if chunk.dim < 1:
        raise ChunkValidationError(f"chunk {chunk.t}: samples need at least 1 feature")
    finite = np.isfinite(chunk.X)
    if not finite.all():
        bad = int(np.flatnonzero(~finite.all(axis=1))[0])
        raise ChunkValidationError(
            f"chunk {chunk.t}: non-finite feature in sample {bad}"
        )
    return chunk


@dataclass
class ClusterRecord:
    """Macro-summary entry: center sample, normalized density, radius."""

    cluster_id: int
    center: np.ndarray
    density: float
    radius: float
    last_updated: int


@dataclass
class SubClusterRecord:
    """Micro-summary entry: single-label sub-cluster center inside a cluster.

    The center is the highest-density sample seen so far for this
    (cluster, label) pair, together with the density it had when recorded.
    """

    parent_cluster_id: int
    center: np.ndarray
    label: str
    density: float
    last_updated: int


@dataclass
class StreamSummary:
    """The only state carried across chunks: macro + micro summaries.

    ``clusters`` maps cluster_id -> ClusterRecord; ``subclusters`` maps
    (cluster_id, label) -> SubClusterRecord, which enforces the one-record-
    per-pair invariant structurally. ``next_cluster_id`` only grows; retired
    ids are never reused.
    """

    clusters: Dict[int, ClusterRecord] = field(default_factory=dict)
    subclusters: Dict[Tuple[int, str], SubClusterRecord] = field(default_factory=dict)
    next_cluster_id: int = 0

    @property
    def is_empty(self) -> bool:
        return not self.clusters

    def allocate_cluster_id(self) -> int:
        cid = self.next_cluster_id
        self.next_cluster_id += 1
        return cid

    def labels_seen(self) -> List[str]:
        return sorted({key[1] for key in self.subclusters})

    def audit(self) -> None:
        """Debug-mode invariant walk; raises SummaryAuditError on violation."""
        for cid, rec in self.clusters.items():
            if cid != rec.cluster_id:
                raise SummaryAuditError(f"cluster key {cid} != record id {rec.cluster_id}")
            if cid >= self.next_cluster_id:
                raise SummaryAuditError(f"cluster id {cid} >= next_cluster_id")
            if not rec.density > 0:
                raise SummaryAuditError(f"cluster {cid}: density {rec.density} <= 0")
            if rec.radius < 0:
                raise SummaryAuditError(f"cluster {cid}: negative radius")
            if not np.isfinite(rec.center).all():
                raise SummaryAuditError(f"cluster {cid}: non-finite center")
        for (pid, label), sub in self.subclusters.items():
            if pid not in self.clusters:
                raise SummaryAuditError(f"sub-cluster ({pid}, {label!r}) has no parent")
            if sub.parent_cluster_id != pid or sub.label != label:
                raise SummaryAuditError(f"sub-cluster key ({pid}, {label!r}) mismatches record")
            if not sub.density > 0:
                raise SummaryAuditError(f"sub-cluster ({pid}, {label!r}): density <= 0")


@dataclass(frozen=True)
class ChunkCluster:
    """One cluster found inside a chunk: peak sample, members, shape stats.

    ``density`` is the peak's sharing density normalized by chunk size;
    ``radius`` is the maximal member-to-peak Euclidean distance.
    """

    peak_id: int
    members: np.ndarray  # sorted sample ids
    density: float
    radius: float

    def member_set(self) -> set:
        return set(int(i) for i in self.members)


@dataclass
class ChunkClustering:
    """Partition of one chunk into clusters, plus the sharing radius used."""

    chunk: Chunk
    assignments: np.ndarray  # per-sample cluster index
    clusters: List[ChunkCluster]
    sigma_share: float

    def peak_features(self, cluster_index: int) -> np.ndarray:
        return self.chunk.X[self.clusters[cluster_index].peak_id]


@dataclass
class DriftReport:
    """Outcome of matching chunk clusters against historical clusters.

    ``novel`` holds chunk-cluster indices confirmed as new concepts;
    ``updated`` holds (historical cluster_id, chunk-cluster index) merge
    pairs; ``rejected_novel`` holds (chunk-cluster index, historical
    cluster_id) for candidates that failed validation and were attached to
    their nearest historical cluster. Together the three lists cover every
    chunk cluster exactly once.
    """

    novel: List[int] = field(default_factory=list)
    updated: List[Tuple[int, int]] = field(default_factory=list)
    rejected_novel: List[Tuple[int, int]] = field(default_factory=list)

    def covers(self, n_clusters: int) -> bool:
        seen = list(self.novel) + [c for _, c in self.updated] + [c for c, _ in self.rejected_novel]
        return sorted(seen) == list(range(n_clusters))

    def governing(self, summary_next_id: int) -> Dict[int, int]:
        """Map each chunk-cluster index to the cluster id that governs it.

        Novel clusters receive fresh ids in report order starting at
        ``summary_next_id`` (the allocation order used by the summary update).
        """
        gov: Dict[int, int] = {}
        for hid, c in self.updated:
            gov[c] = hid
        for c, hid in self.rejected_novel:
            gov[c] = hid
        for rank, c in enumerate(self.novel):
            gov[c] = summary_next_id + rank
        return gov


@dataclass
class QueryBatch:
    """Samples selected for labeling this chunk, split by sampling kind."""

    representative: List[int] = field(default_factory=list)
    informative: List[int] = field(default_factory=list)
    budget: int = 0

    @property
    def ids(self) -> List[int]:
        return list(self.representative) + list(self.informative)

    def __len__(self) -> int:
        return len(self.representative) + len(self.informative)


@dataclass
class LabeledBatch:
    """Labels for a subset of one chunk's samples, keyed by sample id."""

    labels: Dict[int, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, sample_id: int) -> str:
        return self.labels[sample_id]

    def __contains__(self, sample_id: int) -> bool:
        return sample_id in self.labels

    def ids(self) -> List[int]:
        return sorted(self.labels)


def as_feature_matrix(vectors: Sequence[Sequence[float]]) -> np.ndarray:
    """Stack feature vectors into a float matrix (shared helper)."""
    return np.asarray(vectors, dtype=float).reshape(len(vectors), -1)
