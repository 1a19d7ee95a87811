"""Budgeted hybrid label querying.

Novel clusters get representative queries (densest members first, round-robin
across clusters so every new concept sees at least one label when the budget
allows). Updated clusters get informative queries: samples ranked by their
radius-normalized distance to the cluster peak, so "far from the cluster"
means the same thing for clusters of different scales. The total number of
queries per chunk never exceeds ceil(beta * n).
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Protocol, Sequence, Set, Tuple

import numpy as np

from .core import (
    Chunk,
    ChunkClustering,
    DriftReport,
    LabeledBatch,
    QueryBatch,
    QueryAbortedError,
    Sample,
)

__all__ = [
    "QueryConfig",
    "QueryContext",
    "Oracle",
    "partition_by_cluster_kind",
    "allocate_budget",
    "representative_query",
    "informative_query",
    "active_query",
]


@dataclass(frozen=True)
class QueryConfig:
    """Label budget as a fraction of the chunk size."""

    beta_budget: float = 0.10

    def __post_init__(self):
        if not 0 < self.beta_budget <= 1:
            raise ValueError(f"beta_budget must be in (0, 1], got {self.beta_budget}")


@dataclass
class QueryContext:
    """Metadata handed to the oracle alongside the queried samples.

    ``kinds`` marks each queried id as representative or informative;
    ``cluster_tags`` carries the chunk-cluster index each id belongs to
    (display context only); ``known_classes`` lists labels already present
    in the stream summary.
    """

    chunk: Chunk
    kinds: Dict[int, str] = field(default_factory=dict)
    cluster_tags: Dict[int, int] = field(default_factory=dict)
    known_classes: List[str] = field(default_factory=list)


class Oracle(Protocol):
    """A label source: must answer exactly the samples it was asked about."""

    def label(self, samples: Sequence[Sample], context: QueryContext) -> LabeledBatch:
        ...


def partition_by_cluster_kind(
    chunk: Chunk, clustering: ChunkClustering, report: DriftReport
) -> Tuple[Set[int], Set[int]]:
    """Split chunk sample ids into novel-cluster and updated-cluster sets.

    Members of confirmed novel clusters land in X_no; members of updated and
    rejected-novel clusters land in X_up. Together they cover the chunk.
    """
    novel = set(report.novel)
    x_no: Set[int] = set()
    x_up: Set[int] = set()
    for c, cluster in enumerate(clustering.clusters):
        target = x_no if c in novel else x_up
        target.update(int(i) for i in cluster.members)
    return x_no, x_up


def allocate_budget(
    n: int, n_novel_samples: int, n_novel_clusters: int, config: QueryConfig
) -> Tuple[int, int, int]:
    """Split the chunk budget B between novel and updated sampling.

    The novel share is proportional to novel-sample mass, floored at one
    query per confirmed novel cluster while the budget permits. Rounding is
    half-up for determinism.
    """
    budget = math.ceil(config.beta_budget * n)
    proportional = int(math.floor(budget * n_novel_samples / n + 0.5))
    b_no = min(budget, max(proportional, min(n_novel_clusters, budget)))
    return budget, b_no, budget - b_no


def representative_query(
    clustering: ChunkClustering,
    report: DriftReport,
    densities: np.ndarray,
    b_no: int,
) -> List[int]:
    """Densest members of novel clusters, round-robin in report order.

    Each cluster yields its peak first, then remaining members by descending
    density (ties toward the lower id). Stops at b_no ids.
    """
    if b_no <= 0:
        return []
    queues: List[List[int]] = []
    for c in report.novel:
        cluster = clustering.clusters[c]
        rest = [int(i) for i in cluster.members if int(i) != cluster.peak_id]
        rest.sort(key=lambda i: (-densities[i], i))
        queues.append([cluster.peak_id] + rest)
    picked: List[int] = []
    while queues and len(picked) < b_no:
        exhausted = []
        for q, queue in enumerate(queues):
            if len(picked) >= b_no:
                break
            picked.append(queue.pop(0))
            if not queue:
                exhausted.append(q)
        queues = [q for i, q in enumerate(queues) if i not in exhausted]
    return picked


def informative_query(
    chunk: Chunk,
    clustering: ChunkClustering,
    report: DriftReport,
    b_up: int,
) -> List[int]:
    """Samples of updated clusters ranked by radius-normalized peak distance.

    Score s(x) = d(x, peak) / max(R, eps); the top b_up scores win, ties
    toward the lower id. Singleton clusters (R = 0) fall back to machine
    epsilon so their only member scores 0.
    """
    if b_up <= 0:
        return []
    novel = set(report.novel)
    scored: List[Tuple[float, int]] = []
    for c, cluster in enumerate(clustering.clusters):
        if c in novel:
            continue
        peak = chunk.X[cluster.peak_id]
        denom = max(cluster.radius, sys.float_info.epsilon)
        dists = np.linalg.norm(chunk.X[cluster.members] - peak, axis=1)
        scored.extend((float(d) / denom, int(i)) for d, i in zip(dists, cluster.members))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [i for _, i in scored[:b_up]]


def active_query(
    chunk: Chunk,
    clustering: ChunkClustering,
    report: DriftReport,
    densities: np.ndarray,
    oracle: Oracle,
    config: QueryConfig,
    known_classes: Sequence[str] = (),
) -> Tuple[QueryBatch, LabeledBatch]:
    """Select queries, invoke the oracle once, and return batch plus labels.

    Raises :class:`QueryAbortedError` carrying the unanswered batch when the
    oracle fails, times out, or answers the wrong ids.
    """
    x_no, x_up = partition_by_cluster_kind(chunk, clustering, report)
    budget, b_no, b_up = allocate_budget(chunk.n, len(x_no), len(report.novel), config)
    q_r = representative_query(clustering, report, densities, b_no)
    q_i = informative_query(chunk, clustering, report, b_up)
    batch = QueryBatch(representative=q_r, informative=q_i, budget=budget)

    context = QueryContext(
        chunk=chunk,
        kinds={**{i: "representative" for i in q_r}, **{i: "informative" for i in q_i}},
        cluster_tags={i: int(clustering.assignments[i]) for i in batch.ids},
        known_classes=list(known_classes),
    )
    samples = [chunk.sample(i) for i in batch.ids]
    try:
        answer = oracle.label(samples, context)
    except QueryAbortedError:
        raise
    except Exception as exc:
        raise QueryAbortedError(f"oracle failed: {exc}", batch) from exc

    if set(answer.labels) != set(batch.ids):
        raise QueryAbortedError("oracle answered a different id set than queried", batch)
    if any(not label for label in answer.labels.values()):
        raise QueryAbortedError("oracle returned an empty class identifier", batch)
    return batch, answer
