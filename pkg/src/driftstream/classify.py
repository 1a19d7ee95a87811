"""Label propagation from prototypes to the full chunk.

Prototypes are the sub-cluster centers carried in the stream summary plus
the freshly queried samples. Because sub-clusters are per-(cluster, label),
a region shared by two classes contributes prototypes of both labels and the
KNN vote draws the boundary between them. Queried samples always keep their
oracle labels verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.spatial.distance import cdist

from .core import Chunk, LabeledBatch, NoPrototypesError, QueryBatch, StreamSummary

__all__ = ["Prototype", "PrototypeSet", "assemble_prototypes", "knn_propagate"]


@dataclass(frozen=True)
class Prototype:
    features: np.ndarray
    label: str
    source: str  # "subcluster" | "query"


@dataclass
class PrototypeSet:
    """Ordered labeled prototypes; order breaks neighbor-distance ties."""

    entries: List[Prototype]

    def __len__(self) -> int:
        return len(self.entries)

    def feature_matrix(self) -> np.ndarray:
        return np.stack([p.features for p in self.entries])


def assemble_prototypes(
    summary: StreamSummary,
    queries: QueryBatch,
    labels: LabeledBatch,
    chunk: Chunk,
) -> PrototypeSet:
    """Sub-cluster centers plus queried samples, query entries last.

    A sub-cluster center that exactly equals a queried sample's features is
    dropped in favor of the query-sourced entry.
    """
    query_entries = [
        Prototype(features=chunk.X[i], label=labels[i], source="query") for i in queries.ids
    ]
    queried_keys = {entry.features.tobytes() for entry in query_entries}
    sub_entries = [
        Prototype(features=sub.center, label=sub.label, source="subcluster")
        for (_, _), sub in sorted(summary.subclusters.items())
        if np.asarray(sub.center, dtype=float).tobytes() not in queried_keys
    ]
    entries = sub_entries + query_entries
    if not entries:
        raise NoPrototypesError("no sub-clusters and no queried labels to classify from")
    return PrototypeSet(entries=entries)


def _majority(
    neighbor_order: np.ndarray, proto_labels: List[int], n_labels: int
) -> int:
    """Majority label among ordered neighbors; ties go to the nearest tied label."""
    counts = np.zeros(n_labels, dtype=int)
    for j in neighbor_order:
        counts[proto_labels[j]] += 1
    best = counts.max()
    tied = np.flatnonzero(counts == best)
    if len(tied) == 1:
        return int(tied[0])
    tied_set = set(int(t) for t in tied)
    for j in neighbor_order:
        if proto_labels[j] in tied_set:
            return proto_labels[j]
    raise AssertionError("unreachable: some tied label must appear among neighbors")


def knn_propagate(
    prototypes: PrototypeSet,
    chunk: Chunk,
    queries: QueryBatch,
    labels: LabeledBatch,
    k: int = 5,
) -> LabeledBatch:
    """Assign every chunk sample a label via a k-nearest-prototype vote.

    Queried samples take their oracle labels directly. Every other sample
    gets the majority label among its k nearest prototypes by Euclidean
    distance (all prototypes when fewer than k exist); equal neighbor
    distances resolve by prototype list order, and majority ties resolve to
    the label of the nearest tied prototype.
    """
    if len(prototypes) == 0:
        raise NoPrototypesError("cannot propagate labels from an empty prototype set")
    label_index: dict[str, int] = {}
    proto_labels: List[int] = []
    for entry in prototypes.entries:
        proto_labels.append(label_index.setdefault(entry.label, len(label_index)))
    names = list(label_index)

    k_eff = min(k, len(prototypes))
    dists = cdist(chunk.X, prototypes.feature_matrix())
    order = np.argsort(dists, axis=1, kind="stable")[:, :k_eff]

    out: dict[int, str] = {}
    for i in range(chunk.n):
        if i in labels:
            out[i] = labels[i]
        else:
            out[i] = names[_majority(order[i], proto_labels, len(names))]
    return LabeledBatch(labels=out)
