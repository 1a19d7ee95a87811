"""Clustering-based stream classifier with active label querying.

Processes a data stream chunk by chunk: density-peak clustering finds the
chunk's structure, a boundary-density merge test separates drifted concepts
from novel ones, a budgeted hybrid query strategy asks an oracle (simulated
or human) for a small fraction of labels, and a KNN vote over sub-cluster
prototypes labels everything else. The only state carried between chunks is
a two-level summary of cluster centers and per-label sub-cluster centers.
"""

from .active import Oracle, QueryConfig, active_query
from .classify import assemble_prototypes, knn_propagate
from .core import (
    Chunk,
    ChunkClustering,
    ClusterRecord,
    DriftReport,
    LabeledBatch,
    QueryBatch,
    Sample,
    StreamSummary,
    SubClusterRecord,
    validate_chunk,
)
from .density import DensityConfig, extract_clusters, merge_overlapped, sharing_density
from .drift import DriftConfig, check_merge
from .harness import (
    ChunkMetrics,
    SimulatedOracle,
    StreamSpec,
    balanced_accuracy,
    ingest_csv,
    macro_f,
    run_experiment,
)
from .pipeline import ChunkResult, PipelineConfig, load_snapshot, process_chunk, save_snapshot

__version__ = "0.1.0"
