"""Everything around the algorithm: streams, replay, metrics, run reports.

Ground-truth labels live only here. The pipeline sees feature-only chunks;
truth is handed to the simulated oracle and to the metric computation, and
nowhere else. Per-chunk metrics are computed over non-queried samples only,
since queried labels come straight from the oracle and would inflate
accuracy by exactly the budget fraction.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .active import Oracle, QueryContext
from .core import (
    Chunk,
    LabeledBatch,
    QueryAbortedError,
    Sample,
    StreamSummary,
    validate_chunk,
)
from .pipeline import (
    ChunkResult,
    PipelineConfig,
    load_snapshot,
    process_chunk,
    save_snapshot,
)

__all__ = [
    "StreamSpec",
    "ChunkMetrics",
    "ExperimentReport",
    "ExperimentAborted",
    "LabeledStream",
    "GaussianClassSpec",
    "GaussianStreamSpec",
    "SpecError",
    "IngestError",
    "SimulatedOracle",
    "ingest_csv",
    "write_csv",
    "generate_gaussian_stream",
    "order_samples",
    "balanced_accuracy",
    "macro_f",
    "iter_chunks",
    "resolve_stream",
    "run_experiment",
    "preset_names",
    "preset_spec",
]


class SpecError(ValueError):
    """A stream or generator spec field is invalid; message names the field."""


class IngestError(ValueError):
    """A CSV input could not be parsed; message names row and column."""


class ExperimentAborted(RuntimeError):
    """A run stopped early (oracle failure); a resume snapshot may exist."""

    def __init__(self, message: str, snapshot_path: Optional[str] = None):
        super().__init__(message)
        self.snapshot_path = snapshot_path


@dataclass
class LabeledStream:
    """A finite labeled sample sequence; labels stay harness-side."""

    X: np.ndarray
    labels: List[str]

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != len(self.labels):
            raise SpecError("stream features and labels disagree in length")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class StreamSpec:
    """Where a stream comes from and how it is replayed."""

    source: str  # csv path, generator-spec path (.json), or preset name
    chunk_size: int = 1000
    order: str = "given"  # given | abrupt | gradual
    seed: int = 0
    label_column: str = "label"

    def __post_init__(self):
        if self.chunk_size < 1:
            raise SpecError("stream.chunk_size must be >= 1")
        if self.order not in ("given", "abrupt", "gradual"):
            raise SpecError(f"stream.order must be given|abrupt|gradual, got {self.order!r}")


@dataclass(frozen=True)
class ChunkMetrics:
    t: int
    balanced_accuracy: Optional[float]
    macro_f: Optional[float]
    n_eval: int
    queried: int


@dataclass
class ExperimentReport:
    per_chunk: List[ChunkMetrics]
    aggregate: Dict[str, object]
    log_lines: List[str]  # deterministic result log (header, chunks, aggregate)
    timing_lines: List[str]  # wall-clock sidecar, excluded from determinism
    summary: StreamSummary
    chunk_results: List[ChunkResult]


# ---------------------------------------------------------------------------
# Ingestion and generation


def ingest_csv(path: str, label_column: str = "label") -> LabeledStream:
    """Parse a headed CSV into features + hidden labels.

    All non-label columns must be numeric; the first offending cell is
    reported with its 1-based data row and column name.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        if label_column not in header:
            raise IngestError(f"{path}: missing label column {label_column!r}")
        label_idx = header.index(label_column)
        feature_cols = [(i, name) for i, name in enumerate(header) if i != label_idx]
        rows: List[List[float]] = []
        labels: List[str] = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}")
            values = []
            for i, name in feature_cols:
                try:
                    values.append(float(row[i]))
                except ValueError:
                    raise IngestError(
                        f"{path}: row {row_no}, column {name!r}: not a number ({row[i]!r})"
                    ) from None
            rows.append(values)
            labels.append(row[label_idx])
    if not rows:
        raise IngestError(f"{path}: no data rows")
    return LabeledStream(X=np.asarray(rows, dtype=float), labels=labels)


def write_csv(stream: LabeledStream, path: str, label_column: str = "label") -> None:
    """Write a labeled stream as CSV with columns f0..f{m-1} + label."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j}" for j in range(stream.dim)] + [label_column])
        for row, label in zip(stream.X, stream.labels):
            writer.writerow([repr(float(v)) for v in row] + [label])


@dataclass(frozen=True)
class GaussianClassSpec:
    """One mixture component: where it lives, when it appears, how it moves."""

    label: str
    mean: Tuple[float, ...]
    cov: Tuple[float, ...]  # diagonal variances
    appears_at: int = 1
    drift: Tuple[float, ...] = ()  # per-chunk mean shift; empty = stationary
    weight: float = 1.0


@dataclass(frozen=True)
class GaussianStreamSpec:
    dim: int
    n_chunks: int
    chunk_size: int
    classes: Tuple[GaussianClassSpec, ...]


def _validate_gaussian_spec(spec: GaussianStreamSpec) -> None:
    if spec.dim < 1:
        raise SpecError("dim must be >= 1")
    if spec.n_chunks < 1:
        raise SpecError("n_chunks must be >= 1")
    if spec.chunk_size < 1:
        raise SpecError("chunk_size must be >= 1")
    if not spec.classes:
        raise SpecError("classes must be nonempty")
    seen = set()
    for idx, cls in enumerate(spec.classes):
        where = f"classes[{idx}]"
        if not cls.label:
            raise SpecError(f"{where}.label: empty class identifier")
        if cls.label in seen:
            raise SpecError(f"{where}.label: duplicate {cls.label!r}")
        seen.add(cls.label)
        if len(cls.mean) != spec.dim:
            raise SpecError(f"{where}.mean: expected {spec.dim} values, got {len(cls.mean)}")
        if len(cls.cov) != spec.dim:
            raise SpecError(f"{where}.cov: expected {spec.dim} values, got {len(cls.cov)}")
        if any(v <= 0 for v in cls.cov):
            raise SpecError(f"{where}.cov: variances must be positive")
        if cls.drift and len(cls.drift) != spec.dim:
            raise SpecError(f"{where}.drift: expected {spec.dim} values, got {len(cls.drift)}")
        if not 1 <= cls.appears_at <= spec.n_chunks:
            raise SpecError(f"{where}.appears_at: must be in [1, {spec.n_chunks}]")
        if cls.weight <= 0:
            raise SpecError(f"{where}.weight: must be positive")


def _apportion(weights: Sequence[float], total: int) -> List[int]:
    """Largest-remainder apportionment; ties break toward earlier entries."""
    w = sum(weights)
    exact = [total * wi / w for wi in weights]
    counts = [int(math.floor(e)) for e in exact]
    remainder = total - sum(counts)
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def generate_gaussian_stream(spec: GaussianStreamSpec, seed: int) -> LabeledStream:
    """Sample the scheduled mixture chunk by chunk, deterministically."""
    _validate_gaussian_spec(spec)
    rng = np.random.default_rng(seed)
    features: List[np.ndarray] = []
    labels: List[str] = []
    for t in range(1, spec.n_chunks + 1):
        active = [cls for cls in spec.classes if cls.appears_at <= t]
        if not active:
            raise SpecError(f"no class active at chunk {t}")
        counts = _apportion([cls.weight for cls in active], spec.chunk_size)
        chunk_X: List[np.ndarray] = []
        chunk_y: List[str] = []
        for cls, count in zip(active, counts):
            if count == 0:
                continue
            drift = np.asarray(cls.drift if cls.drift else [0.0] * spec.dim)
            mean = np.asarray(cls.mean) + (t - cls.appears_at) * drift
            std = np.sqrt(np.asarray(cls.cov))
            chunk_X.append(mean + rng.standard_normal((count, spec.dim)) * std)
            chunk_y.extend([cls.label] * count)
        X = np.concatenate(chunk_X)
        perm = rng.permutation(len(X))
        features.append(X[perm])
        labels.extend(chunk_y[i] for i in perm)
    return LabeledStream(X=np.concatenate(features), labels=labels)


def order_samples(stream: LabeledStream, order: str, seed: int) -> LabeledStream:
    """Re-order a labeled sequence to shape the drift regime on replay.

    "abrupt" sorts samples into contiguous class blocks (classes in
    lexicographic order); "gradual" jitters the class rank with seeded
    uniform noise wider than the rank gap, so adjacent classes interleave
    over a transition window whose mixture shifts linearly.
    """
    if order == "given":
        return stream
    ranks = {label: r for r, label in enumerate(sorted(set(stream.labels)))}
    keys = np.asarray([ranks[label] for label in stream.labels], dtype=float)
    if order == "gradual":
        rng = np.random.default_rng(seed)
        keys = keys + rng.uniform(0.0, 1.5, size=len(keys))
    perm = np.argsort(keys, kind="stable")
    return LabeledStream(X=stream.X[perm], labels=[stream.labels[i] for i in perm])


# ---------------------------------------------------------------------------
# Bundled desk-scale stream presets


def desk_syn_a(n_chunks: int = 19, chunk_size: int = 1000) -> GaussianStreamSpec:
    """Nine well-separated drifting classes on a ring, appearing over time."""
    classes = []
    appearances = [1, 1, 1, 3, 5, 7, 9, 11, 13]
    for i in range(9):
        angle = 2 * math.pi * i / 9
        mean = (21 * math.cos(angle), 21 * math.sin(angle))
        drift = (-0.18 * math.sin(angle), 0.18 * math.cos(angle))
        classes.append(
            GaussianClassSpec(
                label=f"c{i}",
                mean=mean,
                cov=(0.64, 0.64),
                appears_at=min(appearances[i], n_chunks),
                drift=drift,
            )
        )
    return GaussianStreamSpec(dim=2, n_chunks=n_chunks, chunk_size=chunk_size, classes=tuple(classes))


def desk_syn_b(n_chunks: int = 12, chunk_size: int = 1000) -> GaussianStreamSpec:
    """Two overlapped class pairs (~30% overlap) plus two clean classes."""
    drift = (0.1, 0.0)
    classes = (
        GaussianClassSpec(label="u0", mean=(-14.0, 0.0), cov=(1.0, 1.0), drift=drift),
        GaussianClassSpec(label="u1", mean=(-11.9, 0.0), cov=(1.0, 1.0), drift=drift),
        GaussianClassSpec(label="v0", mean=(14.0, 0.0), cov=(1.0, 1.0), drift=drift),
        GaussianClassSpec(label="v1", mean=(14.0, 2.1), cov=(1.0, 1.0), drift=drift),
        GaussianClassSpec(label="w0", mean=(0.0, 16.0), cov=(1.0, 1.0), drift=drift),
        GaussianClassSpec(
            label="w1", mean=(0.0, -16.0), cov=(1.0, 1.0), drift=drift,
            appears_at=min(4, n_chunks),
        ),
    )
    return GaussianStreamSpec(dim=2, n_chunks=n_chunks, chunk_size=chunk_size, classes=classes)


_PRESETS: Dict[str, Callable[..., GaussianStreamSpec]] = {
    "desk-syn-A": desk_syn_a,
    "desk-syn-B": desk_syn_b,
}


def preset_names() -> List[str]:
    return sorted(_PRESETS)


def preset_spec(name: str, chunk_size: int = 1000) -> GaussianStreamSpec:
    if name not in _PRESETS:
        raise SpecError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return _PRESETS[name](chunk_size=chunk_size)


def gaussian_spec_from_dict(doc: Mapping) -> GaussianStreamSpec:
    """Build a generator spec from parsed JSON, validating as we go."""
    try:
        classes = tuple(
            GaussianClassSpec(
                label=str(cls["label"]),
                mean=tuple(float(v) for v in cls["mean"]),
                cov=tuple(float(v) for v in cls["cov"])
                if isinstance(cls["cov"], (list, tuple))
                else (float(cls["cov"]),) * int(doc["dim"]),
                appears_at=int(cls.get("appears_at", 1)),
                drift=tuple(float(v) for v in cls.get("drift", ())),
                weight=float(cls.get("weight", 1.0)),
            )
            for cls in doc["classes"]
        )
        spec = GaussianStreamSpec(
            dim=int(doc["dim"]),
            n_chunks=int(doc["n_chunks"]),
            chunk_size=int(doc.get("chunk_size", 1000)),
            classes=classes,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"malformed generator spec: {exc}") from exc
    _validate_gaussian_spec(spec)
    return spec


def resolve_stream(spec: StreamSpec) -> LabeledStream:
    """Materialize the labeled sequence a StreamSpec points at."""
    if spec.source in _PRESETS:
        stream = generate_gaussian_stream(preset_spec(spec.source, spec.chunk_size), spec.seed)
    elif spec.source.endswith(".csv"):
        stream = ingest_csv(spec.source, spec.label_column)
    elif spec.source.endswith(".json"):
        with open(spec.source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        gspec = gaussian_spec_from_dict({**doc, "chunk_size": spec.chunk_size})
        stream = generate_gaussian_stream(gspec, spec.seed)
    else:
        raise SpecError(
            f"stream.source {spec.source!r} is neither a preset, a .csv file, nor a .json spec"
        )
    return order_samples(stream, spec.order, spec.seed)


def iter_chunks(stream: LabeledStream, chunk_size: int) -> Iterator[Tuple[Chunk, Dict[int, str]]]:
    """Yield (feature-only chunk, hidden truth) pairs in stream order."""
    t = 0
    for start in range(0, stream.n, chunk_size):
        stop = min(start + chunk_size, stream.n)
        t += 1
        chunk = Chunk(t=t, X=stream.X[start:stop].copy())
        truth = {i: stream.labels[start + i] for i in range(stop - start)}
        yield chunk, truth


# ---------------------------------------------------------------------------
# Metrics


def _confusion(truth: Sequence[str], predictions: Sequence[str]):
    if len(truth) != len(predictions):
        raise ValueError("truth and predictions must align")
    if not truth:
        raise ValueError("empty evaluation set")
    tp: Dict[str, int] = {}
    fn: Dict[str, int] = {}
    fp: Dict[str, int] = {}
    for y, p in zip(truth, predictions):
        if y == p:
            tp[y] = tp.get(y, 0) + 1
        else:
            fn[y] = fn.get(y, 0) + 1
            fp[p] = fp.get(p, 0) + 1
    return tp, fn, fp


def balanced_accuracy(truth: Sequence[str], predictions: Sequence[str]) -> float:
    """Mean per-class recall over the classes present in the truth."""
    tp, fn, _ = _confusion(truth, predictions)
    present = sorted(set(truth))
    recalls = [tp.get(c, 0) / (tp.get(c, 0) + fn.get(c, 0)) for c in present]
    return float(np.mean(recalls))


def macro_f(truth: Sequence[str], predictions: Sequence[str]) -> float:
    """Mean per-class F1 over the classes present in the truth.

    Classes that appear only in predictions are excluded from the mean (but
    still contribute false positives against present classes' precision).
    """
    tp, fn, fp = _confusion(truth, predictions)
    scores = []
    for c in sorted(set(truth)):
        t, n, p = tp.get(c, 0), fn.get(c, 0), fp.get(c, 0)
        precision = t / (t + p) if t + p else 0.0
        recall = t / (t + n) if t + n else 0.0
        scores.append(
            2 * precision * recall / (precision + recall) if precision + recall else 0.0
        )
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# Oracles


class SimulatedOracle:
    """Answers label queries from the hidden ground truth of one chunk."""

    def __init__(self, truth: Mapping[int, str]):
        self.truth = dict(truth)

    def label(self, samples: Sequence[Sample], context: QueryContext) -> LabeledBatch:
        return LabeledBatch(labels={s.id: self.truth[s.id] for s in samples})


class FailingOracle:
    """Test double: always refuses. Useful for fallback-path checks."""

    def label(self, samples: Sequence[Sample], context: QueryContext) -> LabeledBatch:
        raise RuntimeError("oracle unavailable")


# ---------------------------------------------------------------------------
# Experiment runner


def _json_line(record: Mapping) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def _pipeline_config_dict(config: PipelineConfig) -> Dict[str, object]:
    return {
        "density": {
            "lambda_share": config.density.lambda_share,
            "eta_overlap": config.density.eta_overlap,
        },
        "drift": {
            "rho_neighbor": config.drift.rho_neighbor,
            "epsilon_band": config.drift.epsilon_band,
            "theta_drop": config.drift.theta_drop,
            "min_boundary": config.drift.min_boundary,
        },
        "query": {"beta_budget": config.query.beta_budget},
        "k_neighbors": config.k_neighbors,
        "stale_after": config.stale_after,
        "on_oracle_failure": config.on_oracle_failure,
    }


def run_experiment(
    stream_spec: StreamSpec,
    config: PipelineConfig,
    oracle_mode: str = "simulated",
    oracle: Optional[Oracle] = None,
    out_dir: Optional[str] = None,
    snapshot_every: Optional[int] = None,
    resume_from: Optional[str] = None,
) -> ExperimentReport:
    """Replay a stream through the pipeline and report per-chunk metrics.

    Metrics cover non-queried samples only; aggregates are unweighted means
    over chunks. The result log is deterministic for a fixed spec/config/
    seed; wall-clock timings go to a separate sidecar. With ``resume_from``
    pointing at a summary snapshot, processing restarts after the snapshot's
    chunk index and reproduces exactly what a full run would have logged.
    """
    if oracle_mode not in ("simulated", "remote"):
        raise SpecError(f"oracle mode must be simulated|remote, got {oracle_mode!r}")
    if oracle_mode == "remote" and oracle is None:
        raise SpecError("remote oracle mode needs an oracle instance")

    stream = resolve_stream(stream_spec)
    summary = StreamSummary()
    start_after = 0
    if resume_from is not None:
        summary, start_after = load_snapshot(resume_from)

    header = {
        "record": "header",
        "stream": {
            "source": stream_spec.source,
            "chunk_size": stream_spec.chunk_size,
            "order": stream_spec.order,
            "seed": stream_spec.seed,
            "label_column": stream_spec.label_column,
        },
        "pipeline": _pipeline_config_dict(config),
        "oracle": oracle_mode,
        "resumed_after": start_after,
    }
    log_lines = [_json_line(header)]
    timing_lines: List[str] = []
    per_chunk: List[ChunkMetrics] = []
    chunk_results: List[ChunkResult] = []

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    def _abort(t: int, exc: Exception) -> ExperimentAborted:
        snap = None
        if out_dir is not None:
            snap = os.path.join(out_dir, "resume.json")
            save_snapshot(summary, snap, t=t - 1)
        return ExperimentAborted(
            f"chunk {t}: {exc} (resume snapshot: {snap or 'not written'})", snapshot_path=snap
        )

    for chunk, truth in iter_chunks(stream, stream_spec.chunk_size):
        if chunk.t <= start_after:
            continue
        validate_chunk(chunk, expected_dim=stream.dim)
        chunk_oracle = SimulatedOracle(truth) if oracle_mode == "simulated" else oracle
        try:
            summary, result = process_chunk(summary, chunk, chunk_oracle, config)
        except QueryAbortedError as exc:
            raise _abort(chunk.t, exc) from exc
        chunk_results.append(result)

        queried = set(result.queries.ids)
        eval_ids = [i for i in range(chunk.n) if i not in queried]
        if eval_ids:
            y_true = [truth[i] for i in eval_ids]
            y_pred = [result.predictions[i] for i in eval_ids]
            ba: Optional[float] = balanced_accuracy(y_true, y_pred)
            mf: Optional[float] = macro_f(y_true, y_pred)
        else:
            ba = mf = None
        metrics = ChunkMetrics(
            t=chunk.t,
            balanced_accuracy=ba,
            macro_f=mf,
            n_eval=len(eval_ids),
            queried=len(queried),
        )
        per_chunk.append(metrics)
        log_lines.append(
            _json_line(
                {
                    "record": "chunk",
                    "t": metrics.t,
                    "balanced_accuracy": metrics.balanced_accuracy,
                    "macro_f": metrics.macro_f,
                    "n_eval": metrics.n_eval,
                    "queried": metrics.queried,
                    "clusters": result.summary_stats[0],
                    "subclusters": result.summary_stats[1],
                    "novel": len(result.drift.novel),
                    "updated": len(result.drift.updated),
                    "rejected_novel": len(result.drift.rejected_novel),
                }
            )
        )
        timing_lines.append(_json_line({"record": "timing", "t": chunk.t, **result.timings}))
        if out_dir is not None and snapshot_every and chunk.t % snapshot_every == 0:
            save_snapshot(summary, os.path.join(out_dir, f"snapshot-t{chunk.t:04d}.json"), t=chunk.t)

    ba_values = [m.balanced_accuracy for m in per_chunk if m.balanced_accuracy is not None]
    mf_values = [m.macro_f for m in per_chunk if m.macro_f is not None]
    aggregate = {
        "record": "aggregate",
        "chunks": len(per_chunk),
        "balanced_accuracy": float(np.mean(ba_values)) if ba_values else None,
        "macro_f": float(np.mean(mf_values)) if mf_values else None,
        "queried_total": sum(m.queried for m in per_chunk),
    }
    log_lines.append(_json_line(aggregate))

    if out_dir is not None:
        with open(os.path.join(out_dir, "results.jsonl"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + "\n")
        with open(os.path.join(out_dir, "timings.jsonl"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(timing_lines) + "\n")
        save_snapshot(summary, os.path.join(out_dir, "summary.json"), t=per_chunk[-1].t if per_chunk else start_after)

    return ExperimentReport(
        per_chunk=per_chunk,
        aggregate=aggregate,
        log_lines=log_lines,
        timing_lines=timing_lines,
        summary=summary,
        chunk_results=chunk_results,
    )
