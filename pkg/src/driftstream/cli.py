"""Command-line front door: generate streams, run experiments, inspect state.

Every flag has a config-file equivalent; flags override file values, and the
effective configuration is echoed into the result log header so a run can be
reproduced from its output alone.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
from typing import Dict, Optional

from .active import QueryConfig
from .core import ChunkValidationError
from .density import DensityConfig
from .drift import DriftConfig
from .harness import (
    ExperimentAborted,
    IngestError,
    SpecError,
    StreamSpec,
    gaussian_spec_from_dict,
    generate_gaussian_stream,
    preset_names,
    preset_spec,
    run_experiment,
    write_csv,
)
from .pipeline import PipelineConfig, SnapshotError, load_snapshot

PORT_ENV = "DRIFTSTREAM_PORT"
DEFAULT_PORT = 8707


def _load_config_file(path: Optional[str]) -> Dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _pipeline_config(doc: Dict, beta_override: Optional[float], remote: bool) -> PipelineConfig:
    pipe = doc.get("pipeline", {})
    density = DensityConfig(**pipe.get("density", {}))
    drift = DriftConfig(**pipe.get("drift", {}))
    query_doc = dict(pipe.get("query", {}))
    if beta_override is not None:
        query_doc["beta_budget"] = beta_override
    query = QueryConfig(**query_doc)
    policy = pipe.get("on_oracle_failure", "fallback")
    if remote:
        # A remote run aborts (with a resume snapshot) instead of degrading:
        # a human stepping away should not silently change the results.
        policy = "raise"
    return PipelineConfig(
        density=density,
        drift=drift,
        query=query,
        k_neighbors=pipe.get("k_neighbors", 5),
        stale_after=pipe.get("stale_after"),
        on_oracle_failure=policy,
    )


def _stream_spec(doc: Dict, args: argparse.Namespace) -> StreamSpec:
    stream = dict(doc.get("stream", {}))
    if args.stream is not None:
        stream["source"] = args.stream
    if args.chunk_size is not None:
        stream["chunk_size"] = args.chunk_size
    if args.seed is not None:
        stream["seed"] = args.seed
    if args.order is not None:
        stream["order"] = args.order
    if args.label_column is not None:
        stream["label_column"] = args.label_column
    if "source" not in stream:
        raise SpecError("no stream source given (use --stream or the config file)")
    return StreamSpec(**stream)


def cmd_generate(args: argparse.Namespace) -> int:
    if (args.spec is None) == (args.preset is None):
        print("generate: give exactly one of a spec file or --preset", file=sys.stderr)
        return 2
    if args.preset is not None:
        gspec = preset_spec(args.preset, chunk_size=args.chunk_size or 1000)
    else:
        with open(args.spec, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if args.chunk_size is not None:
            doc["chunk_size"] = args.chunk_size
        gspec = gaussian_spec_from_dict(doc)
    stream = generate_gaussian_stream(gspec, args.seed or 0)
    write_csv(stream, args.out)
    print(f"wrote {stream.n} samples ({stream.dim} features) to {args.out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    doc = _load_config_file(args.config)
    oracle_flag = args.oracle or doc.get("oracle", "sim")
    oracle_mode = {"sim": "simulated", "simulated": "simulated", "remote": "remote"}.get(oracle_flag)
    if oracle_mode is None:
        print(f"run: unknown oracle mode {oracle_flag!r}", file=sys.stderr)
        return 2
    config = _pipeline_config(doc, args.beta, remote=oracle_mode == "remote")
    spec = _stream_spec(doc, args)
    out_dir = args.out or doc.get("out")
    snapshot_every = args.snapshot_every or doc.get("snapshot_every")
    resume_from = args.resume_from or doc.get("resume_from")

    oracle = None
    server = None
    if oracle_mode == "remote":
        import uvicorn

        from .service import RemoteOracle, SessionStore, build_app

        service_doc = doc.get("service", {})
        port = args.port or int(os.environ.get(PORT_ENV, service_doc.get("port", DEFAULT_PORT)))
        timeout = args.label_timeout or service_doc.get("timeout_seconds", 600.0)
        store = SessionStore()
        session_id = store.open_session({"stream": spec.source, "chunk_size": spec.chunk_size})
        oracle = RemoteOracle(store, session_id, timeout=float(timeout))
        server = uvicorn.Server(
            uvicorn.Config(build_app(store), host="127.0.0.1", port=port, log_level="warning")
        )
        threading.Thread(target=server.run, daemon=True).start()
        print(f"label service on http://127.0.0.1:{port} session {session_id}")

    try:
        report = run_experiment(
            spec,
            config,
            oracle_mode=oracle_mode,
            oracle=oracle,
            out_dir=out_dir,
            snapshot_every=snapshot_every,
            resume_from=resume_from,
        )
    except ExperimentAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 3
    except (SpecError, IngestError, ChunkValidationError, SnapshotError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    finally:
        if server is not None:
            server.should_exit = True

    if out_dir is None:
        for line in report.log_lines:
            print(line)
    else:
        print(f"wrote {len(report.per_chunk)} chunk records to {os.path.join(out_dir, 'results.jsonl')}")
    agg = report.aggregate
    print(
        f"chunks={agg['chunks']} balanced_accuracy={agg['balanced_accuracy']} "
        f"macro_f={agg['macro_f']} queried={agg['queried_total']}"
    )
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        summary, t = load_snapshot(args.snapshot)
    except SnapshotError as exc:
        print(f"inspect: {exc}", file=sys.stderr)
        return 2
    labels_by_cluster: Dict[int, list] = {}
    for (cid, label), _ in sorted(summary.subclusters.items()):
        labels_by_cluster.setdefault(cid, []).append(label)
    print(f"snapshot after chunk {t}: {len(summary.clusters)} clusters, "
          f"{len(summary.subclusters)} sub-clusters")
    print(f"{'id':>4}  {'density':>10}  {'radius':>10}  {'updated':>7}  labels")
    for cid in sorted(summary.clusters):
        rec = summary.clusters[cid]
        labels = ",".join(labels_by_cluster.get(cid, [])) or "-"
        print(f"{cid:>4}  {rec.density:>10.6f}  {rec.radius:>10.4f}  {rec.last_updated:>7}  {labels}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftstream")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="materialize a Gaussian stream spec as CSV")
    gen.add_argument("spec", nargs="?", help="generator spec (.json)")
    gen.add_argument("--preset", choices=preset_names(), help="bundled stream preset")
    gen.add_argument("--out", required=True, help="output CSV path")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--chunk-size", type=int, default=None)
    gen.set_defaults(func=cmd_generate)

    run = sub.add_parser("run", help="replay a stream through the pipeline")
    run.add_argument("--config", help="JSON config file (flags override it)")
    run.add_argument("--stream", help="csv path, generator spec, or preset name")
    run.add_argument("--oracle", choices=["sim", "remote"], default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--chunk-size", type=int, default=None)
    run.add_argument("--order", choices=["given", "abrupt", "gradual"], default=None)
    run.add_argument("--label-column", default=None)
    run.add_argument("--beta", type=float, default=None, help="label budget fraction")
    run.add_argument("--out", default=None, help="output directory for logs/snapshots")
    run.add_argument("--snapshot-every", type=int, default=None)
    run.add_argument("--resume-from", default=None, help="summary snapshot to resume from")
    run.add_argument("--port", type=int, default=None, help=f"service port (or ${PORT_ENV})")
    run.add_argument("--label-timeout", type=float, default=None, help="seconds to wait for labels")
    run.set_defaults(func=cmd_run)

    ins = sub.add_parser("inspect", help="print a summary snapshot as a table")
    ins.add_argument("snapshot")
    ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, IngestError, SnapshotError, ChunkValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
