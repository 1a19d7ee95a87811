"""Label-query service: the bridge between the pipeline and a human annotator.

The pipeline and the HTTP listener are two threads of one process sharing a
:class:`SessionStore`. Posting a query batch moves a session from idle to
pending and blocks the pipeline until every pending id is labeled (partial
submissions accumulate) or the timeout expires. Timeouts abort the run; the
harness writes a resume snapshot so the same batch is re-issued on resume.

Wire format (JSON over HTTP):
    POST /sessions                  -> {"session_id": ...}
    GET  /sessions/{id}/queries     -> {"pending": PendingQuery | null}
    POST /sessions/{id}/labels      {"labels": {"<sample id>": "<class>"}}
    GET  /sessions/{id}/status      -> {"state": "idle"|"pending", ...}
Errors are {"code", "message", "detail"}.

No postponed annotations here: the HTTP layer resolves endpoint type hints
at runtime, and the request models live inside build_app's scope.
"""

import threading
import uuid
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .active import QueryContext
from .core import LabeledBatch, QueryAbortedError, QueryBatch, Sample

__all__ = [
    "PendingItem",
    "PendingQuery",
    "SessionError",
    "SessionStore",
    "RemoteOracle",
    "project_2d",
    "build_app",
]


@dataclass(frozen=True)
class PendingItem:
    sample_id: int
    features: List[float]
    projection: Tuple[float, float]
    kind: str  # representative | informative
    cluster: int


@dataclass
class PendingQuery:
    """One chunk's query batch in wire form."""

    session_id: str
    t: int
    items: List[PendingItem]
    known_classes: List[str]

    def to_wire(self) -> Dict:
        return {
            "session_id": self.session_id,
            "t": self.t,
            "items": [
                {
                    "sample_id": item.sample_id,
                    "features": item.features,
                    "projection": list(item.projection),
                    "kind": item.kind,
                    "cluster": item.cluster,
                }
                for item in self.items
            ],
            "known_classes": self.known_classes,
        }


class SessionError(RuntimeError):
    def __init__(self, code: str, message: str, detail: str = ""):
        super().__init__(message)
        self.code = code
        self.detail = detail


@dataclass
class _Session:
    session_id: str
    manifest: Dict
    pending: Optional[PendingQuery] = None
    collected: Dict[int, str] = field(default_factory=dict)
    known_classes: set = field(default_factory=set)
    aborted: bool = False


class SessionStore:
    """Thread-safe session state machine: idle -> pending -> idle."""

    def __init__(self):
        self._lock = threading.Condition()
        self._sessions: Dict[str, _Session] = {}

    def open_session(self, manifest: Optional[Mapping] = None) -> str:
        with self._lock:
            session_id = uuid.uuid4().hex
            self._sessions[session_id] = _Session(session_id=session_id, manifest=dict(manifest or {}))
            return session_id

    def list_sessions(self) -> List[str]:
        with self._lock:
            return sorted(self._sessions)

    def _get(self, session_id: str) -> _Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise SessionError("unknown-session", f"no session {session_id!r}")
        return session

    def post_queries(self, session_id: str, pending: PendingQuery) -> None:
        with self._lock:
            session = self._get(session_id)
            if session.pending is not None:
                raise SessionError(
                    "conflict", "a query batch is already pending", detail=f"t={session.pending.t}"
                )
            if not pending.items:
                raise SessionError("empty-batch", "a pending batch must contain items")
            session.pending = pending
            session.collected = {}
            session.aborted = False
            self._lock.notify_all()

    def get_queries(self, session_id: str) -> Optional[PendingQuery]:
        with self._lock:
            return self._get(session_id).pending

    def status(self, session_id: str) -> Dict:
        with self._lock:
            session = self._get(session_id)
            return {
                "state": "pending" if session.pending is not None else "idle",
                "t": session.pending.t if session.pending is not None else None,
                "pending_count": len(session.pending.items) if session.pending is not None else 0,
                "labeled_count": len(session.collected),
                "known_classes": sorted(session.known_classes),
            }

    def post_labels(self, session_id: str, labels: Mapping[int, str]) -> Dict:
        """Accumulate a (possibly partial) label submission."""
        with self._lock:
            session = self._get(session_id)
            if session.pending is None:
                raise SessionError("no-pending", "no query batch is pending")
            pending_ids = {item.sample_id for item in session.pending.items}
            unknown = sorted(set(labels) - pending_ids)
            if unknown:
                raise SessionError(
                    "unknown-id",
                    "submission contains ids that are not pending",
                    detail=f"ids={unknown}",
                )
            empty = [i for i, lab in labels.items() if not str(lab)]
            if empty:
                raise SessionError("empty-label", "class identifiers must be non-empty")
            session.collected.update({int(i): str(lab) for i, lab in labels.items()})
            remaining = len(pending_ids) - len(session.collected)
            if remaining == 0:
                self._lock.notify_all()
            return {"accepted": len(labels), "remaining": remaining, "complete": remaining == 0}

    def abort_pending(self, session_id: str) -> None:
        with self._lock:
            session = self._get(session_id)
            session.aborted = True
            self._lock.notify_all()

    def wait_for_labels(self, session_id: str, timeout: float) -> Dict[int, str]:
        """Block until the pending batch is fully labeled; idle on return.

        Raises SessionError("timeout") when the deadline passes; the pending
        batch is cleared so the session returns to idle either way.
        """
        deadline = threading.TIMEOUT_MAX if timeout is None else timeout
        with self._lock:
            session = self._get(session_id)
            if session.pending is None:
                raise SessionError("no-pending", "nothing to wait for")
            want = {item.sample_id for item in session.pending.items}

            def ready() -> bool:
                return session.aborted or set(session.collected) >= want

            finished = self._lock.wait_for(ready, timeout=deadline)
            pending_t = session.pending.t
            if not finished or session.aborted:
                session.pending = None
                session.collected = {}
                raise SessionError(
                    "timeout" if not finished else "aborted",
                    f"labels for chunk {pending_t} did not arrive",
                )
            labels = dict(session.collected)
            session.known_classes.update(labels.values())
            session.pending = None
            session.collected = {}
            return labels


def project_2d(chunk_X: np.ndarray, queried_ids: Sequence[int]) -> Dict[int, Tuple[float, float]]:
    """2-D display coordinates for queried samples.

    Up to two dimensions pass through unchanged (padded with zeros); higher
    dimensions project onto the chunk's top two principal directions with a
    deterministic sign convention (first nonzero loading positive).
    """
    X = np.asarray(chunk_X, dtype=float)
    m = X.shape[1]
    if m <= 2:
        coords = np.zeros((X.shape[0], 2))
        coords[:, :m] = X
    else:
        centered = X - X.mean(axis=0)
        cov = centered.T @ centered / max(X.shape[0] - 1, 1)
        eigenvalues, eigenvectors = np.linalg.eigh(cov)
        components = eigenvectors[:, np.argsort(eigenvalues)[::-1][:2]]
        for j in range(components.shape[1]):
            nonzero = np.flatnonzero(np.abs(components[:, j]) > 1e-12)
            if len(nonzero) and components[nonzero[0], j] < 0:
                components[:, j] = -components[:, j]
        coords = centered @ components
    return {int(i): (float(coords[i, 0]), float(coords[i, 1])) for i in queried_ids}


class RemoteOracle:
    """Oracle backed by a session store: posts the batch, waits for a human."""

    def __init__(self, store: SessionStore, session_id: str, timeout: float = 600.0):
        self.store = store
        self.session_id = session_id
        self.timeout = timeout

    def label(self, samples: Sequence[Sample], context: QueryContext) -> LabeledBatch:
        projections = project_2d(context.chunk.X, [s.id for s in samples])
        status = self.store.status(self.session_id)
        known = sorted(set(context.known_classes) | set(status["known_classes"]))
        pending = PendingQuery(
            session_id=self.session_id,
            t=context.chunk.t,
            items=[
                PendingItem(
                    sample_id=s.id,
                    features=[float(v) for v in s.features],
                    projection=projections[s.id],
                    kind=context.kinds.get(s.id, "informative"),
                    cluster=context.cluster_tags.get(s.id, -1),
                )
                for s in samples
            ],
            known_classes=known,
        )
        batch = QueryBatch(
            representative=[s.id for s in samples if context.kinds.get(s.id) == "representative"],
            informative=[s.id for s in samples if context.kinds.get(s.id) != "representative"],
            budget=len(samples),
        )
        try:
            self.store.post_queries(self.session_id, pending)
            labels = self.store.wait_for_labels(self.session_id, self.timeout)
        except SessionError as exc:
            raise QueryAbortedError(f"label query {exc.code}: {exc}", batch) from exc
        return LabeledBatch(labels=labels)


def build_app(store: SessionStore):
    """FastAPI application exposing the session store over HTTP."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    app = FastAPI(title="driftstream label service")

    class LabelSubmission(BaseModel):
        labels: Dict[str, str]

    class SessionRequest(BaseModel):
        manifest: Dict = {}

    status_codes = {
        "unknown-session": 404,
        "conflict": 409,
        "no-pending": 409,
        "unknown-id": 422,
        "empty-label": 422,
        "empty-batch": 422,
        "timeout": 504,
        "aborted": 409,
    }

    @app.exception_handler(SessionError)
    async def _session_error(request: Request, exc: SessionError):
        return JSONResponse(
            status_code=status_codes.get(exc.code, 400),
            content={"code": exc.code, "message": str(exc), "detail": exc.detail},
        )

    @app.post("/sessions", status_code=201)
    def open_session(body: SessionRequest | None = None):
        session_id = store.open_session(body.manifest if body else {})
        return {"session_id": session_id}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": store.list_sessions()}

    @app.get("/sessions/{session_id}/queries")
    def get_queries(session_id: str):
        pending = store.get_queries(session_id)
        return {"pending": pending.to_wire() if pending is not None else None}

    @app.post("/sessions/{session_id}/labels")
    def post_labels(session_id: str, body: LabelSubmission):
        try:
            labels = {int(key): value for key, value in body.labels.items()}
        except ValueError:
            raise SessionError("unknown-id", "sample ids must be integers")
        return store.post_labels(session_id, labels)

    @app.get("/sessions/{session_id}/status")
    def get_status(session_id: str):
        return store.status(session_id)

    return app
