"""HTTP service exposing live judging sessions to the assessor UI.

JSON in and out (schema_version on every body). Sessions persist as
append-only event logs under the data directory and are replayed on
startup; replay re-derives every batch selection, which also re-verifies
determinism. Issuance is idempotent: repeating GET next without judging
returns the same document, so the UI survives reconnects.

Endpoints:
    POST  /sessions                          create a session (pools built)
    GET   /sessions                          list sessions
    GET   /sessions/{sid}                    status snapshot
    GET   /sessions/{sid}/scale              the task's grade scale
    GET   /sessions/{sid}/topics/{t}/next    issue the next document
    GET   /sessions/{sid}/topics/{t}/history judged docs with revisions
    POST  /sessions/{sid}/judgments          record a judgment
    PATCH /sessions/{sid}/judgments          revise a judgment
    GET   /sessions/{sid}/qrels              canonical qrels export
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .judging import (
    GRADE_SCALES,
    CollectionBuilder,
    JudgingError,
    SessionConfig,
    build_pool,
    partial_qrels,
    select_candidate_topics,
)
from .metrics import RelevancePolicy
from .relevance_model import TfidfIndex
from .trec_io import Corpus, ParseError, parse_qrels, parse_run, parse_topics, qrels_bytes

SCHEMA_VERSION = 1


class SessionConfigBody(BaseModel):
    pool_depth: int = 10
    first_batch: int = 100
    min_relevant: int = 3
    max_ratio: float = 0.6
    per_topic_cap: Optional[int] = None
    increment_factor: float = 1.0


class CreateSessionBody(BaseModel):
    task: str
    corpus: str
    runs: list[str]
    topics: str
    sparse_qrels: str
    config: SessionConfigBody = Field(default_factory=SessionConfigBody)
    seed: int = 0
    global_budget: Optional[int] = None
    topic_ids: Optional[list[str]] = None


class JudgmentBody(BaseModel):
    topic_id: str
    doc_id: str
    grade: int


class LiveSession:
    """One judging session: coordinator, corpus view, lock, event log."""

    def __init__(self, session_id: str, body: CreateSessionBody, log_path: Path):
        self.session_id = session_id
        self.task = body.task
        self.created_from = body
        self.log_path = log_path
        self.lock = threading.Lock()
        if body.task not in ("document", "passage"):
            raise ValueError(f"task must be 'document' or 'passage', got {body.task!r}")
        self.policy = RelevancePolicy.for_task(body.task)
        self.config = SessionConfig(**body.config.model_dump())
        self.corpus = Corpus.load(body.corpus, body.task)
        runs = []
        for run_path in body.runs:
            run, _ = parse_run(run_path)
            runs.append(run)
        if not runs:
            raise ValueError("at least one run is required")
        sparse = parse_qrels(body.sparse_qrels)
        topics = {t.topic_id: t.text for t in parse_topics(body.topics)}
        candidates = select_candidate_topics(runs, sparse)
        if body.topic_ids is not None:
            unknown = [t for t in body.topic_ids if t not in topics]
            if unknown:
                raise ValueError(f"topic ids missing from the topic file: {unknown[:5]}")
            selected = list(body.topic_ids)
        else:
            selected = [t for t in candidates if t in topics]
        if not selected:
            raise ValueError("no topics selected for judging")
        pools = {t: build_pool(runs, self.config.pool_depth, sparse, t) for t in selected}
        missing = sorted({d for pool in pools.values() for d in pool if d not in self.corpus})
        if missing:
            raise ValueError(f"pooled docs missing from the corpus: {missing[:5]}")
        features = TfidfIndex({doc_id: self.corpus.text_of(doc_id) for doc_id in self.corpus})
        self.builder = CollectionBuilder(
            queries={t: topics[t] for t in selected},
            pools=pools,
            candidates=self.corpus.ids(),
            features=features,
            policy=self.policy,
            config=self.config,
            seed=body.seed,
            global_budget=body.global_budget,
        )

    def log_event(self, event: dict) -> None:
        with open(self.log_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(event, sort_keys=True) + "\n")

    def replay(self, events: list[dict]) -> None:
        for event in events:
            if event["type"] == "judge":
                issued = self.builder.next_document(event["topic_id"])
                if issued != event["doc_id"]:
                    raise ValueError(
                        f"replay mismatch for topic {event['topic_id']}: "
                        f"log has {event['doc_id']!r}, session issued {issued!r}")
                self.builder.record_judgment(event["topic_id"], event["doc_id"], event["grade"])
            elif event["type"] == "revise":
                self.builder.record_judgment(event["topic_id"], event["doc_id"], event["grade"])

    def status(self) -> dict:
        sessions = self.builder.sessions
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": self.session_id,
            "task": self.task,
            "config": self.created_from.config.model_dump(),
            "seed": self.created_from.seed,
            "total_judged": self.builder.total_judged,
            "budget_remaining": self.builder.budget_remaining,
            "topics": [sessions[t].snapshot() for t in sessions],
        }

    def render_document(self, doc_id: str) -> dict:
        record = self.corpus[doc_id]
        if self.task == "document":
            return {"doc_id": doc_id, "url": record.url, "title": record.title,
                    "body": record.body}
        return {"doc_id": doc_id, "text": record.text}


class SessionManager:
    def __init__(self, data_dir: Path, token: str | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.token = token
        self.sessions: dict[str, LiveSession] = {}
        self._restore()

    def _restore(self) -> None:
        for log_path in sorted(self.data_dir.glob("*.jsonl")):
            with open(log_path, "r", encoding="utf-8") as f:
                lines = [json.loads(line) for line in f if line.strip()]
            if not lines or lines[0].get("type") != "create":
                continue
            body = CreateSessionBody(**lines[0]["body"])
            session = LiveSession(log_path.stem, body, log_path)
            session.replay(lines[1:])
            self.sessions[session.session_id] = session

    def create(self, body: CreateSessionBody) -> LiveSession:
        session_id = uuid.uuid4().hex[:12]
        log_path = self.data_dir / f"{session_id}.jsonl"
        session = LiveSession(session_id, body, log_path)
        session.log_event({"type": "create", "body": body.model_dump()})
        self.sessions[session_id] = session
        return session

    def get(self, session_id: str) -> LiveSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return session


def create_app(data_dir, token: str | None = None) -> FastAPI:
    manager = SessionManager(Path(data_dir), token=token)
    app = FastAPI(title="poolkit assessment service")
    app.state.manager = manager
    # the assessor console may be served from a different origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"], expose_headers=["*"])

    def auth(request: Request) -> None:
        if manager.token and request.headers.get("authorization") != f"Bearer {manager.token}":
            raise HTTPException(status_code=401, detail="missing or bad token")

    @app.post("/sessions", dependencies=[Depends(auth)])
    def create_session(body: CreateSessionBody):
        try:
            session = manager.create(body)
        except (ParseError, ValueError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        status = session.status()
        status["pool_sizes"] = {t: s.pool_size for t, s in session.builder.sessions.items()}
        return status

    @app.get("/sessions", dependencies=[Depends(auth)])
    def list_sessions():
        return {"schema_version": SCHEMA_VERSION,
                "sessions": [s.status() for s in manager.sessions.values()]}

    @app.get("/sessions/{sid}", dependencies=[Depends(auth)])
    def session_status(sid: str):
        return manager.get(sid).status()

    @app.get("/sessions/{sid}/scale", dependencies=[Depends(auth)])
    def grade_scale(sid: str):
        session = manager.get(sid)
        return {"schema_version": SCHEMA_VERSION, "task": session.task,
                "grades": GRADE_SCALES[session.task]}

    @app.get("/sessions/{sid}/topics/{topic_id}/next", dependencies=[Depends(auth)])
    def next_document(sid: str, topic_id: str):
        session = manager.get(sid)
        with session.lock:
            builder = session.builder
            if topic_id not in builder.sessions:
                raise HTTPException(status_code=404, detail=f"no topic {topic_id!r}")
            topic = builder.sessions[topic_id]
            try:
                doc_id = builder.next_document(topic_id)
            except JudgingError:
                raise HTTPException(
                    status_code=409,
                    detail={"status": topic.phase.value, "topic": topic.snapshot()},
                ) from None
            pos, size = topic.position_in_phase()
            return {
                "schema_version": SCHEMA_VERSION,
                "topic_id": topic_id,
                "doc_id": doc_id,
                "phase": topic.phase.value,
                "position_in_phase": {"position": pos, "batch_size": size},
                "document": session.render_document(doc_id),
            }

    def _apply_judgment(session: LiveSession, body: JudgmentBody, revision: bool):
        builder = session.builder
        if body.topic_id not in builder.sessions:
            raise HTTPException(status_code=404, detail=f"no topic {body.topic_id!r}")
        if body.grade not in (0, 1, 2, 3):
            raise HTTPException(status_code=400, detail=f"grade must be 0..3, got {body.grade}")
        topic = builder.sessions[body.topic_id]
        already = topic.was_judged(body.doc_id)
        if revision and not already:
            raise HTTPException(status_code=409,
                                detail=f"doc {body.doc_id!r} has no judgment to revise")
        if not revision and already:
            raise HTTPException(status_code=409,
                                detail=f"doc {body.doc_id!r} already judged; PATCH to revise")
        try:
            snapshot = builder.record_judgment(body.topic_id, body.doc_id, body.grade)
        except JudgingError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        session.log_event({"type": "revise" if revision else "judge",
                           "topic_id": body.topic_id, "doc_id": body.doc_id,
                           "grade": body.grade})
        return {"schema_version": SCHEMA_VERSION, "topic": snapshot}

    @app.post("/sessions/{sid}/judgments", dependencies=[Depends(auth)])
    def post_judgment(sid: str, body: JudgmentBody):
        session = manager.get(sid)
        with session.lock:
            return _apply_judgment(session, body, revision=False)

    @app.patch("/sessions/{sid}/judgments", dependencies=[Depends(auth)])
    def revise_judgment(sid: str, body: JudgmentBody):
        session = manager.get(sid)
        with session.lock:
            return _apply_judgment(session, body, revision=True)

    @app.get("/sessions/{sid}/topics/{topic_id}/history", dependencies=[Depends(auth)])
    def judgment_history(sid: str, topic_id: str):
        session = manager.get(sid)
        with session.lock:
            builder = session.builder
            if topic_id not in builder.sessions:
                raise HTTPException(status_code=404, detail=f"no topic {topic_id!r}")
            topic = builder.sessions[topic_id]
            items = []
            for doc_id in topic.judged:
                history = builder.store.history(topic_id, doc_id)
                items.append({
                    "doc_id": doc_id,
                    "grade": builder.store.latest(topic_id, doc_id),
                    "revisions": [{"grade": g, "at": ts} for g, ts in history],
                })
            return {"schema_version": SCHEMA_VERSION, "topic_id": topic_id,
                    "judgments": items}

    @app.get("/sessions/{sid}/qrels", dependencies=[Depends(auth)])
    def export_qrels(sid: str):
        session = manager.get(sid)
        with session.lock:
            builder = session.builder
            qrels, summary = partial_qrels(builder.store, builder.sessions.values(),
                                           builder.config)
            return Response(
                content=qrels_bytes(qrels),
                media_type="text/plain; charset=utf-8",
                headers={
                    "X-Poolkit-Partial": "true" if summary["partial"] else "false",
                    "X-Poolkit-Total-Judged": str(summary["total_judged"]),
                    "X-Poolkit-Qrels-Size": str(summary["qrels_size"]),
                    "X-Poolkit-Topics-Included": str(summary["topics_included"]),
                },
            )

    return app
