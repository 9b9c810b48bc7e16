"""The collection-building state machine.

A topic's life: judge its pool (top-10 of every run plus the sparse-judged
docs), then a first batch of 100 active-learning selections, then zero or
more extension batches whose sizes the stopping rules dictate, until the
topic Finishes or is Discarded. Judgments are revisable at any time; the
relevant counter R always reflects the latest grades.

Stopping rules, with P = pool size, J = judged, R/R* = currently relevant,
F = the first-batch size (100 by default):

- after the pool + first batch (J = P + F): Finished if 2R < P, Discarded
  if R/J exceeds the ratio limit, else Continue(G) with G = (2R + F) - J;
- after each extension batch: Finished if 2R* + F < J, Discarded if R*/J
  exceeds the ratio limit, else Continue(round(increment_factor * R*));
- a per-topic cap or exhausted global budget overrides to Finished.

A topic enters the evaluation set iff it found at least ``min_relevant``
relevant docs and its relevant/judged ratio stayed below ``max_ratio``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from statistics import median
from typing import Iterable, Mapping, Protocol, Sequence

from .metrics import RelevancePolicy, reciprocal_rank
from .relevance_model import LogisticScorer, RelevanceModel, TfidfIndex, select_next, stable_seed
from .trec_io import QrelsSet, RunFile, topic_sort_key

GRADE_SCALES = {
    "document": [
        {"grade": 3, "label": "Perfectly relevant",
         "description": "Document is dedicated to the query, it is worthy of being a top result in a search engine."},
        {"grade": 2, "label": "Highly relevant",
         "description": "The content of this document provides substantial information on the query."},
        {"grade": 1, "label": "Relevant",
         "description": "Document provides some information relevant to the query, which may be minimal."},
        {"grade": 0, "label": "Irrelevant",
         "description": "Document does not provide any useful information about the query."},
    ],
    "passage": [
        {"grade": 3, "label": "Perfectly relevant",
         "description": "The passage is dedicated to the query and contains the exact answer."},
        {"grade": 2, "label": "Highly relevant",
         "description": "The passage has some answer for the query, but the answer may be a bit unclear, or hidden amongst extraneous information."},
        {"grade": 1, "label": "Related",
         "description": "The passage seems related to the query but does not answer it."},
        {"grade": 0, "label": "Irrelevant",
         "description": "The passage has nothing to do with the query."},
    ],
}


class JudgingError(Exception):
    """A judging-protocol violation (unissued doc, mid-batch check, ...)."""


class Phase(str, Enum):
    POOL_JUDGING = "PoolJudging"
    FIRST_HICAL = "FirstHical100"
    EXTENSION = "Extension"
    FINISHED = "Finished"
    DISCARDED = "Discarded"


TERMINAL_PHASES = (Phase.FINISHED, Phase.DISCARDED)


@dataclass(frozen=True)
class StoppingDecision:
    status: str  # "continue" | "finished" | "discarded"
    next_batch: int = 0
    reason: str = ""

    @classmethod
    def cont(cls, n: int) -> "StoppingDecision":
        return cls("continue", next_batch=n)

    @classmethod
    def finished(cls, reason: str) -> "StoppingDecision":
        return cls("finished", reason=reason)

    @classmethod
    def discarded(cls, reason: str) -> "StoppingDecision":
        return cls("discarded", reason=reason)


@dataclass(frozen=True)
class SessionConfig:
    pool_depth: int = 10
    first_batch: int = 100
    min_relevant: int = 3
    max_ratio: float = 0.6
    per_topic_cap: int | None = None
    increment_factor: float = 1.0

    def __post_init__(self):
        if self.pool_depth < 1 or self.first_batch < 1 or self.min_relevant < 1:
            raise ValueError("pool_depth, first_batch and min_relevant must be positive")
        if not 0 < self.max_ratio < 1:
            raise ValueError(f"max_ratio must be in (0,1), got {self.max_ratio}")
        if self.increment_factor <= 0:
            raise ValueError("increment_factor must be positive")
        if self.per_topic_cap is not None and self.per_topic_cap < 1:
            raise ValueError("per_topic_cap must be positive")

    def ratio_exceeds(self, relevant: int, judged: int) -> bool:
        return Fraction(relevant, judged) > Fraction(str(self.max_ratio))

    def ratio_below(self, relevant: int, judged: int) -> bool:
        return Fraction(relevant, judged) < Fraction(str(self.max_ratio))


class JudgmentStore:
    """Latest grade per (topic, doc) with an append-only revision history."""

    def __init__(self):
        self._latest: dict[tuple[str, str], int] = {}
        self._history: dict[tuple[str, str], list[tuple[int, float]]] = {}

    def record(self, topic_id: str, doc_id: str, grade: int) -> None:
        key = (topic_id, doc_id)
        self._latest[key] = grade
        self._history.setdefault(key, []).append((grade, time.time()))

    def latest(self, topic_id: str, doc_id: str) -> int | None:
        return self._latest.get((topic_id, doc_id))

    def history(self, topic_id: str, doc_id: str) -> list[tuple[int, float]]:
        return list(self._history.get((topic_id, doc_id), []))

    def __len__(self) -> int:
        return len(self._latest)


class TopicSession:
    """Live judging state for one topic.

    The pool is issued first, in sorted doc-id order; later batches are
    loaded by the coordinator. Exactly one document is outstanding at a
    time, and next_doc() re-returns it until a judgment arrives.
    """

    def __init__(self, topic_id: str, pool: Iterable[str]):
        self.topic_id = topic_id
        self.pool: list[str] = sorted(set(pool))
        self.phase = Phase.POOL_JUDGING
        self.judged: list[str] = []
        self.relevant = 0
        self.extensions_done = 0
        self.terminal_reason: str | None = None
        self._judged_set: set[str] = set()
        self._issued: set[str] = set(self.pool)
        self._queue: list[str] = list(self.pool)
        self._current: str | None = None
        self._batch_size = len(self.pool)

    @classmethod
    def from_completed(cls, topic_id: str, judged: Sequence[str],
                       pool: Iterable[str] = (), relevant: int = 0,
                       phase: Phase = Phase.FINISHED) -> "TopicSession":
        """A session restored directly into a terminal state (replays, fixtures)."""
        session = cls(topic_id, pool)
        session.judged = list(judged)
        session._judged_set = set(judged)
        session._issued = set(session.pool) | set(judged)
        session._queue = []
        session.relevant = relevant
        session.phase = phase
        session.terminal_reason = "restored"
        return session

    @property
    def pool_size(self) -> int:
        return len(self.pool)

    @property
    def judged_count(self) -> int:
        return len(self.judged)

    @property
    def is_terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES

    @property
    def batch_complete(self) -> bool:
        return not self._queue and self._current is None

    @property
    def ratio(self) -> float:
        return self.relevant / self.judged_count if self.judged_count else 0.0

    def was_judged(self, doc_id: str) -> bool:
        return doc_id in self._judged_set

    def was_issued(self, doc_id: str) -> bool:
        return doc_id in self._issued

    def position_in_phase(self) -> tuple[int, int]:
        """(1-based position of the outstanding doc, batch size)."""
        total = len(self._queue) + (1 if self._current else 0)
        done_in_batch = self._batch_size - total
        return done_in_batch + 1, self._batch_size

    def next_doc(self) -> str | None:
        """The outstanding doc, or the next queued one; None at a boundary."""
        if self.is_terminal:
            raise JudgingError(f"topic {self.topic_id} is {self.phase.value}")
        if self._current is not None:
            return self._current
        if not self._queue:
            return None
        self._current = self._queue.pop(0)
        return self._current

    def load_batch(self, docs: Sequence[str], phase: Phase) -> None:
        if self.is_terminal:
            raise JudgingError(f"topic {self.topic_id} is {self.phase.value}")
        if not self.batch_complete:
            raise JudgingError("cannot load a batch mid-batch")
        clash = [d for d in docs if d in self._issued]
        if clash:
            raise JudgingError(f"docs already issued: {clash[:3]}")
        if phase == Phase.EXTENSION:
            self.extensions_done += 1
        self.phase = phase
        self._queue = list(docs)
        self._issued.update(docs)
        self._batch_size = len(docs)

    def finish(self, status: Phase, reason: str) -> None:
        if status not in TERMINAL_PHASES:
            raise ValueError("finish takes a terminal phase")
        self.phase = status
        self.terminal_reason = reason
        self._queue = []
        self._current = None

    def _apply_new_judgment(self, doc_id: str) -> None:
        self.judged.append(doc_id)
        self._judged_set.add(doc_id)
        if doc_id == self._current:
            self._current = None

    def snapshot(self) -> dict:
        pos, size = (0, 0) if self.is_terminal else self.position_in_phase()
        return {
            "topic_id": self.topic_id,
            "phase": self.phase.value,
            "pool_size": self.pool_size,
            "relevant": self.relevant,
            "judged": self.judged_count,
            "ratio": round(self.ratio, 4),
            "batch_position": pos,
            "batch_size": size,
            "terminal_reason": self.terminal_reason,
        }


def record_judgment(store: JudgmentStore, session: TopicSession, doc_id: str,
                    grade: int, policy: RelevancePolicy) -> TopicSession:
    """Record a new judgment or a revision; keeps R consistent either way."""
    if grade not in (0, 1, 2, 3):
        raise ValueError(f"grade must be in 0..3, got {grade!r}")
    topic = session.topic_id
    if session.was_judged(doc_id):
        old = store.latest(topic, doc_id)
        store.record(topic, doc_id, grade)
        session.relevant += int(policy.is_relevant(grade)) - int(policy.is_relevant(old))
    elif doc_id == session._current:
        store.record(topic, doc_id, grade)
        session._apply_new_judgment(doc_id)
        session.relevant += int(policy.is_relevant(grade))
    else:
        raise JudgingError(f"doc {doc_id!r} was never issued for topic {topic}")
    return session


def check_stopping(session: TopicSession, config: SessionConfig,
                   budget_remaining: int | None = None) -> StoppingDecision:
    """The stopping decision at a completed first-batch or extension boundary."""
    if session.is_terminal:
        raise JudgingError(f"topic {session.topic_id} already {session.phase.value}")
    if not session.batch_complete:
        raise JudgingError("stopping check called mid-batch")
    if session.phase == Phase.POOL_JUDGING:
        raise JudgingError("no stopping rule at pool completion; load the first batch")
    r, j, p = session.relevant, session.judged_count, session.pool_size
    if budget_remaining is not None and budget_remaining <= 0:
        return StoppingDecision.finished("global budget exhausted")
    if config.per_topic_cap is not None and j >= config.per_topic_cap:
        return StoppingDecision.finished(f"per-topic cap {config.per_topic_cap} reached")
    if session.phase == Phase.FIRST_HICAL:
        if 2 * r < p:
            return StoppingDecision.finished(f"2R={2*r} < P={p}")
        if config.ratio_exceeds(r, j):
            return StoppingDecision.discarded(f"R/J={r}/{j} exceeds {config.max_ratio}")
        g = max(0, (2 * r + config.first_batch) - j)
        return _clamped_continue(g, j, config, budget_remaining)
    # extension boundary
    if 2 * r + config.first_batch < j:
        return StoppingDecision.finished(f"2R*+{config.first_batch}={2*r+config.first_batch} < J={j}")
    if config.ratio_exceeds(r, j):
        return StoppingDecision.discarded(f"R*/J={r}/{j} exceeds {config.max_ratio}")
    step = max(1, math.floor(config.increment_factor * r + 0.5))
    return _clamped_continue(step, j, config, budget_remaining)


def _clamped_continue(batch: int, judged: int, config: SessionConfig,
                      budget_remaining: int | None) -> StoppingDecision:
    natural = batch
    if config.per_topic_cap is not None:
        batch = min(batch, config.per_topic_cap - judged)
    if budget_remaining is not None:
        batch = min(batch, budget_remaining)
    if batch <= 0 and natural > 0:
        return StoppingDecision.finished("judgment cap/budget reached")
    return StoppingDecision.cont(max(batch, 0))


def eligibility(relevant: int, judged: int, config: SessionConfig) -> bool:
    """In the evaluation set iff >= min_relevant found and R/J stayed below max_ratio."""
    if judged <= 0:
        raise ValueError("judged must be positive")
    return relevant >= config.min_relevant and config.ratio_below(relevant, judged)


def select_candidate_topics(runs: Sequence[RunFile], sparse_qrels: QrelsSet) -> list[str]:
    """Topics whose median per-run RR against the sparse labels is in (0, 0.5]."""
    if not runs:
        raise ValueError("need at least one run")
    policy = RelevancePolicy(task="document", binary_threshold=1)
    picked = []
    for topic_id in sorted(sparse_qrels.topics(), key=topic_sort_key):
        sparse_topic = sparse_qrels.topic(topic_id)
        rrs = [reciprocal_rank(run.docs(topic_id), sparse_topic, policy) for run in runs]
        m = median(rrs)
        if 0 < m <= 0.5:
            picked.append(topic_id)
    return picked


def build_pool(runs: Sequence[RunFile], depth: int, sparse_qrels: QrelsSet,
               topic_id: str) -> set[str]:
    """Union of every run's top-depth docs plus all sparse-judged docs."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    pool: set[str] = set()
    for run in runs:
        pool.update(run.docs(topic_id, depth))
    pool.update(sparse_qrels.topic(topic_id).keys())
    return pool


def finalize_qrels(store: JudgmentStore, sessions: Iterable[TopicSession],
                   config: SessionConfig) -> tuple[QrelsSet, dict]:
    """Qrels over the eligible topics plus a judging summary.

    Every session must be terminal. The summary's total counts judgments on
    all topics; the qrels holds only the eligible ones, in judged order.
    """
    sessions = list(sessions)
    for session in sessions:
        if not session.is_terminal:
            raise JudgingError(f"topic {session.topic_id} is still {session.phase.value}")
    return _collect_qrels(store, sessions, config)


def partial_qrels(store: JudgmentStore, sessions: Iterable[TopicSession],
                  config: SessionConfig) -> tuple[QrelsSet, dict]:
    """Like finalize_qrels but tolerates live sessions (flagged in the summary)."""
    sessions = list(sessions)
    qrels, summary = _collect_qrels(store, sessions, config)
    summary["partial"] = any(not s.is_terminal for s in sessions)
    return qrels, summary


def _collect_qrels(store: JudgmentStore, sessions: list[TopicSession],
                   config: SessionConfig) -> tuple[QrelsSet, dict]:
    qrels = QrelsSet()
    total_judged = 0
    included: list[str] = []
    excluded: list[str] = []
    per_topic: dict[str, dict] = {}
    for session in sorted(sessions, key=lambda s: topic_sort_key(s.topic_id)):
        j = session.judged_count
        total_judged += j
        ok = j > 0 and session.phase is not Phase.DISCARDED and eligibility(session.relevant, j, config)
        per_topic[session.topic_id] = {
            "relevant": session.relevant, "judged": j,
            "ratio": round(session.ratio, 4), "included": ok,
            "phase": session.phase.value,
        }
        if ok:
            included.append(session.topic_id)
            for doc_id in session.judged:
                qrels.add(session.topic_id, doc_id, store.latest(session.topic_id, doc_id))
        else:
            excluded.append(session.topic_id)
    summary = {
        "topics_started": len(per_topic),
        "topics_included": len(included),
        "included": included,
        "excluded": excluded,
        "total_judged": total_judged,
        "qrels_size": len(qrels),
        "per_topic": per_topic,
    }
    return qrels, summary


class BatchPlanner(Protocol):
    def plan(self, session: TopicSession, config: SessionConfig,
             budget_remaining: int | None) -> StoppingDecision: ...


class HeuristicPlanner:
    """The live process: first batch after the pool, then rule-driven extensions."""

    def plan(self, session, config, budget_remaining=None):
        if session.phase == Phase.POOL_JUDGING:
            return _clamped_continue(config.first_batch, session.judged_count,
                                     config, budget_remaining)
        return check_stopping(session, config, budget_remaining)


class TargetSizePlanner:
    """Judge to an exact per-topic count (the pool still goes first, whole)."""

    def __init__(self, targets: Mapping[str, int]):
        self.targets = dict(targets)

    def plan(self, session, config, budget_remaining=None):
        target = self.targets.get(session.topic_id, 0)
        remaining = target - session.judged_count
        if remaining <= 0:
            return StoppingDecision.finished(f"target {target} reached")
        if budget_remaining is not None:
            remaining = min(remaining, budget_remaining)
            if remaining <= 0:
                return StoppingDecision.finished("global budget exhausted")
        return StoppingDecision.cont(min(config.first_batch, remaining))


class CollectionBuilder:
    """Coordinates sessions, the judgment store and the active-learning loop.

    Drives any number of topics: issues documents, records judgments (and
    revisions), refits the relevance model at batch boundaries and applies
    the planner's stopping decisions. Fully deterministic given its inputs
    and seed.
    """

    def __init__(self, *, queries: Mapping[str, str], pools: Mapping[str, Iterable[str]],
                 candidates: Sequence[str], features: TfidfIndex,
                 policy: RelevancePolicy, config: SessionConfig, seed: int = 0,
                 scorer=None, planner: BatchPlanner | None = None,
                 global_budget: int | None = None):
        self.queries = dict(queries)
        self.policy = policy
        self.config = config
        self.seed = seed
        self.features = features
        self.scorer = scorer or LogisticScorer(features)
        self.planner = planner or HeuristicPlanner()
        self.global_budget = global_budget
        self.candidates = sorted(candidates)
        self.store = JudgmentStore()
        self.sessions: dict[str, TopicSession] = {
            t: TopicSession(t, pools[t]) for t in sorted(queries, key=topic_sort_key)
            if t in pools
        }
        self._batch_counter: dict[str, int] = {t: 0 for t in self.sessions}
        self.total_judged = 0

    @property
    def budget_remaining(self) -> int | None:
        if self.global_budget is None:
            return None
        return self.global_budget - self.total_judged

    def live_topics(self) -> list[str]:
        return [t for t, s in self.sessions.items() if not s.is_terminal]

    def next_document(self, topic_id: str) -> str:
        session = self._session(topic_id)
        doc = session.next_doc()
        if doc is None:
            # a planner decision is pending; apply it and retry once
            self._advance(session)
            if session.is_terminal:
                raise JudgingError(f"topic {topic_id} is {session.phase.value}")
            doc = session.next_doc()
            if doc is None:
                raise JudgingError(f"topic {topic_id} awaiting stopping decision")
        return doc

    def record_judgment(self, topic_id: str, doc_id: str, grade: int) -> dict:
        session = self._session(topic_id)
        fresh = not session.was_judged(doc_id)
        record_judgment(self.store, session, doc_id, grade, self.policy)
        if fresh:
            self.total_judged += 1
            budget = self.budget_remaining
            if budget is not None and budget <= 0:
                self._finish_all("global budget exhausted")
            elif session.batch_complete:
                self._advance(session)
        return session.snapshot()

    def run_topic_with(self, topic_id: str, judge) -> TopicSession:
        """Drive one topic to a terminal state; ``judge(doc_id) -> grade``."""
        session = self._session(topic_id)
        while not session.is_terminal:
            try:
                doc = self.next_document(topic_id)
            except JudgingError:
                break
            self.record_judgment(topic_id, doc, judge(doc))
        return session

    def finalize(self) -> tuple[QrelsSet, dict]:
        self._finish_all("finalized with topics live")
        return finalize_qrels(self.store, self.sessions.values(), self.config)

    def _session(self, topic_id: str) -> TopicSession:
        try:
            return self.sessions[topic_id]
        except KeyError:
            raise JudgingError(f"unknown topic {topic_id!r}") from None

    def _finish_all(self, reason: str) -> None:
        for session in self.sessions.values():
            if not session.is_terminal:
                session.finish(Phase.FINISHED, reason)

    def _advance(self, session: TopicSession) -> None:
        while not session.is_terminal and session.batch_complete:
            decision = self.planner.plan(session, self.config, self.budget_remaining)
            if decision.status == "finished":
                session.finish(Phase.FINISHED, decision.reason)
            elif decision.status == "discarded":
                session.finish(Phase.DISCARDED, decision.reason)
            else:
                next_phase = (Phase.FIRST_HICAL if session.phase == Phase.POOL_JUDGING
                              else Phase.EXTENSION)
                batch = self._select_batch(session, decision.next_batch)
                if not batch and decision.next_batch > 0:
                    session.finish(Phase.FINISHED, "candidate set exhausted")
                    break
                session.load_batch(batch, next_phase)
                if decision.next_batch == 0:
                    continue  # zero-size step: re-plan at the new phase

    def _select_batch(self, session: TopicSession, size: int) -> list[str]:
        if size == 0:
            return []
        topic = session.topic_id
        positives, negatives = [], []
        for doc in session.judged:
            grade = self.store.latest(topic, doc)
            (positives if self.policy.is_relevant(grade) else negatives).append(doc)
        model = self.scorer.fit(positives, negatives, self.queries.get(topic, ""))
        unjudged = [d for d in self.candidates if not session.was_issued(d)]
        if not unjudged:
            return []
        self._batch_counter[topic] += 1
        seed = stable_seed(self.seed, topic, self._batch_counter[topic])
        ordered = select_next(model, unjudged, seed, self.features)
        return ordered[:size]
