"""Readers and writers for the collection file formats.

Covers four text formats, all UTF-8:

- corpus TSV: ``doc_id<TAB>url<TAB>title<TAB>body`` for documents,
  ``passage_id<TAB>text`` for passages
- topic TSV: ``topic_id<TAB>query text``
- run files: the 6-column ``topic Q0 doc rank score tag`` layout
- qrels files: the 4-column ``topic 0 doc grade`` layout

Parsed structures are immutable after construction (run entries are frozen,
qrels are only mutated through ``QrelsSet.add`` while a collection is being
built) and safe to share across threads.

Within a run topic the canonical ordering is score descending with doc_id
descending as the tie-break; scores are authoritative and file ranks are
advisory (``parse_run`` renormalizes and warns when they disagree).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

SUBTASKS = ("rerank", "fullrank")
CATEGORIES = ("nnlm", "nn", "trad")


class ParseError(ValueError):
    """A malformed input file; carries the offending location."""

    def __init__(self, path, line_no: int | None, reason: str):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        where = f"{self.path}:{line_no}" if line_no is not None else self.path
        super().__init__(f"{where}: {reason}")


@dataclass(frozen=True)
class DocRecord:
    doc_id: str
    url: str
    title: str
    body: str

    @property
    def text(self) -> str:
        return f"{self.title} {self.body}" if self.title else self.body


@dataclass(frozen=True)
class PassageRecord:
    passage_id: str
    text: str

    @property
    def doc_id(self) -> str:
        return self.passage_id


@dataclass(frozen=True)
class TopicRecord:
    topic_id: str
    text: str


@dataclass(frozen=True)
class RunEntry:
    topic_id: str
    doc_id: str
    rank: int
    score: float
    run_tag: str


@dataclass(frozen=True)
class RunMetadata:
    run_tag: str
    group: str
    subtask: str
    category: str

    def __post_init__(self):
        if self.subtask not in SUBTASKS:
            raise ValueError(f"subtask must be one of {SUBTASKS}, got {self.subtask!r}")
        if self.category not in CATEGORIES:
            raise ValueError(f"category must be one of {CATEGORIES}, got {self.category!r}")


@dataclass(frozen=True)
class QrelsEntry:
    topic_id: str
    doc_id: str
    grade: int


def topic_sort_key(topic_id: str):
    """Ascending topic order: numeric ids numerically, others lexically."""
    return (0, int(topic_id), "") if topic_id.isdigit() else (1, 0, topic_id)


def canonical_order(entries: Iterable[RunEntry]) -> list[RunEntry]:
    """Sort run entries by score desc, doc_id desc (two stable passes)."""
    out = sorted(entries, key=lambda e: e.doc_id, reverse=True)
    out.sort(key=lambda e: e.score, reverse=True)
    return out


class Corpus:
    """In-memory id -> record view of a document or passage collection."""

    def __init__(self, kind: str, records: Iterable[DocRecord | PassageRecord]):
        if kind not in ("document", "passage"):
            raise ValueError(f"kind must be 'document' or 'passage', got {kind!r}")
        self.kind = kind
        self._records: dict[str, DocRecord | PassageRecord] = {}
        for rec in records:
            if rec.doc_id in self._records:
                raise ValueError(f"duplicate id {rec.doc_id!r} in corpus")
            self._records[rec.doc_id] = rec

    @classmethod
    def load(cls, path, kind: str) -> "Corpus":
        return cls(kind, parse_corpus(path, kind))

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._records

    def __iter__(self) -> Iterator[str]:
        return iter(self._records)

    def get(self, doc_id: str):
        return self._records.get(doc_id)

    def __getitem__(self, doc_id: str):
        return self._records[doc_id]

    def text_of(self, doc_id: str) -> str:
        """Indexable/judgeable text: title+body for documents, text for passages."""
        return self._records[doc_id].text

    def ids(self) -> list[str]:
        return list(self._records)


class QrelsSet:
    """Graded judgments keyed by (topic, doc).

    A lookup of an unlisted document returns None ("unjudged"), which is
    distinct from an explicit grade of 0.
    """

    def __init__(self, entries: Iterable[QrelsEntry] = ()):
        self._grades: dict[str, dict[str, int]] = {}
        for e in entries:
            self.add(e.topic_id, e.doc_id, e.grade)

    def add(self, topic_id: str, doc_id: str, grade: int) -> None:
        if grade not in (0, 1, 2, 3):
            raise ValueError(f"grade must be in 0..3, got {grade!r}")
        per_topic = self._grades.setdefault(topic_id, {})
        if doc_id in per_topic:
            raise ValueError(f"duplicate qrels entry for ({topic_id}, {doc_id})")
        per_topic[doc_id] = grade

    def grade(self, topic_id: str, doc_id: str) -> int | None:
        """Grade for (topic, doc), or None when unjudged."""
        return self._grades.get(topic_id, {}).get(doc_id)

    def topic(self, topic_id: str) -> Mapping[str, int]:
        """doc -> grade map for one topic (empty if absent)."""
        return self._grades.get(topic_id, {})

    def topics(self) -> list[str]:
        return list(self._grades)

    def __len__(self) -> int:
        return sum(len(d) for d in self._grades.values())

    def __contains__(self, topic_id: str) -> bool:
        return topic_id in self._grades

    def entries(self) -> Iterator[QrelsEntry]:
        for topic_id, docs in self._grades.items():
            for doc_id, grade in docs.items():
                yield QrelsEntry(topic_id, doc_id, grade)

    def relevant_count(self, topic_id: str, threshold: int) -> int:
        return sum(1 for g in self._grades.get(topic_id, {}).values() if g >= threshold)


class RunFile:
    """One system's ranked results, grouped by topic in canonical order."""

    def __init__(self, entries: Iterable[RunEntry], run_tag: str | None = None,
                 metadata: RunMetadata | None = None):
        by_topic: dict[str, list[RunEntry]] = {}
        tag = run_tag
        for e in entries:
            if tag is None:
                tag = e.run_tag
            by_topic.setdefault(e.topic_id, []).append(e)
        self.run_tag = tag or "run"
        self.metadata = metadata
        self._by_topic: dict[str, list[RunEntry]] = {}
        for topic_id in sorted(by_topic, key=topic_sort_key):
            ordered = canonical_order(by_topic[topic_id])
            self._by_topic[topic_id] = [
                RunEntry(e.topic_id, e.doc_id, rank, e.score, self.run_tag)
                for rank, e in enumerate(ordered, start=1)
            ]

    def topics(self) -> list[str]:
        return list(self._by_topic)

    def entries(self, topic_id: str) -> Sequence[RunEntry]:
        return self._by_topic.get(topic_id, [])

    def docs(self, topic_id: str, k: int | None = None) -> list[str]:
        entries = self._by_topic.get(topic_id, [])
        if k is not None:
            entries = entries[:k]
        return [e.doc_id for e in entries]

    def all_entries(self) -> Iterator[RunEntry]:
        for entries in self._by_topic.values():
            yield from entries

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_topic.values())

    def with_metadata(self, metadata: RunMetadata) -> "RunFile":
        run = RunFile.__new__(RunFile)
        run.run_tag = self.run_tag
        run.metadata = metadata
        run._by_topic = self._by_topic
        return run


def _lines(path) -> Iterator[tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if line.strip():
                yield line_no, line


def parse_corpus(path, kind: str) -> Iterator[DocRecord | PassageRecord]:
    """Stream corpus records in file order, checking field counts and id uniqueness."""
    n_fields = {"document": 4, "passage": 2}.get(kind)
    if n_fields is None:
        raise ValueError(f"kind must be 'document' or 'passage', got {kind!r}")
    seen: set[str] = set()
    for line_no, line in _lines(path):
        fields = line.split("\t")
        if len(fields) != n_fields:
            raise ParseError(path, line_no,
                             f"expected {n_fields} tab-separated fields, got {len(fields)}")
        rec_id = fields[0]
        if not rec_id:
            raise ParseError(path, line_no, "empty id")
        if rec_id in seen:
            raise ParseError(path, line_no, f"duplicate id {rec_id!r}")
        seen.add(rec_id)
        if kind == "document":
            yield DocRecord(rec_id, fields[1], fields[2], fields[3])
        else:
            yield PassageRecord(rec_id, fields[1])


def write_corpus(records: Iterable[DocRecord | PassageRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            if isinstance(rec, DocRecord):
                f.write(f"{rec.doc_id}\t{rec.url}\t{rec.title}\t{rec.body}\n")
            else:
                f.write(f"{rec.passage_id}\t{rec.text}\n")


def parse_topics(path) -> list[TopicRecord]:
    topics: list[TopicRecord] = []
    seen: set[str] = set()
    for line_no, line in _lines(path):
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(path, line_no, f"expected 2 tab-separated fields, got {len(fields)}")
        topic_id, text = fields
        if topic_id in seen:
            raise ParseError(path, line_no, f"duplicate topic id {topic_id!r}")
        seen.add(topic_id)
        topics.append(TopicRecord(topic_id, text))
    return topics


def write_topics(topics: Iterable[TopicRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in topics:
            f.write(f"{t.topic_id}\t{t.text}\n")


def parse_run(path) -> tuple[RunFile, list[str]]:
    """Parse a 6-column run file.

    Scores are authoritative: when the stored ranks disagree with the
    canonical ordering they are renormalized and a warning is returned.
    """
    warnings: list[str] = []
    raw: dict[str, list[RunEntry]] = {}
    file_order: dict[str, list[str]] = {}
    run_tag: str | None = None
    seen: set[tuple[str, str]] = set()
    for line_no, line in _lines(path):
        fields = line.split()
        if len(fields) != 6:
            raise ParseError(path, line_no, f"expected 6 columns, got {len(fields)}")
        topic_id, _q0, doc_id, rank_s, score_s, tag = fields
        try:
            rank = int(rank_s)
        except ValueError:
            raise ParseError(path, line_no, f"non-integer rank {rank_s!r}") from None
        try:
            score = float(score_s)
        except ValueError:
            raise ParseError(path, line_no, f"non-numeric score {score_s!r}") from None
        if not math.isfinite(score):
            raise ParseError(path, line_no, f"non-finite score {score_s!r}")
        if (topic_id, doc_id) in seen:
            raise ParseError(path, line_no, f"duplicate (topic, doc) pair ({topic_id}, {doc_id})")
        seen.add((topic_id, doc_id))
        if run_tag is None:
            run_tag = tag
        elif tag != run_tag:
            warnings.append(f"{path}:{line_no}: run tag {tag!r} differs from {run_tag!r}; keeping the first")
        raw.setdefault(topic_id, []).append(RunEntry(topic_id, doc_id, rank, score, run_tag))
        file_order.setdefault(topic_id, []).append(doc_id)
    run = RunFile((e for entries in raw.values() for e in entries), run_tag=run_tag)
    for topic_id in run.topics():
        stored = file_order[topic_id]
        stored_ranks = [e.rank for e in raw[topic_id]]
        canonical_docs = run.docs(topic_id)
        if stored != canonical_docs or stored_ranks != list(range(1, len(stored) + 1)):
            warnings.append(f"{path}: topic {topic_id}: ranks renormalized from score order")
    return run, warnings


def write_run(run: RunFile, path) -> None:
    """Canonical run bytes: topics ascending, entries in rank order, single spaces."""
    with open(path, "w", encoding="utf-8") as f:
        for topic_id in run.topics():
            for e in run.entries(topic_id):
                f.write(f"{e.topic_id} Q0 {e.doc_id} {e.rank} {e.score!r} {e.run_tag}\n")


def parse_qrels(path) -> QrelsSet:
    qrels = QrelsSet()
    for line_no, line in _lines(path):
        fields = line.split()
        if len(fields) != 4:
            raise ParseError(path, line_no, f"expected 4 columns, got {len(fields)}")
        topic_id, _it, doc_id, grade_s = fields
        try:
            grade = int(grade_s)
        except ValueError:
            raise ParseError(path, line_no, f"non-integer grade {grade_s!r}") from None
        if grade not in (0, 1, 2, 3):
            raise ParseError(path, line_no, f"grade {grade} outside 0..3")
        try:
            qrels.add(topic_id, doc_id, grade)
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return qrels


def write_qrels(qrels: QrelsSet, path) -> None:
    """Canonical qrels bytes: topics ascending, docs in insertion order."""
    with open(path, "w", encoding="utf-8") as f:
        for topic_id in sorted(qrels.topics(), key=topic_sort_key):
            for doc_id, grade in qrels.topic(topic_id).items():
                f.write(f"{topic_id} 0 {doc_id} {grade}\n")


def qrels_bytes(qrels: QrelsSet) -> bytes:
    """The exact bytes write_qrels would produce."""
    parts = []
    for topic_id in sorted(qrels.topics(), key=topic_sort_key):
        for doc_id, grade in qrels.topic(topic_id).items():
            parts.append(f"{topic_id} 0 {doc_id} {grade}\n")
    return "".join(parts).encode("utf-8")


def truncate_run(run: RunFile, k: int) -> RunFile:
    """Top-k of each topic by the canonical ordering, ranks renumbered 1..k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    kept = [e for topic_id in run.topics() for e in run.entries(topic_id)[:k]]
    return RunFile(kept, run_tag=run.run_tag, metadata=run.metadata)


def parse_run_metadata(path) -> dict[str, RunMetadata]:
    """TSV of run_tag, group, subtask, category; keyed by run_tag."""
    out: dict[str, RunMetadata] = {}
    for line_no, line in _lines(path):
        fields = line.split("\t")
        if len(fields) != 4:
            raise ParseError(path, line_no, f"expected 4 tab-separated fields, got {len(fields)}")
        tag, group, subtask, category = fields
        if tag in out:
            raise ParseError(path, line_no, f"duplicate run tag {tag!r}")
        try:
            out[tag] = RunMetadata(tag, group, subtask, category)
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
    return out
