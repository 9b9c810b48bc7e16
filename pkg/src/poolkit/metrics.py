"""Per-run evaluation measures under per-task gain and binarization policies.

All functions take a ranked list of doc ids (canonical order, best first),
a doc -> grade mapping for the topic, and a RelevancePolicy. Unjudged
documents score the policy's unjudged grade (0). Every measure lies in
[0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .trec_io import QrelsSet, RunFile, topic_sort_key

LINEAR_GAINS = {0: 0.0, 1: 1.0, 2: 2.0, 3: 3.0}
EXPONENTIAL_GAINS = {0: 0.0, 1: 1.0, 2: 3.0, 3: 7.0}


@dataclass(frozen=True)
class RelevancePolicy:
    """How grades map to binary relevance and to NDCG gain for one task.

    Documents are binary-relevant from grade 1 up; passages only from
    grade 2 (grade-1 passages are on-topic but don't answer, yet still
    earn NDCG gain 1).
    """

    task: str
    binary_threshold: int
    ndcg_gain: Mapping[int, float] = field(default_factory=lambda: dict(LINEAR_GAINS))
    unjudged_grade: int = 0
    ncg_depth: int = 100

    def __post_init__(self):
        if self.task not in ("document", "passage"):
            raise ValueError(f"task must be 'document' or 'passage', got {self.task!r}")
        if self.binary_threshold not in (1, 2):
            raise ValueError(f"binary_threshold must be 1 or 2, got {self.binary_threshold}")
        gains = [self.ndcg_gain[g] for g in sorted(self.ndcg_gain)]
        if any(b < a for a, b in zip(gains, gains[1:])):
            raise ValueError("ndcg_gain must be monotone non-decreasing in grade")

    @classmethod
    def document(cls, gains: str = "linear") -> "RelevancePolicy":
        return cls(task="document", binary_threshold=1, ndcg_gain=_gain_map(gains), ncg_depth=100)

    @classmethod
    def passage(cls, gains: str = "linear") -> "RelevancePolicy":
        return cls(task="passage", binary_threshold=2, ndcg_gain=_gain_map(gains), ncg_depth=1000)

    @classmethod
    def for_task(cls, task: str, gains: str = "linear") -> "RelevancePolicy":
        return cls.document(gains) if task == "document" else cls.passage(gains)

    def gain(self, grade: int | None) -> float:
        if grade is None:
            grade = self.unjudged_grade
        return self.ndcg_gain[grade]

    def is_relevant(self, grade: int | None) -> bool:
        return grade is not None and grade >= self.binary_threshold


def _gain_map(name: str) -> dict[int, float]:
    if name == "linear":
        return dict(LINEAR_GAINS)
    if name == "exponential":
        return dict(EXPONENTIAL_GAINS)
    raise ValueError(f"unknown gain scheme {name!r}")


def ndcg_at_k(ranked_docs: Sequence[str], qrels_topic: Mapping[str, int],
              policy: RelevancePolicy, k: int) -> float:
    """DCG@k over gains with log2(i+1) discount, normalized by the ideal
    DCG computed from all judged docs of the topic. 0 when the ideal is 0."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    dcg = 0.0
    for i, doc in enumerate(ranked_docs[:k], start=1):
        dcg += policy.gain(qrels_topic.get(doc)) / math.log2(i + 1)
    ideal_gains = sorted((policy.gain(g) for g in qrels_topic.values()), reverse=True)
    idcg = sum(g / math.log2(i + 1) for i, g in enumerate(ideal_gains[:k], start=1))
    return dcg / idcg if idcg > 0 else 0.0


def ncg_at_k(ranked_docs: Sequence[str], qrels_topic: Mapping[str, int],
             policy: RelevancePolicy, k: int) -> float:
    """Undiscounted cumulative gain at k over the ideal: graded recall."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    cg = sum(policy.gain(qrels_topic.get(doc)) for doc in ranked_docs[:k])
    ideal_gains = sorted((policy.gain(g) for g in qrels_topic.values()), reverse=True)
    ideal = sum(ideal_gains[:k])
    return cg / ideal if ideal > 0 else 0.0


def reciprocal_rank(ranked_docs: Sequence[str], qrels_topic: Mapping[str, int],
                    policy: RelevancePolicy, cutoff: int | None = None) -> float:
    """1/rank of the first binary-relevant doc; 0 if none (within the cutoff)."""
    docs = ranked_docs if cutoff is None else ranked_docs[:cutoff]
    for i, doc in enumerate(docs, start=1):
        if policy.is_relevant(qrels_topic.get(doc)):
            return 1.0 / i
    return 0.0


def average_precision(ranked_docs: Sequence[str], qrels_topic: Mapping[str, int],
                      policy: RelevancePolicy) -> float:
    """Mean of precision at each relevant retrieved rank, over the total
    number of relevant docs judged for the topic. 0 when none are relevant."""
    total_relevant = sum(1 for g in qrels_topic.values() if policy.is_relevant(g))
    if total_relevant == 0:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for i, doc in enumerate(ranked_docs, start=1):
        if policy.is_relevant(qrels_topic.get(doc)):
            hits += 1
            precision_sum += hits / i
    return precision_sum / total_relevant


def precision_at_k(ranked_docs: Sequence[str], qrels_topic: Mapping[str, int],
                   policy: RelevancePolicy, k: int = 10) -> float:
    """Binary-relevant fraction of the top k; the denominator stays k even
    for shorter lists (matching the standard evaluation tool)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = sum(1 for doc in ranked_docs[:k] if policy.is_relevant(qrels_topic.get(doc)))
    return hits / k


@dataclass
class MetricReport:
    """Per-topic and mean metric values for one run under one policy."""

    run_tag: str
    policy: RelevancePolicy
    eval_topics: list[str]
    per_topic: dict[str, dict[str, float]]
    means: dict[str, float]

    def metric_names(self) -> list[str]:
        return ["ndcg@10", f"ncg@{self.policy.ncg_depth}", "rr", "rr_ms", "ap", "p@10"]

    def topic_value(self, topic_id: str, metric: str) -> float:
        return self.per_topic[topic_id][metric]

    def to_tsv(self) -> str:
        names = self.metric_names()
        lines = ["\t".join(["run", "topic"] + names)]
        for topic_id in self.eval_topics:
            row = [self.run_tag, topic_id] + [f"{self.per_topic[topic_id][m]:.4f}" for m in names]
            lines.append("\t".join(row))
        lines.append("\t".join([self.run_tag, "all"] + [f"{self.means[m]:.4f}" for m in names]))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            {
                "run": self.run_tag,
                "task": self.policy.task,
                "eval_topics": self.eval_topics,
                "per_topic": self.per_topic,
                "means": self.means,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"


def evaluate_run(run: RunFile, qrels: QrelsSet, sparse_qrels: QrelsSet | None,
                 policy: RelevancePolicy, eval_topics: Sequence[str],
                 rr_cutoff: int | None = None) -> MetricReport:
    """Score one run over the evaluation topics.

    rr_ms uses the sparse label set with a relevant-at-grade-1 rule (sparse
    labels are positives by construction, whatever the task). Topics absent
    from the run score 0 on everything. The AP mean skips topics whose qrels
    contain no relevant document; all other means cover every eval topic.
    """
    if not eval_topics:
        raise ValueError("eval_topics must be non-empty")
    missing = [t for t in eval_topics if t not in qrels]
    if missing:
        raise ValueError(f"eval topics missing from qrels: {missing[:5]}")
    names = ["ndcg@10", f"ncg@{policy.ncg_depth}", "rr", "rr_ms", "ap", "p@10"]
    sparse_policy = RelevancePolicy(task=policy.task, binary_threshold=1,
                                    ncg_depth=policy.ncg_depth)
    per_topic: dict[str, dict[str, float]] = {}
    ap_topics: list[str] = []
    ordered = sorted(eval_topics, key=topic_sort_key)
    for topic_id in ordered:
        ranked = run.docs(topic_id)
        judged = qrels.topic(topic_id)
        sparse_topic = sparse_qrels.topic(topic_id) if sparse_qrels is not None else {}
        values = {
            "ndcg@10": ndcg_at_k(ranked, judged, policy, 10),
            f"ncg@{policy.ncg_depth}": ncg_at_k(ranked, judged, policy, policy.ncg_depth),
            "rr": reciprocal_rank(ranked, judged, policy, rr_cutoff),
            "rr_ms": reciprocal_rank(ranked, sparse_topic, sparse_policy, rr_cutoff),
            "ap": average_precision(ranked, judged, policy),
            "p@10": precision_at_k(ranked, judged, policy, 10),
        }
        per_topic[topic_id] = values
        if any(policy.is_relevant(g) for g in judged.values()):
            ap_topics.append(topic_id)
    means = {}
    for name in names:
        topics = ap_topics if name == "ap" else ordered
        means[name] = (sum(per_topic[t][name] for t in topics) / len(topics)) if topics else 0.0
    return MetricReport(run_tag=run.run_tag, policy=policy, eval_topics=list(ordered),
                        per_topic=per_topic, means=means)
