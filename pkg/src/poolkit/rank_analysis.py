"""Compare system rankings and metric orderings.

Rankings are total orders: runs sorted by score descending with run_tag
ascending as the tie-break, so Kendall's tau needs no tie handling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .metrics import MetricReport
from .trec_io import topic_sort_key


@dataclass(frozen=True)
class SystemRanking:
    """Runs ordered by score desc, run_tag asc on ties."""

    ordered: tuple[tuple[str, float], ...]

    @classmethod
    def from_scores(cls, scores: Mapping[str, float]) -> "SystemRanking":
        items = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(tuple(items))

    def tags(self) -> list[str]:
        return [tag for tag, _ in self.ordered]

    def rank_of(self, tag: str) -> int:
        for i, (t, _) in enumerate(self.ordered, start=1):
            if t == tag:
                return i
        raise KeyError(tag)

    def __len__(self) -> int:
        return len(self.ordered)


def kendall_tau(ranking_a: SystemRanking, ranking_b: SystemRanking) -> float:
    """(concordant - discordant) / C(n,2) over all run pairs; 1.0 for n < 2."""
    tags = ranking_a.tags()
    if set(tags) != set(ranking_b.tags()):
        raise ValueError("rankings cover different run sets")
    n = len(tags)
    if n < 2:
        return 1.0
    pos_a = {tag: i for i, tag in enumerate(tags)}
    pos_b = {tag: i for i, tag in enumerate(ranking_b.tags())}
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            a = pos_a[tags[i]] - pos_a[tags[j]]
            b = pos_b[tags[i]] - pos_b[tags[j]]
            if a * b > 0:
                concordant += 1
            else:
                discordant += 1
    return (concordant - discordant) / (n * (n - 1) // 2)


def max_drop(official: SystemRanking, alternative: SystemRanking) -> int:
    """Largest rank loss any run suffers moving from official to alternative."""
    if set(official.tags()) != set(alternative.tags()):
        raise ValueError("rankings cover different run sets")
    alt_pos = {tag: i for i, tag in enumerate(alternative.tags(), start=1)}
    worst = 0
    for rank, tag in enumerate(official.tags(), start=1):
        worst = max(worst, alt_pos[tag] - rank)
    return worst


def rank_position_counts(official: SystemRanking,
                         trial_rankings: Sequence[SystemRanking]) -> dict[str, list[int]]:
    """counts[run][rank-1] = trials placing the run at that rank. Rows follow
    the official order; every row sums to the number of trials."""
    n = len(official)
    counts = {tag: [0] * n for tag in official.tags()}
    for ranking in trial_rankings:
        if set(ranking.tags()) != set(official.tags()):
            raise ValueError("trial ranking covers a different run set")
        for rank, tag in enumerate(ranking.tags(), start=1):
            counts[tag][rank - 1] += 1
    return counts


@dataclass(frozen=True)
class DeltaReport:
    metric: str
    deltas: tuple[tuple[str, float], ...]  # (topic, a - b), sorted descending
    wins: int
    losses: int
    ties: int

    @property
    def topics(self) -> int:
        return len(self.deltas)


def per_query_delta(report_a: MetricReport, report_b: MetricReport, metric: str) -> DeltaReport:
    """Per-topic (a - b) values sorted largest first, plus a win/loss tally."""
    if report_a.eval_topics != report_b.eval_topics:
        raise ValueError("reports cover different evaluation topics")
    deltas = [(t, report_a.topic_value(t, metric) - report_b.topic_value(t, metric))
              for t in report_a.eval_topics]
    deltas.sort(key=lambda kv: (-kv[1], topic_sort_key(kv[0])))
    wins = sum(1 for _, d in deltas if d > 0)
    losses = sum(1 for _, d in deltas if d < 0)
    return DeltaReport(metric=metric, deltas=tuple(deltas), wins=wins, losses=losses,
                       ties=len(deltas) - wins - losses)


def metric_agreement(reports: Sequence[MetricReport], metric_x: str, metric_y: str) -> float:
    """Kendall's tau between the system orderings the two metrics induce."""
    if len(reports) < 2:
        raise ValueError("need at least two runs to correlate metrics")
    ranking_x = SystemRanking.from_scores({r.run_tag: r.means[metric_x] for r in reports})
    ranking_y = SystemRanking.from_scores({r.run_tag: r.means[metric_y] for r in reports})
    return kendall_tau(ranking_x, ranking_y)


def ndcg_vector_matrix(reports: Sequence[MetricReport]) -> tuple[list[str], list[str], list[list[float]]]:
    """(run_tags, topics, matrix) of per-topic NDCG@10, rows in report order."""
    if not reports:
        raise ValueError("no reports given")
    topics = reports[0].eval_topics
    for r in reports[1:]:
        if r.eval_topics != topics:
            raise ValueError("reports cover different evaluation topics")
    tags = [r.run_tag for r in reports]
    matrix = [[r.topic_value(t, "ndcg@10") for t in topics] for r in reports]
    return tags, list(topics), matrix


def matrix_tsv(tags: Sequence[str], topics: Sequence[str],
               matrix: Sequence[Sequence[float]]) -> str:
    lines = ["\t".join(["run"] + list(topics))]
    for tag, row in zip(tags, matrix):
        lines.append("\t".join([tag] + [f"{v:.4f}" for v in row]))
    return "\n".join(lines) + "\n"


def delta_tsv(report: DeltaReport) -> str:
    lines = [f"# metric={report.metric} wins={report.wins} losses={report.losses} ties={report.ties}",
             "topic\tdelta"]
    for topic, delta in report.deltas:
        lines.append(f"{topic}\t{delta:.4f}")
    return "\n".join(lines) + "\n"


def counts_json(counts: Mapping[str, Sequence[int]]) -> str:
    return json.dumps({tag: list(row) for tag, row in counts.items()}, indent=2) + "\n"
