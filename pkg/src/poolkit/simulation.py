"""Replay the judging process against an oracle to stress-test a collection.

A trial rebuilds the pools, drives the judging coordinator with oracle
grades instead of a human assessor, and records the per-topic trace of
documents encountered. Three stopping criteria are supported:

- OriginalSize: reproduce given per-topic judgment counts (reusability and
  leave-out-uniques runs);
- FixedBudget: an equal per-topic allotment, topics kept if they found the
  minimum number of relevant docs;
- Heuristic: the live stopping rules, with a per-topic cap.

Results are pure functions of (runs, oracle, config, omitted team): one
root seed per trial, with per-topic child seeds derived by stable hashing
so nothing depends on iteration order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .judging import (
    CollectionBuilder,
    HeuristicPlanner,
    SessionConfig,
    TargetSizePlanner,
    build_pool,
    eligibility,
)
from .metrics import RelevancePolicy, evaluate_run
from .rank_analysis import SystemRanking, kendall_tau, max_drop
from .relevance_model import TfidfIndex
from .trec_io import QrelsSet, RunFile, topic_sort_key


@dataclass(frozen=True)
class OracleJudge:
    """Grades straight from a reference qrels; unjudged docs are grade 0."""

    qrels: QrelsSet

    def grade(self, topic_id: str, doc_id: str) -> int:
        g = self.qrels.grade(topic_id, doc_id)
        return 0 if g is None else g


@dataclass(frozen=True)
class OriginalSize:
    """Judge each topic to a given count; evaluate on a fixed topic set."""

    sizes: Mapping[str, int]
    eval_topics: tuple[str, ...] | None = None
    name: str = "original-size"


@dataclass(frozen=True)
class FixedBudget:
    """Equal per-topic allotment; a topic is kept if it found enough relevant."""

    per_topic: int
    name: str = "fixed-budget"


@dataclass(frozen=True)
class Heuristic:
    """The live stopping rules with a safety cap per topic."""

    cap: int = 1000
    name: str = "heuristic"


Criterion = OriginalSize | FixedBudget | Heuristic


@dataclass(frozen=True)
class TrialConfig:
    seed: int
    criterion: Criterion
    trace_length: int = 2500


@dataclass
class TrialResult:
    seed: int
    criterion: str
    omitted_team: str | None
    traces: dict[str, list[str]]
    pools: dict[str, int]
    qrels: QrelsSet
    eval_topics: list[str]
    total_judged: int
    per_topic: dict[str, dict]
    comparison: dict[str, dict] = field(default_factory=dict)

    def traces_json(self) -> bytes:
        return json.dumps(self.traces, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass
class ReferenceCollection:
    """The official collection a simulation is compared against."""

    qrels: QrelsSet
    sizes: dict[str, int]
    eval_topics: list[str]

    @classmethod
    def from_trial(cls, result: TrialResult) -> "ReferenceCollection":
        return cls(
            qrels=result.qrels,
            sizes={t: len(trace) for t, trace in result.traces.items()},
            eval_topics=list(result.eval_topics),
        )


def qrels_from_trace(traces: Mapping[str, Sequence[str]], per_topic_sizes: Mapping[str, int],
                     oracle: OracleJudge) -> QrelsSet:
    """Oracle grades of each trace's first n docs; n may not exceed the trace."""
    qrels = QrelsSet()
    for topic_id in sorted(per_topic_sizes, key=topic_sort_key):
        size = per_topic_sizes[topic_id]
        trace = traces[topic_id]
        if size > len(trace):
            raise ValueError(f"topic {topic_id}: prefix {size} exceeds trace length {len(trace)}")
        for doc_id in trace[:size]:
            qrels.add(topic_id, doc_id, oracle.grade(topic_id, doc_id))
    return qrels


class Simulator:
    """Shared, immutable inputs for a batch of trials."""

    def __init__(self, *, runs: Sequence[RunFile], queries: Mapping[str, str],
                 sparse_qrels: QrelsSet, features: TfidfIndex,
                 candidates: Sequence[str], policy: RelevancePolicy,
                 session_config: SessionConfig | None = None,
                 teams: Mapping[str, str] | None = None):
        self.runs = list(runs)
        self.queries = dict(queries)
        self.sparse_qrels = sparse_qrels
        self.features = features
        self.candidates = sorted(candidates)
        self.policy = policy
        self.session_config = session_config or SessionConfig()
        self._teams = dict(teams) if teams else None

    def team_of(self, run: RunFile) -> str:
        if self._teams is not None:
            return self._teams.get(run.run_tag, run.run_tag)
        return run.metadata.group if run.metadata else run.run_tag

    def teams(self) -> list[str]:
        return sorted({self.team_of(r) for r in self.runs})

    def trial(self, config: TrialConfig, oracle: OracleJudge,
              omitted_team: str | None = None) -> TrialResult:
        pooled_runs = [r for r in self.runs if self.team_of(r) != omitted_team]
        if not pooled_runs:
            raise ValueError(f"omitting {omitted_team!r} leaves no runs to pool")
        topics = sorted(self.queries, key=topic_sort_key)
        pools = {t: build_pool(pooled_runs, self.session_config.pool_depth,
                               self.sparse_qrels, t) for t in topics}
        oversize = [t for t in topics if len(pools[t]) > config.trace_length]
        if oversize:
            raise ValueError(f"trace_length {config.trace_length} below pool size "
                             f"for topics {oversize[:3]}")
        criterion = config.criterion
        session_config = self.session_config
        if isinstance(criterion, Heuristic):
            session_config = replace(session_config, per_topic_cap=criterion.cap)
            planner = HeuristicPlanner()
        elif isinstance(criterion, OriginalSize):
            planner = TargetSizePlanner(criterion.sizes)
        else:
            planner = TargetSizePlanner({t: criterion.per_topic for t in topics})
        builder = CollectionBuilder(
            queries=self.queries, pools=pools, candidates=self.candidates,
            features=self.features, policy=self.policy, config=session_config,
            seed=config.seed, planner=planner,
        )
        for topic_id in topics:
            builder.run_topic_with(topic_id, lambda doc, t=topic_id: oracle.grade(t, doc))
        traces = {t: list(builder.sessions[t].judged[:config.trace_length]) for t in topics}
        total = sum(s.judged_count for s in builder.sessions.values())
        per_topic = {t: builder.sessions[t].snapshot() for t in topics}
        qrels, eval_topics = self._derive_qrels(criterion, builder, traces, oracle)
        return TrialResult(
            seed=config.seed, criterion=criterion.name, omitted_team=omitted_team,
            traces=traces, pools={t: len(pools[t]) for t in topics}, qrels=qrels,
            eval_topics=eval_topics, total_judged=total, per_topic=per_topic,
        )

    def _derive_qrels(self, criterion: Criterion, builder: CollectionBuilder,
                      traces: dict[str, list[str]], oracle: OracleJudge):
        cfg = builder.config
        if isinstance(criterion, OriginalSize):
            if criterion.eval_topics is not None:
                eval_topics = sorted(criterion.eval_topics, key=topic_sort_key)
            else:
                eval_topics = [t for t, s in builder.sessions.items()
                               if s.judged_count > 0
                               and eligibility(s.relevant, s.judged_count, cfg)]
            sizes = {t: criterion.sizes[t] for t in eval_topics}
            return qrels_from_trace(traces, sizes, oracle), eval_topics
        if isinstance(criterion, FixedBudget):
            eval_topics = [t for t, s in builder.sessions.items()
                           if s.relevant >= cfg.min_relevant]
        else:
            eval_topics = [t for t, s in builder.sessions.items()
                           if s.judged_count > 0 and s.phase.value != "Discarded"
                           and eligibility(s.relevant, s.judged_count, cfg)]
        qrels = QrelsSet()
        for topic_id in eval_topics:
            for doc_id in builder.sessions[topic_id].judged:
                qrels.add(topic_id, doc_id, builder.store.latest(topic_id, doc_id))
        return qrels, eval_topics


def simulate_trial(runs: Sequence[RunFile], oracle: OracleJudge, config: TrialConfig,
                   omitted_team: str | None = None, **sim_kwargs) -> TrialResult:
    """One-shot wrapper; build a Simulator directly when running many trials."""
    sim = Simulator(runs=runs, **sim_kwargs)
    return sim.trial(config, oracle, omitted_team)


def rank_by(runs: Sequence[RunFile], qrels: QrelsSet, policy: RelevancePolicy,
            eval_topics: Sequence[str], metric: str) -> SystemRanking:
    scores = {}
    for run in runs:
        report = evaluate_run(run, qrels, None, policy, eval_topics)
        scores[run.run_tag] = report.means[metric]
    return SystemRanking.from_scores(scores)


def _compare(official_ranking: SystemRanking, trial_ranking: SystemRanking) -> dict:
    return {"tau": kendall_tau(official_ranking, trial_ranking),
            "drop": max_drop(official_ranking, trial_ranking)}


def lou_experiment(sim: Simulator, oracle: OracleJudge, official: ReferenceCollection,
                   seeds: Sequence[int], teams: Sequence[str] | None = None,
                   trace_length: int = 2500) -> list[dict]:
    """Leave-out-uniques: per seed, an all-teams trial plus one omission trial
    per team; reports the worst tau/drop over teams for MAP and P@10."""
    teams = list(teams) if teams is not None else sim.teams()
    if len(teams) < 2:
        raise ValueError("leave-out-uniques needs at least two teams")
    criterion = OriginalSize(sizes=official.sizes, eval_topics=tuple(official.eval_topics))
    official_map = rank_by(sim.runs, official.qrels, sim.policy, official.eval_topics, "ap")
    official_p10 = rank_by(sim.runs, official.qrels, sim.policy, official.eval_topics, "p@10")
    rows = []
    for seed in seeds:
        config = TrialConfig(seed=seed, criterion=criterion, trace_length=trace_length)
        all_trial = sim.trial(config, oracle)
        all_map = _compare(official_map, rank_by(sim.runs, all_trial.qrels, sim.policy,
                                                 all_trial.eval_topics, "ap"))
        all_p10 = _compare(official_p10, rank_by(sim.runs, all_trial.qrels, sim.policy,
                                                 all_trial.eval_topics, "p@10"))
        omit_map, omit_p10 = [], []
        for team in teams:
            trial = sim.trial(config, oracle, omitted_team=team)
            omit_map.append(_compare(official_map, rank_by(
                sim.runs, trial.qrels, sim.policy, trial.eval_topics, "ap")))
            omit_p10.append(_compare(official_p10, rank_by(
                sim.runs, trial.qrels, sim.policy, trial.eval_topics, "p@10")))
        rows.append({
            "seed": seed,
            "all_map": all_map,
            "all_p10": all_p10,
            "omit_map": {"tau": min(c["tau"] for c in omit_map),
                         "drop": max(c["drop"] for c in omit_map)},
            "omit_p10": {"tau": min(c["tau"] for c in omit_p10),
                         "drop": max(c["drop"] for c in omit_p10)},
        })
    return rows


def budget_experiment(sim: Simulator, oracle: OracleJudge, official: ReferenceCollection,
                      criterion: Criterion, seeds: Sequence[int],
                      trace_length: int = 2500) -> dict:
    """One summary row: judgments required and ranking quality vs the official
    qrels (worst tau, largest drop across seeds) for MAP and P@10."""
    official_map = rank_by(sim.runs, official.qrels, sim.policy, official.eval_topics, "ap")
    official_p10 = rank_by(sim.runs, official.qrels, sim.policy, official.eval_topics, "p@10")
    totals, topic_counts, map_cmp, p10_cmp = [], [], [], []
    for seed in seeds:
        trial = sim.trial(TrialConfig(seed=seed, criterion=criterion,
                                      trace_length=trace_length), oracle)
        totals.append(trial.total_judged)
        topic_counts.append(len(trial.eval_topics))
        map_cmp.append(_compare(official_map, rank_by(sim.runs, trial.qrels, sim.policy,
                                                      trial.eval_topics, "ap")))
        p10_cmp.append(_compare(official_p10, rank_by(sim.runs, trial.qrels, sim.policy,
                                                      trial.eval_topics, "p@10")))
    return {
        "criterion": criterion.name,
        "judgments": {"mean": sum(totals) / len(totals), "min": min(totals), "max": max(totals)},
        "eval_topics": {"min": min(topic_counts), "max": max(topic_counts)},
        "map": {"tau": min(c["tau"] for c in map_cmp), "drop": max(c["drop"] for c in map_cmp)},
        "p@10": {"tau": min(c["tau"] for c in p10_cmp), "drop": max(c["drop"] for c in p10_cmp)},
    }


def lou_table_tsv(rows: Sequence[dict]) -> str:
    header = "\t".join(["trial", "all_map_tau", "all_map_drop",
                        "omit_map_tau", "omit_map_drop", "omit_p10_tau", "omit_p10_drop"])
    lines = [header]
    for row in rows:
        lines.append("\t".join([
            str(row["seed"]),
            f"{row['all_map']['tau']:.4f}", str(row["all_map"]["drop"]),
            f"{row['omit_map']['tau']:.4f}", str(row["omit_map"]["drop"]),
            f"{row['omit_p10']['tau']:.4f}", str(row["omit_p10"]["drop"]),
        ]))
    return "\n".join(lines) + "\n"


def budget_table_tsv(rows: Sequence[dict]) -> str:
    header = "\t".join(["criterion", "judgments_mean", "judgments_min", "judgments_max",
                        "eval_topics", "map_tau", "map_drop", "p10_tau", "p10_drop"])
    lines = [header]
    for row in rows:
        topics = row["eval_topics"]
        topics_s = str(topics["min"]) if topics["min"] == topics["max"] \
            else f"{topics['min']}-{topics['max']}"
        lines.append("\t".join([
            row["criterion"],
            f"{row['judgments']['mean']:.1f}", str(row["judgments"]["min"]),
            str(row["judgments"]["max"]), topics_s,
            f"{row['map']['tau']:.4f}", str(row["map"]["drop"]),
            f"{row['p@10']['tau']:.4f}", str(row["p@10"]["drop"]),
        ]))
    return "\n".join(lines) + "\n"
