"""Command-line entry point wiring the pipeline end to end.

Every artifact-producing subcommand writes its outputs plus a manifest.json
(inputs, seeds, tool version, output digests) under --out, so reruns with
identical inputs and seeds are byte-identical and verifiably so.

Exit codes: 0 success, 1 data errors, 2 usage errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .baseline_search import BM25Params, InvertedIndex, build_index, generate_candidates
from .judging import SessionConfig, build_pool, select_candidate_topics
from .metrics import RelevancePolicy, evaluate_run
from .rank_analysis import (
    SystemRanking,
    delta_tsv,
    kendall_tau,
    matrix_tsv,
    metric_agreement,
    ndcg_vector_matrix,
    per_query_delta,
    rank_position_counts,
)
from .relevance_model import TfidfIndex
from .simulation import (
    FixedBudget,
    Heuristic,
    OracleJudge,
    OriginalSize,
    ReferenceCollection,
    Simulator,
    TrialConfig,
    budget_experiment,
    budget_table_tsv,
    lou_experiment,
    lou_table_tsv,
    rank_by,
)
from .trec_io import (
    Corpus,
    ParseError,
    parse_qrels,
    parse_run,
    parse_topics,
    truncate_run,
    write_qrels,
    write_run,
)


class _Outputs:
    """Collects artifacts for one command and writes the manifest."""

    def __init__(self, out_dir: str, command: str, inputs: dict, seeds: list[int]):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.inputs = inputs
        self.seeds = seeds
        self.files: dict[str, str] = {}

    def write_text(self, name: str, content: str) -> Path:
        return self.write_bytes(name, content.encode("utf-8"))

    def write_bytes(self, name: str, content: bytes) -> Path:
        path = self.dir / name
        path.write_bytes(content)
        self.files[name] = hashlib.sha256(content).hexdigest()
        return path

    def track(self, name: str) -> None:
        self.files[name] = hashlib.sha256((self.dir / name).read_bytes()).hexdigest()

    def finish(self) -> None:
        manifest = {
            "tool": "poolkit",
            "version": __version__,
            "command": self.command,
            "inputs": self.inputs,
            "seeds": self.seeds,
            "outputs": dict(sorted(self.files.items())),
        }
        (self.dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_runs(paths, quiet=False):
    runs = []
    for path in paths:
        run, warnings = parse_run(path)
        if not quiet:
            for w in warnings:
                print(f"warning: {w}", file=sys.stderr)
        runs.append(run)
    return runs


def _eval_topics(args, qrels):
    if getattr(args, "eval_topics", None):
        with open(args.eval_topics, "r", encoding="utf-8") as f:
            return [line.strip() for line in f if line.strip()]
    return qrels.topics()


def _session_config(args) -> SessionConfig:
    return SessionConfig(
        pool_depth=args.pool_depth, first_batch=args.first_batch,
        min_relevant=args.min_relevant, max_ratio=args.max_ratio,
        increment_factor=args.increment_factor,
    )


def _simulator(args) -> tuple[Simulator, OracleJudge]:
    corpus = Corpus.load(args.corpus, args.task)
    runs = _load_runs(args.run)
    sparse = parse_qrels(args.sparse_qrels)
    topics = {t.topic_id: t.text for t in parse_topics(args.topics)}
    if args.all_topics:
        selected = list(topics)
    else:
        selected = [t for t in select_candidate_topics(runs, sparse) if t in topics]
    if not selected:
        raise ValueError("no topics selected; try --all-topics")
    features = TfidfIndex({d: corpus.text_of(d) for d in corpus})
    teams = None
    if args.teams:
        with open(args.teams, "r", encoding="utf-8") as f:
            teams = dict(line.strip().split("\t") for line in f if line.strip())
    sim = Simulator(
        runs=runs, queries={t: topics[t] for t in selected}, sparse_qrels=sparse,
        features=features, candidates=corpus.ids(),
        policy=RelevancePolicy.for_task(args.task),
        session_config=_session_config(args), teams=teams,
    )
    oracle = OracleJudge(parse_qrels(args.oracle_qrels))
    return sim, oracle


def _reference(sim: Simulator, oracle: OracleJudge, args) -> ReferenceCollection:
    trial = sim.trial(TrialConfig(seed=args.reference_seed, criterion=Heuristic(cap=args.cap),
                                  trace_length=args.trace_length), oracle)
    return ReferenceCollection.from_trial(trial)


def _add_sim_inputs(parser, with_oracle=True):
    parser.add_argument("--run", action="append", required=True, help="run file (repeatable)")
    parser.add_argument("--corpus", required=True)
    parser.add_argument("--task", choices=["document", "passage"], required=True)
    parser.add_argument("--topics", required=True)
    parser.add_argument("--sparse-qrels", required=True)
    if with_oracle:
        parser.add_argument("--oracle-qrels", required=True)
    parser.add_argument("--teams", help="TSV of run_tag<TAB>team (default: run tag)")
    parser.add_argument("--all-topics", action="store_true",
                        help="simulate every topic in the topic file")
    parser.add_argument("--pool-depth", type=int, default=10)
    parser.add_argument("--first-batch", type=int, default=100)
    parser.add_argument("--min-relevant", type=int, default=3)
    parser.add_argument("--max-ratio", type=float, default=0.6)
    parser.add_argument("--increment-factor", type=float, default=1.0)
    parser.add_argument("--cap", type=int, default=1000, help="heuristic per-topic cap")
    parser.add_argument("--trace-length", type=int, default=2500)
    parser.add_argument("--reference-seed", type=int, default=0,
                        help="seed of the heuristic trial used as the official reference")


def cmd_validate(args) -> int:
    report = {}
    if args.corpus:
        corpus = Corpus.load(args.corpus, args.task)
        report["corpus"] = {"path": args.corpus, "records": len(corpus)}
    if args.topics:
        topics = parse_topics(args.topics)
        report["topics"] = {"path": args.topics, "records": len(topics)}
    if args.qrels:
        qrels = parse_qrels(args.qrels)
        report["qrels"] = {"path": args.qrels, "entries": len(qrels),
                           "topics": len(qrels.topics())}
    runs_report = []
    for path in args.run or []:
        run, warnings = parse_run(path)
        runs_report.append({"path": path, "tag": run.run_tag, "entries": len(run),
                            "topics": len(run.topics()), "warnings": warnings})
    if runs_report:
        report["runs"] = runs_report
    print(json.dumps(report, indent=2))
    return 0


def cmd_index(args) -> int:
    out = _Outputs(args.out, "index", {"corpus": args.corpus, "task": args.task}, [])
    corpus = Corpus.load(args.corpus, args.task)
    index = build_index(corpus)
    index.save(out.dir / "index.json")
    out.track("index.json")
    out.finish()
    print(f"indexed {index.doc_count} records, {len(index.postings)} terms -> {out.dir}/index.json")
    return 0


def cmd_search(args) -> int:
    inputs = {"corpus": args.corpus, "topics": args.topics, "task": args.task,
              "k": args.k, "k1": args.k1, "b": args.b, "rm3": args.rm3}
    out = _Outputs(args.out, "search", inputs, [])
    corpus = Corpus.load(args.corpus, args.task)
    index = build_index(corpus)
    topics = parse_topics(args.topics)
    params = BM25Params(k1=args.k1, b=args.b)
    run = generate_candidates(index, topics, args.k, params, run_tag=args.tag,
                              rm3=args.rm3, fb_docs=args.fb_docs,
                              fb_terms=args.fb_terms, mix=args.mix)
    write_run(run, out.dir / f"{args.tag}.txt")
    out.track(f"{args.tag}.txt")
    out.finish()
    print(f"wrote {len(run)} result lines for {len(run.topics())} topics -> {out.dir}/{args.tag}.txt")
    return 0


def cmd_pool(args) -> int:
    inputs = {"runs": args.run, "sparse_qrels": args.sparse_qrels, "depth": args.depth}
    out = _Outputs(args.out, "pool", inputs, [])
    runs = _load_runs(args.run)
    sparse = parse_qrels(args.sparse_qrels)
    topics = sorted({t for run in runs for t in run.topics()} | set(sparse.topics()))
    pools = {t: sorted(build_pool(runs, args.depth, sparse, t)) for t in topics}
    payload = {"depth": args.depth, "pools": pools,
               "sizes": {t: len(p) for t, p in pools.items()}}
    out.write_text("pools.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    out.finish()
    print(f"pooled {len(topics)} topics -> {out.dir}/pools.json")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    data_dir = args.data_dir or os.environ.get("POOLKIT_DATA_DIR", "poolkit-data")
    app = create_app(data_dir, token=args.token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_evaluate(args) -> int:
    inputs = {"run": args.run, "qrels": args.qrels, "sparse_qrels": args.sparse_qrels,
              "task": args.task, "truncate": args.truncate}
    out = _Outputs(args.out, "evaluate", inputs, [])
    run, _ = parse_run(args.run)
    if args.truncate:
        run = truncate_run(run, args.truncate)
    qrels = parse_qrels(args.qrels)
    sparse = parse_qrels(args.sparse_qrels) if args.sparse_qrels else None
    policy = RelevancePolicy.for_task(args.task, gains=args.gains)
    report = evaluate_run(run, qrels, sparse, policy, _eval_topics(args, qrels))
    out.write_text("report.tsv", report.to_tsv())
    if args.json:
        out.write_text("report.json", report.to_json())
    out.finish()
    sys.stdout.write(report.to_tsv())
    return 0


def cmd_compare(args) -> int:
    inputs = {"run_a": args.run_a, "run_b": args.run_b, "qrels": args.qrels,
              "task": args.task, "metric": args.metric}
    out = _Outputs(args.out, "compare", inputs, [])
    run_a, _ = parse_run(args.run_a)
    run_b, _ = parse_run(args.run_b)
    qrels = parse_qrels(args.qrels)
    policy = RelevancePolicy.for_task(args.task, gains=args.gains)
    eval_topics = _eval_topics(args, qrels)
    report_a = evaluate_run(run_a, qrels, None, policy, eval_topics)
    report_b = evaluate_run(run_b, qrels, None, policy, eval_topics)
    delta = per_query_delta(report_a, report_b, args.metric)
    mean_a, mean_b = report_a.means[args.metric], report_b.means[args.metric]
    gap = (mean_a - mean_b) / mean_b if mean_b else 0.0
    summary = {
        "metric": args.metric,
        "run_a": {"tag": report_a.run_tag, "mean": mean_a},
        "run_b": {"tag": report_b.run_tag, "mean": mean_b},
        "relative_gap": gap,
        "wins": delta.wins, "losses": delta.losses, "ties": delta.ties,
        "topics": delta.topics,
    }
    out.write_text("delta.tsv", delta_tsv(delta))
    out.write_text("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    out.finish()
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_export_matrix(args) -> int:
    inputs = {"runs": args.run, "qrels": args.qrels, "task": args.task}
    out = _Outputs(args.out, "export-matrix", inputs, [])
    qrels = parse_qrels(args.qrels)
    policy = RelevancePolicy.for_task(args.task)
    eval_topics = _eval_topics(args, qrels)
    reports = [evaluate_run(run, qrels, None, policy, eval_topics)
               for run in _load_runs(args.run)]
    tags, topics, matrix = ndcg_vector_matrix(reports)
    out.write_text("ndcg_matrix.tsv", matrix_tsv(tags, topics, matrix))
    out.finish()
    print(f"{len(tags)} runs x {len(topics)} topics -> {out.dir}/ndcg_matrix.tsv")
    return 0


def cmd_simulate(args) -> int:
    inputs = {"runs": args.run, "oracle_qrels": args.oracle_qrels, "task": args.task,
              "criterion": args.criterion, "budget": args.budget, "cap": args.cap}
    seeds = list(range(args.seed, args.seed + args.seeds))
    out = _Outputs(args.out, "simulate", inputs, seeds)
    sim, oracle = _simulator(args)
    if args.criterion == "heuristic":
        criterion = Heuristic(cap=args.cap)
    elif args.criterion == "fixed-budget":
        criterion = FixedBudget(per_topic=args.budget)
    else:
        reference = _reference(sim, oracle, args)
        criterion = OriginalSize(sizes=reference.sizes,
                                 eval_topics=tuple(reference.eval_topics))
    summary_rows = []
    for seed in seeds:
        trial = sim.trial(TrialConfig(seed=seed, criterion=criterion,
                                      trace_length=args.trace_length), oracle)
        out.write_bytes(f"trial-{seed}.traces.json", trial.traces_json())
        write_qrels(trial.qrels, out.dir / f"trial-{seed}.qrels.txt")
        out.track(f"trial-{seed}.qrels.txt")
        summary_rows.append({
            "seed": seed, "criterion": trial.criterion,
            "total_judged": trial.total_judged, "eval_topics": len(trial.eval_topics),
        })
    out.write_text("summary.json", json.dumps(summary_rows, indent=2) + "\n")
    out.finish()
    print(json.dumps(summary_rows, indent=2))
    return 0


def cmd_lou(args) -> int:
    inputs = {"runs": args.run, "oracle_qrels": args.oracle_qrels, "task": args.task}
    seeds = list(range(args.seed, args.seed + args.seeds))
    out = _Outputs(args.out, "lou", inputs, seeds)
    sim, oracle = _simulator(args)
    reference = _reference(sim, oracle, args)
    rows = lou_experiment(sim, oracle, reference, seeds, trace_length=args.trace_length)
    out.write_text("lou.tsv", lou_table_tsv(rows))
    out.write_text("lou.json", json.dumps(rows, indent=2) + "\n")
    out.finish()
    sys.stdout.write(lou_table_tsv(rows))
    return 0


def cmd_budgets(args) -> int:
    inputs = {"runs": args.run, "oracle_qrels": args.oracle_qrels, "task": args.task,
              "criteria": args.criterion, "budgets": args.budget}
    seeds = list(range(args.seed, args.seed + args.seeds))
    out = _Outputs(args.out, "budgets", inputs, seeds)
    sim, oracle = _simulator(args)
    reference = _reference(sim, oracle, args)
    rows = []
    for name in args.criterion:
        if name == "heuristic":
            criteria = [Heuristic(cap=args.cap)]
        elif name == "fixed-budget":
            criteria = [FixedBudget(per_topic=b) for b in (args.budget or [400, 500])]
        else:
            criteria = [OriginalSize(sizes=reference.sizes,
                                     eval_topics=tuple(reference.eval_topics))]
        for criterion in criteria:
            row = budget_experiment(sim, oracle, reference, criterion, seeds,
                                    trace_length=args.trace_length)
            if isinstance(criterion, FixedBudget):
                row["criterion"] = f"fixed-budget-{criterion.per_topic}"
            rows.append(row)
    out.write_text("budgets.tsv", budget_table_tsv(rows))
    out.write_text("budgets.json", json.dumps(rows, indent=2) + "\n")
    out.finish()
    sys.stdout.write(budget_table_tsv(rows))
    return 0


def cmd_plot_data(args) -> int:
    inputs = {"mode": args.mode, "runs": args.run, "qrels": args.qrels, "task": args.task}
    out = _Outputs(args.out, "plot-data", inputs, [])
    qrels = parse_qrels(args.qrels)
    policy = RelevancePolicy.for_task(args.task)
    eval_topics = _eval_topics(args, qrels)
    runs = _load_runs(args.run)
    sparse = parse_qrels(args.sparse_qrels) if args.sparse_qrels else None
    reports = [evaluate_run(run, qrels, sparse, policy, eval_topics) for run in runs]
    if args.mode == "per-query":
        if len(reports) != 2:
            raise ValueError("per-query mode takes exactly two --run files")
        delta = per_query_delta(reports[0], reports[1], args.metric)
        out.write_text("per_query.tsv", delta_tsv(delta))
    elif args.mode == "scatter":
        metric_x, metric_y = args.metric_x, args.metric_y
        tau = metric_agreement(reports, metric_x, metric_y)
        lines = [f"# tau={tau:.4f}", f"run\t{metric_x}\t{metric_y}"]
        for r in reports:
            lines.append(f"{r.run_tag}\t{r.means[metric_x]:.4f}\t{r.means[metric_y]:.4f}")
        out.write_text("scatter.tsv", "\n".join(lines) + "\n")
    else:  # heatmap
        if not args.trial_qrels:
            raise ValueError("heatmap mode needs --trial-qrels (repeatable)")
        official = rank_by(runs, qrels, policy, eval_topics, args.metric)
        trial_rankings = []
        for path in args.trial_qrels:
            trial_q = parse_qrels(path)
            trial_rankings.append(rank_by(runs, trial_q, policy, eval_topics, args.metric))
        counts = rank_position_counts(official, trial_rankings)
        n = len(official)
        lines = ["\t".join(["run"] + [str(i) for i in range(1, n + 1)])]
        for tag in official.tags():
            lines.append("\t".join([tag] + [str(c) for c in counts[tag]]))
        out.write_text("heatmap.tsv", "\n".join(lines) + "\n")
    out.finish()
    print(f"wrote {args.mode} plot data -> {out.dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poolkit",
                                     description="Build, judge and stress-test pooled "
                                                 "ad-hoc IR test collections.")
    parser.add_argument("--version", action="version", version=f"poolkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and sanity-check input files")
    p.add_argument("--corpus")
    p.add_argument("--task", choices=["document", "passage"], default="document")
    p.add_argument("--topics")
    p.add_argument("--qrels")
    p.add_argument("--run", action="append")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("index", help="build and save an inverted index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", choices=["document", "passage"], required=True)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="generate a BM25 or BM25+RM3 run")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", choices=["document", "passage"], required=True)
    p.add_argument("--topics", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--k1", type=float, default=0.9)
    p.add_argument("--b", type=float, default=0.4)
    p.add_argument("--rm3", action="store_true")
    p.add_argument("--fb-docs", type=int, default=10)
    p.add_argument("--fb-terms", type=int, default=10)
    p.add_argument("--mix", type=float, default=0.5)
    p.add_argument("--tag", default="bm25")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("pool", help="build per-topic judging pools")
    p.add_argument("--run", action="append", required=True)
    p.add_argument("--sparse-qrels", required=True)
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("serve", help="run the assessment service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--data-dir", help="event-log directory (or POOLKIT_DATA_DIR)")
    p.add_argument("--token", help="require this bearer token")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("evaluate", help="score a run against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--sparse-qrels")
    p.add_argument("--task", choices=["document", "passage"], required=True)
    p.add_argument("--eval-topics", help="file with one topic id per line")
    p.add_argument("--truncate", type=int)
    p.add_argument("--gains", choices=["linear", "exponential"], default="linear")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="per-query deltas and gap between two runs")
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--task", choices=["document", "passage"], required=True)
    p.add_argument("--eval-topics")
    p.add_argument("--metric", default="ndcg@10")
    p.add_argument("--gains", choices=["linear", "exponential"], default="linear")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-matrix", help="runs x topics NDCG@10 matrix")
    p.add_argument("--run", action="append", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--task", choices=["document", "passage"], required=True)
    p.add_argument("--eval-topics")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_export_matrix)

    p = sub.add_parser("simulate", help="replay the judging process against an oracle")
    _add_sim_inputs(p)
    p.add_argument("--criterion", choices=["heuristic", "fixed-budget", "original-size"],
                   default="heuristic")
    p.add_argument("--budget", type=int, default=400)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--seeds", type=int, default=1, help="number of trials")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lou", help="leave-out-uniques reusability table")
    _add_sim_inputs(p)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_lou)

    p = sub.add_parser("budgets", help="stopping-criteria comparison table")
    _add_sim_inputs(p)
    p.add_argument("--criterion", action="append",
                   choices=["heuristic", "fixed-budget", "original-size"], required=True)
    p.add_argument("--budget", type=int, action="append",
                   help="per-topic budget(s) for fixed-budget")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_budgets)

    p = sub.add_parser("plot-data", help="emit gnuplot-style data files")
    p.add_argument("--mode", choices=["per-query", "scatter", "heatmap"], required=True)
    p.add_argument("--run", action="append", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--sparse-qrels")
    p.add_argument("--task", choices=["document", "passage"], required=True)
    p.add_argument("--eval-topics")
    p.add_argument("--metric", default="ndcg@10")
    p.add_argument("--metric-x", default="ndcg@10")
    p.add_argument("--metric-y", default="rr_ms")
    p.add_argument("--trial-qrels", action="append")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_plot_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
