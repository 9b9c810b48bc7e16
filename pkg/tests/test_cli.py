import json

import pytest

from poolkit.cli import main
from poolkit.trec_io import parse_qrels, parse_run


def _sim_args(paths, out, extra=()):
    args = ["--corpus", paths["corpus"], "--task", "document",
            "--topics", paths["topics"], "--sparse-qrels", paths["sparse"],
            "--oracle-qrels", paths["oracle"], "--teams", paths["teams"],
            "--all-topics", "--first-batch", "10", "--cap", "200",
            "--out", str(out)]
    for run in paths["runs"]:
        args += ["--run", run]
    return args + list(extra)


def test_validate(mini_files, capsys):
    rc = main(["validate", "--corpus", mini_files["corpus"], "--task", "document",
               "--topics", mini_files["topics"], "--qrels", mini_files["oracle"],
               "--run", mini_files["runs"][0]])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["corpus"]["records"] == 90
    assert report["runs"][0]["warnings"] == []


def test_index_and_manifest(mini_files, tmp_path):
    out = tmp_path / "idx"
    rc = main(["index", "--corpus", mini_files["corpus"], "--task", "document",
               "--out", str(out)])
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["tool"] == "poolkit"
    assert "index.json" in manifest["outputs"]


def test_search_produces_parseable_run(mini_files, tmp_path):
    out = tmp_path / "s"
    rc = main(["search", "--corpus", mini_files["corpus"], "--task", "document",
               "--topics", mini_files["topics"], "--k", "20", "--tag", "clirun",
               "--out", str(out)])
    assert rc == 0
    run, warnings = parse_run(out / "clirun.txt")
    assert warnings == []
    assert run.run_tag == "clirun"
    assert len(run.topics()) == 4


def test_pool_command(mini_files, tmp_path):
    out = tmp_path / "p"
    args = ["pool", "--sparse-qrels", mini_files["sparse"], "--out", str(out)]
    for run in mini_files["runs"]:
        args += ["--run", run]
    assert main(args) == 0
    pools = json.loads((out / "pools.json").read_text())
    assert set(pools["sizes"]) == {"201", "202", "203", "204"}
    for topic, docs in pools["pools"].items():
        assert pools["sizes"][topic] == len(docs)


def test_evaluate_tsv_and_json(mini_files, tmp_path, capsys):
    out = tmp_path / "e"
    rc = main(["evaluate", "--run", mini_files["runs"][0], "--qrels", mini_files["oracle"],
               "--sparse-qrels", mini_files["sparse"], "--task", "document",
               "--json", "--out", str(out)])
    assert rc == 0
    tsv = (out / "report.tsv").read_text()
    header = tsv.splitlines()[0].split("\t")
    assert header[:2] == ["run", "topic"]
    assert "ndcg@10" in header and "rr_ms" in header
    report = json.loads((out / "report.json").read_text())
    assert set(report["means"]) == {"ndcg@10", "ncg@100", "rr", "rr_ms", "ap", "p@10"}
    assert tsv.splitlines()[-1].startswith("bm25-default\tall")


def test_compare_summary(mini_files, tmp_path, capsys):
    out = tmp_path / "c"
    rc = main(["compare", "--run-a", mini_files["runs"][0], "--run-b", mini_files["runs"][2],
               "--qrels", mini_files["oracle"], "--task", "document", "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["wins"] + summary["losses"] + summary["ties"] == summary["topics"]
    delta_lines = (out / "delta.tsv").read_text().strip().splitlines()
    assert delta_lines[1] == "topic\tdelta"
    assert len(delta_lines) == 2 + summary["topics"]


def test_export_matrix(mini_files, tmp_path):
    out = tmp_path / "m"
    args = ["export-matrix", "--qrels", mini_files["oracle"], "--task", "document",
            "--out", str(out)]
    for run in mini_files["runs"]:
        args += ["--run", run]
    assert main(args) == 0
    lines = (out / "ndcg_matrix.tsv").read_text().strip().splitlines()
    assert len(lines) == 1 + len(mini_files["runs"])
    assert len(lines[0].split("\t")) == 1 + 4  # run + topics


def test_simulate_heuristic_and_rerun_byte_identical(mini_files, tmp_path):
    out1, out2 = tmp_path / "sim1", tmp_path / "sim2"
    args1 = ["simulate"] + _sim_args(mini_files, out1, ["--criterion", "heuristic",
                                                        "--seed", "2", "--seeds", "1"])
    args2 = ["simulate"] + _sim_args(mini_files, out2, ["--criterion", "heuristic",
                                                        "--seed", "2", "--seeds", "1"])
    assert main(args1) == 0
    assert main(args2) == 0
    for name in ("trial-2.traces.json", "trial-2.qrels.txt", "summary.json", "manifest.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
    qrels = parse_qrels(out1 / "trial-2.qrels.txt")
    assert len(qrels.topics()) > 0


def test_lou_table_shape(mini_files, tmp_path, capsys):
    out = tmp_path / "lou"
    rc = main(["lou"] + _sim_args(mini_files, out, ["--seed", "1", "--seeds", "2"]))
    assert rc == 0
    lines = (out / "lou.tsv").read_text().strip().splitlines()
    assert lines[0].split("\t") == ["trial", "all_map_tau", "all_map_drop",
                                    "omit_map_tau", "omit_map_drop",
                                    "omit_p10_tau", "omit_p10_drop"]
    assert len(lines) == 3  # header + 2 trials


def test_budgets_table_shape(mini_files, tmp_path):
    out = tmp_path / "b"
    rc = main(["budgets"] + _sim_args(mini_files, out,
                                      ["--criterion", "heuristic",
                                       "--criterion", "fixed-budget", "--budget", "30",
                                       "--seed", "1", "--seeds", "2"]))
    assert rc == 0
    lines = (out / "budgets.tsv").read_text().strip().splitlines()
    assert lines[0].startswith("criterion\tjudgments_mean")
    assert len(lines) == 3
    assert lines[1].split("\t")[0] == "heuristic"
    assert lines[2].split("\t")[0] == "fixed-budget-30"


def test_plot_data_modes(mini_files, tmp_path):
    out = tmp_path / "pq"
    rc = main(["plot-data", "--mode", "per-query",
               "--run", mini_files["runs"][0], "--run", mini_files["runs"][1],
               "--qrels", mini_files["oracle"], "--task", "document", "--out", str(out)])
    assert rc == 0
    assert (out / "per_query.tsv").exists()

    out2 = tmp_path / "sc"
    args = ["plot-data", "--mode", "scatter", "--qrels", mini_files["oracle"],
            "--sparse-qrels", mini_files["sparse"], "--task", "document",
            "--metric-x", "ndcg@10", "--metric-y", "rr_ms", "--out", str(out2)]
    for run in mini_files["runs"]:
        args += ["--run", run]
    assert main(args) == 0
    scatter = (out2 / "scatter.tsv").read_text()
    assert scatter.startswith("# tau=")


def test_plot_data_heatmap(mini_files, tmp_path):
    sim_out = tmp_path / "sim"
    assert main(["simulate"] + _sim_args(mini_files, sim_out,
                                         ["--criterion", "original-size",
                                          "--seed", "1", "--seeds", "2"])) == 0
    out = tmp_path / "hm"
    args = ["plot-data", "--mode", "heatmap", "--qrels", mini_files["oracle"],
            "--task", "document", "--metric", "ap", "--out", str(out),
            "--trial-qrels", str(sim_out / "trial-1.qrels.txt"),
            "--trial-qrels", str(sim_out / "trial-2.qrels.txt")]
    for run in mini_files["runs"]:
        args += ["--run", run]
    assert main(args) == 0
    lines = (out / "heatmap.tsv").read_text().strip().splitlines()
    assert len(lines) == 1 + len(mini_files["runs"])
    for line in lines[1:]:
        assert sum(int(c) for c in line.split("\t")[1:]) == 2  # rows sum to trials


def test_data_error_is_exit_1(tmp_path):
    rc = main(["evaluate", "--run", "/nonexistent.txt", "--qrels", "/nope.txt",
               "--task", "document", "--out", str(tmp_path / "x")])
    assert rc == 1


def test_usage_error_is_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["definitely-not-a-command"])
    assert exc.value.code == 2
