import random

import pytest

from poolkit.judging import (
    GRADE_SCALES,
    CollectionBuilder,
    HeuristicPlanner,
    JudgingError,
    JudgmentStore,
    Phase,
    SessionConfig,
    TargetSizePlanner,
    TopicSession,
    build_pool,
    check_stopping,
    eligibility,
    finalize_qrels,
    partial_qrels,
    record_judgment,
    select_candidate_topics,
)
from poolkit.metrics import RelevancePolicy
from poolkit.relevance_model import TfidfIndex
from poolkit.trec_io import QrelsSet, RunEntry, RunFile

DOC = RelevancePolicy.document()
PSG = RelevancePolicy.passage()
CFG = SessionConfig()


def _run(tag, per_topic):
    entries = []
    for topic, docs in per_topic.items():
        for i, doc in enumerate(docs):
            entries.append(RunEntry(topic, doc, i + 1, float(len(docs) - i), tag))
    return RunFile(entries, run_tag=tag)


# --- candidate topic selection -------------------------------------------------

def test_candidate_selection_rules():
    sparse = QrelsSet()
    for t in ("easy", "hard", "mid"):
        sparse.add(t, f"POS_{t}", 1)
    runs = [
        _run("r1", {"easy": ["POS_easy"], "hard": ["x1"], "mid": ["POS_mid"]}),
        _run("r2", {"easy": ["POS_easy"], "hard": ["x2"], "mid": ["a", "b", "c", "POS_mid"]}),
        _run("r3", {"easy": ["POS_easy"], "hard": ["x3"], "mid": ["a", "POS_mid"]}),
    ]
    # easy: all runs rank the positive first (median 1.0) -> excluded
    # hard: nobody retrieves it (median 0.0) -> excluded
    # mid: RRs {1, 0.25, 0.5}, median 0.5 -> included
    assert select_candidate_topics(runs, sparse) == ["mid"]


def test_candidate_selection_median_of_five():
    sparse = QrelsSet()
    sparse.add("t", "POS", 1)
    rrs = {"a": [], "b": ["x1", "x2", "x3", "x4", "POS"], "c": ["x1", "POS"],
           "d": ["y", "POS"], "e": ["POS"]}
    runs = [_run(tag, {"t": docs}) for tag, docs in rrs.items()]
    # RR values {0, 0.2, 0.5, 0.5, 1.0} -> median 0.5 -> included
    assert select_candidate_topics(runs, sparse) == ["t"]


# --- pools ---------------------------------------------------------------------

def test_build_pool_disjoint_runs_plus_sparse():
    sparse = QrelsSet()
    sparse.add("1", "S1", 1)
    r1 = _run("r1", {"1": [f"A{i}" for i in range(15)]})
    r2 = _run("r2", {"1": [f"B{i}" for i in range(15)]})
    pool = build_pool([r1, r2], 10, sparse, "1")
    assert len(pool) == 21


def test_build_pool_identical_runs_dedup():
    sparse = QrelsSet()
    sparse.add("1", "S1", 1)
    docs = [f"D{i}" for i in range(12)]
    pool = build_pool([_run("a", {"1": docs}), _run("b", {"1": docs})], 10, sparse, "1")
    assert len(pool) == 11  # 10 shared + 1 sparse


def test_build_pool_matches_brute_force_union():
    rng = random.Random(8)
    sparse = QrelsSet()
    for d in rng.sample(range(100), 5):
        sparse.add("7", f"D{d}", rng.choice([0, 1]))
    runs = []
    for tag in ("a", "b", "c"):
        docs = [f"D{d}" for d in rng.sample(range(100), 30)]
        runs.append(_run(tag, {"7": docs}))
    pool = build_pool(runs, 10, sparse, "7")
    expected = set(sparse.topic("7"))
    for run in runs:
        expected |= set(run.docs("7", 10))
    assert pool == expected


# --- judgments and counters ----------------------------------------------------

def _fresh_session(pool_size=3):
    return TopicSession("t", [f"P{i}" for i in range(pool_size)]), JudgmentStore()


def test_new_judgment_updates_counters():
    session, store = _fresh_session()
    doc = session.next_doc()
    record_judgment(store, session, doc, 2, DOC)
    assert session.judged_count == 1 and session.relevant == 1


def test_revision_keeps_j_recounts_r():
    session, store = _fresh_session()
    doc = session.next_doc()
    record_judgment(store, session, doc, 1, DOC)
    assert (session.relevant, session.judged_count) == (1, 1)
    record_judgment(store, session, doc, 0, DOC)
    assert (session.relevant, session.judged_count) == (0, 1)
    assert [g for g, _ in store.history("t", doc)] == [1, 0]


def test_passage_grade1_not_relevant():
    session, store = _fresh_session()
    doc = session.next_doc()
    record_judgment(store, session, doc, 1, PSG)
    assert session.relevant == 0 and session.judged_count == 1


def test_unissued_doc_rejected():
    session, store = _fresh_session()
    with pytest.raises(JudgingError, match="never issued"):
        record_judgment(store, session, "STRANGER", 1, DOC)


def test_grade_out_of_range_rejected():
    session, store = _fresh_session()
    doc = session.next_doc()
    with pytest.raises(ValueError, match="grade"):
        record_judgment(store, session, doc, 4, DOC)


def test_next_doc_idempotent_until_judged():
    session, store = _fresh_session()
    first = session.next_doc()
    assert session.next_doc() == first
    record_judgment(store, session, first, 0, DOC)
    second = session.next_doc()
    assert second != first


def test_pool_issued_in_sorted_order():
    session = TopicSession("t", ["B", "A", "C"])
    store = JudgmentStore()
    seen = []
    while not session.batch_complete:
        doc = session.next_doc()
        seen.append(doc)
        record_judgment(store, session, doc, 0, DOC)
    assert seen == ["A", "B", "C"]


def test_counter_consistency_random_interleaving():
    rng = random.Random(99)
    session = TopicSession("t", [f"P{i:02d}" for i in range(30)])
    store = JudgmentStore()
    judged = []
    for _ in range(120):
        if judged and rng.random() < 0.4:
            doc = rng.choice(judged)  # revision
            record_judgment(store, session, doc, rng.randrange(4), DOC)
        elif not session.batch_complete:
            doc = session.next_doc()
            record_judgment(store, session, doc, rng.randrange(4), DOC)
            judged.append(doc)
        expected_r = sum(1 for d in session.judged
                         if DOC.is_relevant(store.latest("t", d)))
        assert session.relevant == expected_r
        assert session.judged_count == len(session.judged)


def test_issuance_unique_within_topic():
    session, store = _fresh_session(3)
    while not session.batch_complete:
        record_judgment(store, session, session.next_doc(), 0, DOC)
    with pytest.raises(JudgingError, match="already issued"):
        session.load_batch(["P0"], Phase.FIRST_HICAL)


# --- stopping machine ----------------------------------------------------------

def drive_to_first_check(pool_size, relevant_at_check, config=CFG, policy=DOC):
    """Judge pool + first batch with exactly the requested relevant count."""
    session = TopicSession("t", [f"P{i:04d}" for i in range(pool_size)])
    store = JudgmentStore()
    total = pool_size + config.first_batch
    grades = [1] * relevant_at_check + [0] * (total - relevant_at_check)
    idx = 0
    while not session.batch_complete:
        record_judgment(store, session, session.next_doc(), grades[idx], DOC if policy is DOC else policy)
        idx += 1
    session.load_batch([f"B{i:04d}" for i in range(config.first_batch)], Phase.FIRST_HICAL)
    while not session.batch_complete:
        record_judgment(store, session, session.next_doc(), grades[idx], policy)
        idx += 1
    return session, store


def extend(session, store, decision, new_relevant, policy=DOC, tag="E"):
    docs = [f"{tag}{i:04d}" for i in range(decision.next_batch)]
    session.load_batch(docs, Phase.EXTENSION)
    grades = [1] * new_relevant + [0] * (len(docs) - new_relevant)
    idx = 0
    while not session.batch_complete:
        record_judgment(store, session, session.next_doc(), grades[idx], policy)
        idx += 1
    return session


def test_stop_finished_when_2r_below_p():
    session, _ = drive_to_first_check(150, 60)
    decision = check_stopping(session, CFG)
    assert decision.status == "finished"


def test_stop_continue_then_finished_via_revisions():
    session, store = drive_to_first_check(100, 80)
    decision = check_stopping(session, CFG)
    assert decision.status == "continue" and decision.next_batch == 60
    extend(session, store, decision, new_relevant=0)
    # assessor demotes ten earlier judgments: R* drops to 70 at J=260
    relevant_docs = [d for d in session.judged if store.latest("t", d) == 1][:10]
    for doc in relevant_docs:
        record_judgment(store, session, doc, 0, DOC)
    assert (session.relevant, session.judged_count) == (70, 260)
    decision = check_stopping(session, CFG)
    assert decision.status == "finished"  # 2*70+100 = 240 < 260


def test_stop_discarded_on_ratio():
    session, _ = drive_to_first_check(100, 130)
    decision = check_stopping(session, CFG)
    assert decision.status == "discarded"  # 130/200 = 0.65 > 0.6


def test_check_stopping_mid_batch_errors():
    session = TopicSession("t", ["A", "B"])
    store = JudgmentStore()
    record_judgment(store, session, session.next_doc(), 1, DOC)
    with pytest.raises(JudgingError, match="mid-batch"):
        check_stopping(session, CFG)


def test_check_stopping_at_pool_completion_errors():
    session, store = _fresh_session(2)
    while not session.batch_complete:
        record_judgment(store, session, session.next_doc(), 1, DOC)
    with pytest.raises(JudgingError, match="pool"):
        check_stopping(session, CFG)


def test_phase_monotonic_no_batch_after_terminal():
    session, _ = drive_to_first_check(150, 60)
    session.finish(Phase.FINISHED, "done")
    with pytest.raises(JudgingError):
        session.next_doc()
    with pytest.raises(JudgingError):
        session.load_batch(["X"], Phase.EXTENSION)


def test_per_topic_cap_clamps_and_finishes():
    cfg = SessionConfig(per_topic_cap=230)
    session, store = drive_to_first_check(100, 80, cfg)
    decision = check_stopping(session, cfg)
    assert decision.status == "continue"
    assert decision.next_batch == 30  # G=60 clamped to 230-200
    extend(session, store, decision, new_relevant=30)
    decision = check_stopping(session, cfg)
    assert decision.status == "finished"
    assert "cap" in decision.reason


def test_budget_overrides_to_finished():
    session, _ = drive_to_first_check(100, 80)
    decision = check_stopping(session, CFG, budget_remaining=0)
    assert decision.status == "finished"
    assert "budget" in decision.reason


# --- eligibility ---------------------------------------------------------------

def test_eligibility_table_spot_checks():
    assert not eligibility(1, 183, CFG)        # fewer than 3 relevant
    assert not eligibility(341, 420, CFG)      # ratio 0.812
    assert eligibility(53, 239, CFG)           # ratio 0.222
    assert eligibility(3, 190, CFG)            # exactly 3 relevant counts
    assert eligibility(392, 700, CFG)          # 0.56: between 0.5 and 0.6 stays in
    assert not eligibility(3, 5, CFG)          # exactly 0.6 is out (not < 0.6)


def test_eligibility_requires_judged():
    with pytest.raises(ValueError):
        eligibility(0, 0, CFG)


# --- finalize -------------------------------------------------------------------

def _completed(topic, relevant, judged, store, grade=3):
    docs = [f"{topic}_D{i}" for i in range(judged)]
    for i, doc in enumerate(docs):
        store.record(topic, doc, grade if i < relevant else 0)
    return TopicSession.from_completed(topic, docs, relevant=relevant)


def test_finalize_qrels_counts_and_exclusions():
    store = JudgmentStore()
    sessions = [
        _completed("1", 10, 100, store),
        _completed("2", 2, 50, store),     # too few relevant
        _completed("3", 80, 100, store),   # ratio 0.8
    ]
    qrels, summary = finalize_qrels(store, sessions, CFG)
    assert summary["total_judged"] == 250
    assert summary["qrels_size"] == 100
    assert summary["included"] == ["1"]
    assert sorted(summary["excluded"]) == ["2", "3"]
    assert qrels.relevant_count("1", 1) == 10


def test_finalize_requires_terminal_sessions():
    store = JudgmentStore()
    live = TopicSession("1", ["A"])
    with pytest.raises(JudgingError, match="still"):
        finalize_qrels(store, [live], CFG)


def test_finalize_zero_included_topics():
    store = JudgmentStore()
    sessions = [_completed("1", 1, 60, store)]
    qrels, summary = finalize_qrels(store, sessions, CFG)
    assert len(qrels) == 0
    assert summary["topics_started"] == 1
    assert summary["total_judged"] == 60


def test_partial_qrels_flags_live_sessions():
    store = JudgmentStore()
    live = TopicSession("1", ["A", "B"])
    record_judgment(store, live, live.next_doc(), 1, DOC)
    _, summary = partial_qrels(store, [live], CFG)
    assert summary["partial"] is True


def test_discarded_topics_never_included():
    store = JudgmentStore()
    session = _completed("1", 10, 100, store)
    session.phase = Phase.DISCARDED
    qrels, summary = finalize_qrels(store, [session], CFG)
    assert summary["included"] == []


# --- the coordinator end to end -------------------------------------------------

@pytest.fixture(scope="module")
def tiny_world():
    rng = random.Random(13)
    texts = {}
    relevant = {}
    for i in range(40):
        doc_id = f"D{i:02d}"
        body = " ".join(f"w{rng.randrange(30)}" for _ in range(12))
        if i < 8:
            body += " needle thread"
            relevant[doc_id] = 1 if i < 5 else 2
        texts[doc_id] = body
    features = TfidfIndex(texts)
    return texts, relevant, features


def _builder(tiny_world, planner=None, budget=None, first_batch=5):
    texts, relevant, features = tiny_world
    config = SessionConfig(first_batch=first_batch)
    return CollectionBuilder(
        queries={"q1": "needle thread"},
        pools={"q1": ["D00", "D01", "D20", "D21"]},
        candidates=sorted(texts),
        features=features,
        policy=DOC,
        config=config,
        seed=5,
        planner=planner,
        global_budget=budget,
    ), relevant


def _oracle_judge(relevant):
    return lambda doc: relevant.get(doc, 0)


def test_builder_judges_pool_first_then_cal(tiny_world):
    builder, relevant = _builder(tiny_world)
    issued = []
    for _ in range(4):
        doc = builder.next_document("q1")
        issued.append(doc)
        builder.record_judgment("q1", doc, relevant.get(doc, 0))
    assert issued == ["D00", "D01", "D20", "D21"]  # sorted pool order
    session = builder.sessions["q1"]
    assert session.phase == Phase.FIRST_HICAL  # auto-advanced at pool boundary
    nxt = builder.next_document("q1")
    assert nxt not in issued


def test_builder_runs_topic_to_terminal_state(tiny_world):
    builder, relevant = _builder(tiny_world)
    session = builder.run_topic_with("q1", _oracle_judge(relevant))
    assert session.is_terminal
    assert session.judged == list(dict.fromkeys(session.judged))  # no re-issues
    assert session.judged[:4] == ["D00", "D01", "D20", "D21"]


def test_builder_two_runs_identical(tiny_world):
    builder_a, relevant = _builder(tiny_world)
    builder_b, _ = _builder(tiny_world)
    sa = builder_a.run_topic_with("q1", _oracle_judge(relevant))
    sb = builder_b.run_topic_with("q1", _oracle_judge(relevant))
    assert sa.judged == sb.judged
    assert sa.phase == sb.phase


def test_builder_target_size_planner(tiny_world):
    planner = TargetSizePlanner({"q1": 17})
    builder, relevant = _builder(tiny_world, planner=planner)
    session = builder.run_topic_with("q1", _oracle_judge(relevant))
    assert session.judged_count == 17
    assert session.phase == Phase.FINISHED


def test_builder_target_below_pool_still_judges_pool(tiny_world):
    planner = TargetSizePlanner({"q1": 2})
    builder, relevant = _builder(tiny_world, planner=planner)
    session = builder.run_topic_with("q1", _oracle_judge(relevant))
    assert session.judged_count == 4  # the pool is sacrosanct


def test_builder_global_budget_finishes_in_place(tiny_world):
    builder, relevant = _builder(tiny_world, budget=6)
    session = builder.run_topic_with("q1", _oracle_judge(relevant))
    assert session.phase == Phase.FINISHED
    assert session.judged_count == 6
    assert "budget" in session.terminal_reason


def test_builder_next_document_after_finish_conflicts(tiny_world):
    builder, relevant = _builder(tiny_world, planner=TargetSizePlanner({"q1": 5}))
    builder.run_topic_with("q1", _oracle_judge(relevant))
    with pytest.raises(JudgingError):
        builder.next_document("q1")


class _SpyScorer:
    """Records fit() training sets, then delegates to the real scorer."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = []

    def fit(self, positives, negatives, prior_query):
        self.calls.append((list(positives), list(negatives)))
        return self.inner.fit(positives, negatives, prior_query)


def test_builder_refit_uses_latest_grades_after_revision(tiny_world):
    texts, relevant, features = tiny_world
    from poolkit.relevance_model import LogisticScorer

    spy = _SpyScorer(LogisticScorer(features))
    builder = CollectionBuilder(
        queries={"q1": "needle thread"}, pools={"q1": ["D00", "D01", "D20", "D21"]},
        candidates=sorted(texts), features=features, policy=DOC,
        config=SessionConfig(first_batch=5), seed=5, scorer=spy,
    )
    for _ in range(3):
        doc = builder.next_document("q1")
        builder.record_judgment("q1", doc, relevant.get(doc, 0))
    builder.record_judgment("q1", "D00", 0)  # revision before the boundary
    doc = builder.next_document("q1")
    builder.record_judgment("q1", doc, relevant.get(doc, 0))  # completes the pool
    positives, negatives = spy.calls[-1]
    assert "D00" in negatives and "D00" not in positives
    assert "D01" in positives


def test_grade_scales_cover_both_tasks():
    for task in ("document", "passage"):
        grades = [g["grade"] for g in GRADE_SCALES[task]]
        assert sorted(grades) == [0, 1, 2, 3]
        assert all(g["label"] and g["description"] for g in GRADE_SCALES[task])
