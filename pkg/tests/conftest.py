import pytest

from poolkit.judging import SessionConfig
from poolkit.metrics import RelevancePolicy
from poolkit.relevance_model import TfidfIndex
from poolkit.simulation import OracleJudge, Simulator

from .synthcol import build_synth_collection


@pytest.fixture(scope="session")
def mini_collection():
    """Small and fast: 90 docs, 4 topics, depth-25 runs."""
    return build_synth_collection(n_docs=90, n_topics=4, seed=11, run_depth=25,
                                  flooded_topic=False, barren_topic=False)


@pytest.fixture(scope="session")
def mini_sim(mini_collection):
    col = mini_collection
    features = TfidfIndex({d: col.corpus.text_of(d) for d in col.corpus})
    sim = Simulator(
        runs=col.runs,
        queries=col.topics,
        sparse_qrels=col.sparse,
        features=features,
        candidates=col.corpus.ids(),
        policy=RelevancePolicy.document(),
        session_config=SessionConfig(first_batch=10),
    )
    return sim, OracleJudge(col.oracle)


@pytest.fixture(scope="session")
def desk_collection():
    """The desk-scale stability fixture: 1,000 docs, 20 topics, 5 runs."""
    return build_synth_collection(n_docs=1000, n_topics=20, seed=7, run_depth=100)


@pytest.fixture(scope="session")
def desk_sim(desk_collection):
    col = desk_collection
    features = TfidfIndex({d: col.corpus.text_of(d) for d in col.corpus})
    sim = Simulator(
        runs=col.runs,
        queries=col.topics,
        sparse_qrels=col.sparse,
        features=features,
        candidates=col.corpus.ids(),
        policy=RelevancePolicy.document(),
        session_config=SessionConfig(),
    )
    return sim, OracleJudge(col.oracle)


@pytest.fixture(scope="session")
def mini_files(mini_collection, tmp_path_factory):
    out = tmp_path_factory.mktemp("mini")
    return mini_collection.write(out)
