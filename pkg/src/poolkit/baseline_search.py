"""Desk-scale retrieval baselines: inverted index, BM25, RM3 expansion.

Documents are indexed as title+body (passages as their text), tokenized the
same way as the relevance model: lowercase, split on non-alphanumerics, no
stemming, no stopword removal. Rankings use the canonical tie-break (score
desc, doc_id desc).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .relevance_model import tokenize
from .trec_io import Corpus, RunEntry, RunFile, TopicRecord

logger = logging.getLogger(__name__)

INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BM25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must be in [0,1], got {self.b}")


class InvertedIndex:
    """Postings sorted by doc_id, plus the statistics BM25 needs.

    Serialized layout (JSON, one object): ``format_version`` (int),
    ``doc_lengths`` (doc_id -> token count), ``postings`` (term ->
    [[doc_id, tf], ...] sorted by doc_id). Doc count and average length
    are derived on load.
    """

    def __init__(self, postings: Mapping[str, Sequence[tuple[str, int]]],
                 doc_lengths: Mapping[str, int]):
        self.postings = {t: sorted(p) for t, p in postings.items()}
        self.doc_lengths = dict(doc_lengths)
        self.doc_count = len(self.doc_lengths)
        if self.doc_count == 0:
            raise ValueError("cannot index an empty corpus")
        self.avg_doc_length = sum(self.doc_lengths.values()) / self.doc_count

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log((self.doc_count - df + 0.5) / (df + 0.5) + 1.0)

    def save(self, path) -> None:
        payload = {
            "format_version": INDEX_FORMAT_VERSION,
            "doc_lengths": self.doc_lengths,
            "postings": {t: [[d, tf] for d, tf in p] for t, p in self.postings.items()},
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "InvertedIndex":
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        version = payload.get("format_version")
        if version != INDEX_FORMAT_VERSION:
            raise ValueError(f"unsupported index format version {version!r}")
        postings = {t: [(d, int(tf)) for d, tf in p] for t, p in payload["postings"].items()}
        return cls(postings, payload["doc_lengths"])


def build_index(corpus: Corpus) -> InvertedIndex:
    if len(corpus) == 0:
        raise ValueError("cannot index an empty corpus")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for doc_id in sorted(corpus.ids()):
        tokens = tokenize(corpus.text_of(doc_id))
        doc_lengths[doc_id] = len(tokens)
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((doc_id, tf))
    return InvertedIndex(postings, doc_lengths)


def bm25_scores(index: InvertedIndex, query_weights: Mapping[str, float],
                params: BM25Params) -> dict[str, float]:
    """Weighted-query BM25: sum over terms of weight * idf * saturated tf."""
    scores: dict[str, float] = {}
    k1, b = params.k1, params.b
    for term, weight in query_weights.items():
        if weight <= 0:
            continue
        idf = index.idf(term)
        for doc_id, tf in index.postings.get(term, ()):
            norm = tf + k1 * (1 - b + b * index.doc_lengths[doc_id] / index.avg_doc_length)
            scores[doc_id] = scores.get(doc_id, 0.0) + weight * idf * tf * (k1 + 1) / norm
    return scores


def _top_k(scores: Mapping[str, float], k: int) -> list[tuple[str, float]]:
    ranked = sorted(scores.items(), key=lambda kv: kv[0], reverse=True)
    ranked.sort(key=lambda kv: kv[1], reverse=True)
    return ranked[:k]


def bm25_search(index: InvertedIndex, query: str, k: int,
                params: BM25Params = BM25Params()) -> list[tuple[str, float]]:
    """Top-k (doc_id, score) for a plain-text query."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    weights: dict[str, float] = {}
    for term in tokenize(query):
        weights[term] = weights.get(term, 0.0) + 1.0
    return _top_k(bm25_scores(index, weights, params), k)


def rm3_expand(index: InvertedIndex, query: str, fb_docs: int = 10, fb_terms: int = 10,
               mix: float = 0.5, params: BM25Params = BM25Params()) -> dict[str, float]:
    """RM3 query expansion: a feedback language model from the top fb_docs
    (retrieval-score weighted), its top fb_terms interpolated with the
    original query as mix*original + (1-mix)*expansion.

    Returns the weighted query; falls back to the original terms (with a
    warning) when nothing is retrievable.
    """
    if not 0 <= mix <= 1:
        raise ValueError(f"mix must be in [0,1], got {mix}")
    q_counts: dict[str, float] = {}
    for term in tokenize(query):
        q_counts[term] = q_counts.get(term, 0.0) + 1.0
    total_q = sum(q_counts.values())
    original = {t: c / total_q for t, c in q_counts.items()} if total_q else {}
    feedback = _top_k(bm25_scores(index, q_counts, params), fb_docs) if q_counts else []
    feedback = [(d, s) for d, s in feedback if s > 0]
    if not feedback:
        logger.warning("rm3: no retrievable feedback docs for query %r; keeping it as-is", query)
        return dict(original)
    if fb_terms == 0 or mix == 1.0:
        return dict(original)
    score_sum = sum(s for _, s in feedback)
    doc_tf: dict[str, dict[str, int]] = {}
    for doc_id, _ in feedback:
        doc_tf[doc_id] = {}
    for term, posting in index.postings.items():
        wanted = doc_tf.keys()
        for doc_id, tf in posting:
            if doc_id in wanted:
                doc_tf[doc_id][term] = tf
    expansion: dict[str, float] = {}
    for doc_id, score in feedback:
        doc_len = index.doc_lengths[doc_id]
        if doc_len == 0:
            continue
        doc_weight = score / score_sum
        for term, tf in doc_tf[doc_id].items():
            expansion[term] = expansion.get(term, 0.0) + doc_weight * tf / doc_len
    top_terms = sorted(expansion.items(), key=lambda kv: (-kv[1], kv[0]))[:fb_terms]
    mass = sum(w for _, w in top_terms)
    expansion = {t: w / mass for t, w in top_terms} if mass else {}
    combined: dict[str, float] = {t: mix * w for t, w in original.items()}
    for term, w in expansion.items():
        combined[term] = combined.get(term, 0.0) + (1 - mix) * w
    return combined


def weighted_search(index: InvertedIndex, query_weights: Mapping[str, float], k: int,
                    params: BM25Params = BM25Params()) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return _top_k(bm25_scores(index, query_weights, params), k)


def generate_candidates(index: InvertedIndex, topics: Sequence[TopicRecord], k: int,
                        params: BM25Params = BM25Params(), run_tag: str = "bm25",
                        rm3: bool = False, fb_docs: int = 10, fb_terms: int = 10,
                        mix: float = 0.5) -> RunFile:
    """A rerank-candidate run: top-k BM25 (optionally +RM3) per topic."""
    entries = []
    for topic in topics:
        if rm3:
            weights = rm3_expand(index, topic.text, fb_docs, fb_terms, mix, params)
            ranked = weighted_search(index, weights, k, params) if weights else []
        else:
            ranked = bm25_search(index, topic.text, k, params)
        for rank, (doc_id, score) in enumerate(ranked, start=1):
            entries.append(RunEntry(topic.topic_id, doc_id, rank, score, run_tag))
    return RunFile(entries, run_tag=run_tag)
