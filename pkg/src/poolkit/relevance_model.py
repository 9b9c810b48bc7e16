"""Active-learning relevance scorer: rank unjudged docs by estimated relevance.

The default scorer is a regularized logistic regression over corpus tf-idf
features, with the topic's query text always folded in as a pseudo-positive
example. With no judgments yet this degrades to ranking by tf-idf similarity
to the query (the cold start). Any object with the same ``fit`` signature can
stand in for LogisticScorer.

Everything here is deterministic: a fitted model is a plain coefficient map,
and selection order is a pure function of (model, candidate set, seed).
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from sklearn.linear_model import LogisticRegression

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop empties. No stemming."""
    return _TOKEN_RE.findall(text.lower())


def stable_seed(*parts) -> int:
    """Platform-independent 63-bit seed from the given parts."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class RelevanceModel:
    """A linear scorer: sparse term coefficients plus a bias."""

    coefficients: Mapping[str, float]
    bias: float
    snapshot_id: str


class TfidfIndex:
    """Corpus-wide tf-idf features with L2-normalized document vectors.

    Built once per corpus and shared read-only; rows are keyed by doc id.
    """

    def __init__(self, texts: Mapping[str, str]):
        doc_ids = sorted(texts)
        df: dict[str, int] = {}
        tokenized: list[list[str]] = []
        for doc_id in doc_ids:
            tokens = tokenize(texts[doc_id])
            tokenized.append(tokens)
            for term in set(tokens):
                df[term] = df.get(term, 0) + 1
        self.doc_ids = doc_ids
        self._row = {doc_id: i for i, doc_id in enumerate(doc_ids)}
        self.vocab = {term: i for i, term in enumerate(sorted(df))}
        n = max(len(doc_ids), 1)
        self.idf = {term: np.log((1 + n) / (1 + df[term])) + 1.0 for term in self.vocab}
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for tokens in tokenized:
            counts: dict[str, int] = {}
            for t in tokens:
                counts[t] = counts.get(t, 0) + 1
            row = sorted((self.vocab[t], c * self.idf[t]) for t, c in counts.items())
            norm = np.sqrt(sum(w * w for _, w in row)) or 1.0
            for col, w in row:
                indices.append(col)
                data.append(w / norm)
            indptr.append(len(indices))
        self.matrix = sparse.csr_matrix(
            (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(len(doc_ids), len(self.vocab)),
        )

    def vector(self, text: str) -> dict[str, float]:
        """L2-normalized tf-idf vector of arbitrary text, vocab terms only."""
        counts: dict[str, int] = {}
        for t in tokenize(text):
            if t in self.vocab:
                counts[t] = counts.get(t, 0) + 1
        weights = {t: c * self.idf[t] for t, c in counts.items()}
        norm = np.sqrt(sum(w * w for w in weights.values()))
        if norm == 0:
            return {}
        return {t: w / norm for t, w in weights.items()}

    def _sparse_row(self, vec: Mapping[str, float]) -> sparse.csr_matrix:
        cols = sorted(self.vocab[t] for t in vec)
        data = [vec[t] for t in sorted(vec, key=self.vocab.get)]
        return sparse.csr_matrix((data, ([0] * len(cols), cols)), shape=(1, len(self.vocab)))

    def rows(self, doc_ids: Sequence[str]) -> sparse.csr_matrix:
        return self.matrix[[self._row[d] for d in doc_ids]]

    def scores(self, model: RelevanceModel, doc_ids: Sequence[str]) -> np.ndarray:
        w = np.zeros(len(self.vocab))
        for term, coef in model.coefficients.items():
            col = self.vocab.get(term)
            if col is not None:
                w[col] = coef
        return self.rows(doc_ids) @ w + model.bias


class LogisticScorer:
    """Default scorer: L2-regularized logistic regression on tf-idf.

    The query text is always added as a pseudo-positive, so a model exists
    even before the first judgment.
    """

    def __init__(self, features: TfidfIndex, c: float = 1.0):
        self.features = features
        self.c = c

    def fit(self, positives: Sequence[str], negatives: Sequence[str],
            prior_query: str) -> RelevanceModel:
        if not positives and not negatives and not prior_query:
            raise ValueError("need judged docs or a prior query to fit")
        snapshot = hashlib.sha256(
            "\x1f".join([",".join(sorted(positives)), ",".join(sorted(negatives)),
                         prior_query]).encode("utf-8")
        ).hexdigest()[:16]
        query_vec = self.features.vector(prior_query) if prior_query else {}
        if not negatives:
            return self._centroid(list(positives), query_vec, snapshot)
        rows = [self.features.rows(list(positives) + list(negatives))]
        labels = [1] * len(positives) + [0] * len(negatives)
        if query_vec:
            rows.append(self.features._sparse_row(query_vec))
            labels.append(1)
        if 1 not in labels:
            return self._centroid([], query_vec, snapshot)
        x = sparse.vstack(rows) if len(rows) > 1 else rows[0]
        clf = LogisticRegression(C=self.c, solver="liblinear", max_iter=1000, random_state=0)
        clf.fit(x, np.array(labels))
        coef = clf.coef_[0]
        inv_vocab = {i: t for t, i in self.features.vocab.items()}
        nonzero = {inv_vocab[int(i)]: float(coef[i]) for i in np.nonzero(coef)[0]}
        return RelevanceModel(nonzero, float(clf.intercept_[0]), snapshot)

    def _centroid(self, positives: list[str], query_vec: Mapping[str, float],
                  snapshot: str) -> RelevanceModel:
        acc: dict[str, float] = dict(query_vec)
        if positives:
            mat = self.features.rows(positives)
            mean = np.asarray(mat.mean(axis=0)).ravel()
            inv_vocab = {i: t for t, i in self.features.vocab.items()}
            for i in np.nonzero(mean)[0]:
                term = inv_vocab[int(i)]
                acc[term] = acc.get(term, 0.0) + float(mean[i])
        return RelevanceModel(acc, 0.0, snapshot)


def select_next(model: RelevanceModel, unjudged: Iterable[str], rng_seed: int,
                features: TfidfIndex) -> list[str]:
    """Candidates by score descending; exact score ties are permuted by a
    generator seeded from rng_seed, so the order is reproducible."""
    candidates = sorted(unjudged)
    if not candidates:
        raise ValueError("candidate set is empty")
    scores = features.scores(model, candidates)
    rnd = np.random.default_rng(rng_seed)
    tiebreak = rnd.random(len(candidates))
    order = sorted(range(len(candidates)),
                   key=lambda i: (-scores[i], tiebreak[i], candidates[i]))
    return [candidates[i] for i in order]
