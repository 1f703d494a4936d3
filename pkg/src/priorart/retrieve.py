"""Whole-document retrieval under two probabilistic models.

KL scorer (unigram language model, Jelinek-Mercer smoothing, default
``lam=0.4``), rank-equivalent to negative KL divergence:

    score(q, d) = sum_t P(t|q) * log((1-lam)*tf(t,d)/|d| + lam*ctf(t)/|C|)

summed over query terms with ctf > 0; for |d| = 0 the smoothed background
term alone applies.

BM25 scorer (defaults ``k1=1.5, b=1.5, k3=3``):

    score(q, d) = sum_t idf(t) * tf*(k1+1)/(tf + k1*(1-b+b*|d|/avgdl))
                            * qtf*(k3+1)/(k3+qtf)

with ``idf(t) = log((N-df+0.5)/(df+0.5))`` floored at 0.  ``b=1.5`` exceeds
the conventional [0,1] range; it is honored as the default and exposed as
configuration.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Set, Tuple

from .errors import ConfigError, EmptyQueryError
from .index import TermIndex


@dataclass
class Query:
    topic_id: str
    terms: Counter
    analyzer_kind: str

    @property
    def size(self) -> int:
        return sum(self.terms.values())


@dataclass
class RankedList:
    """Ordered (patent_id, score) results for one topic from one model."""

    topic_id: str
    model_id: str
    entries: List[Tuple[str, float]]
    normalized: Optional[List[Tuple[str, float]]] = None

    def ids(self) -> List[str]:
        return [pid for pid, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def score_kl(query: Query, ordinal: int, index: TermIndex, lam: float = 0.4) -> float:
    """Smoothed query log-likelihood of one document (see module docstring)."""
    if not query.terms:
        raise EmptyQueryError(f"empty query for topic {query.topic_id}")
    qlen = query.size
    dlen = index.doc_length[ordinal]
    clen = index.collection_length
    score = 0.0
    for term, qtf in query.terms.items():
        ctf = index.collection_tf.get(term, 0)
        if ctf == 0:
            continue
        p_ml = 0.0
        if dlen > 0:
            tf = _tf_in_doc(index, term, ordinal)
            p_ml = tf / dlen
        p = (1.0 - lam) * p_ml + lam * ctf / clen
        score += (qtf / qlen) * math.log(p)
    return score


def score_bm25(
    query: Query,
    ordinal: int,
    index: TermIndex,
    k1: float = 1.5,
    b: float = 1.5,
    k3: float = 3.0,
) -> float:
    """Okapi weighting of one document (see module docstring)."""
    if not query.terms:
        raise EmptyQueryError(f"empty query for topic {query.topic_id}")
    n_docs = index.n_docs
    avgdl = index.collection_length / n_docs if n_docs else 0.0
    dlen = index.doc_length[ordinal]
    score = 0.0
    for term, qtf in query.terms.items():
        df = index.doc_freq.get(term, 0)
        if df == 0:
            continue
        idf = math.log((n_docs - df + 0.5) / (df + 0.5))
        if idf <= 0.0:
            continue
        tf = _tf_in_doc(index, term, ordinal)
        if tf == 0:
            continue
        norm = tf + k1 * (1.0 - b + b * dlen / avgdl)
        score += idf * (tf * (k1 + 1.0) / norm) * (qtf * (k3 + 1.0) / (k3 + qtf))
    return score


def _tf_in_doc(index: TermIndex, term: str, ordinal: int) -> int:
    plist = index.postings.get(term)
    if not plist:
        return 0
    # postings are sorted by ordinal; binary search
    lo, hi = 0, len(plist) - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        o, tf = plist[mid]
        if o == ordinal:
            return tf
        if o < ordinal:
            lo = mid + 1
        else:
            hi = mid - 1
    return 0


def query_from_terms(topic_id: str, terms: Counter, analyzer_kind: str) -> Query:
    return Query(topic_id=topic_id, terms=Counter(terms), analyzer_kind=analyzer_kind)


def retrieve(
    query: Query,
    index: TermIndex,
    model: str,
    working_set: Optional[Set[str]] = None,
    cutoff: int = 1000,
    model_id: Optional[str] = None,
    kl_lambda: float = 0.4,
    bm25_k1: float = 1.5,
    bm25_b: float = 1.5,
    bm25_k3: float = 3.0,
) -> RankedList:
    """Score the candidate documents and return the ranked cutoff.

    Candidates are the union of the query terms' postings, optionally
    intersected with the working set.  The topic patent itself is always
    excluded; ties break by ascending patent id.
    """
    if query.analyzer_kind != index.analyzer_kind:
        raise ConfigError(
            f"query analyzed as {query.analyzer_kind!r} cannot run against "
            f"a {index.analyzer_kind!r} index"
        )
    if not query.terms:
        raise EmptyQueryError(f"empty query for topic {query.topic_id}")
    candidates: Set[int] = set()
    for term in query.terms:
        for ordinal, _ in index.postings.get(term, ()):
            candidates.add(ordinal)
    scored = []
    for ordinal in candidates:
        pid = index.doc_ids[ordinal]
        if pid == query.topic_id:
            continue
        if working_set is not None and pid not in working_set:
            continue
        if model == "kl":
            s = score_kl(query, ordinal, index, lam=kl_lambda)
        elif model == "bm25":
            s = score_bm25(query, ordinal, index, k1=bm25_k1, b=bm25_b, k3=bm25_k3)
        else:
            raise ValueError(f"unknown retrieval model {model!r}")
        scored.append((pid, s))
    scored.sort(key=lambda e: (-e[1], e[0]))
    return RankedList(
        topic_id=query.topic_id,
        model_id=model_id or f"{model}-{index.analyzer_kind}",
        entries=scored[: max(cutoff, 0)],
    )


def write_run(lists: Iterable[RankedList], path) -> None:
    """Write runs in TREC format: ``topic Q0 doc rank score model``."""
    with open(path, "w", encoding="utf-8") as fh:
        for ranked in lists:
            for rank, (pid, score) in enumerate(ranked.entries, start=1):
                fh.write(
                    f"{ranked.topic_id} Q0 {pid} {rank} {float(score)!r} {ranked.model_id}\n"
                )


def read_run(path) -> Dict[str, RankedList]:
    """Read a TREC run file back into per-topic ranked lists."""
    lists: Dict[str, RankedList] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            topic_id, _, pid, _, score, model_id = parts
            ranked = lists.setdefault(topic_id, RankedList(topic_id, model_id, []))
            ranked.entries.append((pid, float(score)))
    return lists
