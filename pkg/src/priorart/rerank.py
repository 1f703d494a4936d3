"""Metadata-driven re-ranking of the merged result list.

A regressor maps citation/class/name features to a boost ``s`` (clamped at
0); each entry is rescored ``w' = w * (s + 1)``, the list re-sorted and cut
at rank 1000.  Training targets are the topic's top merged score for
relevant documents and 0 otherwise, with the 20 highest-ranked non-relevant
results as negatives.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from . import regress
from .corpus import CorpusStore, PatentRecord
from .errors import FitError
from .evaluate import Qrels
from .retrieve import RankedList

FEATURE_NAMES = (
    "cited_in_description",
    "n_common_ecla",
    "n_common_ipc",
    "p_cite_ipc",
    "p_cite_results",
    "same_applicant",
    "frac_common_inventors",
)


@dataclass
class RerankFeatures:
    cited_in_description: bool
    n_common_ecla: int
    n_common_ipc: int
    p_cite_ipc: float
    p_cite_results: float
    same_applicant: bool
    frac_common_inventors: float

    def encode(self) -> List[float]:
        return [
            1.0 if self.cited_in_description else 0.0,
            float(self.n_common_ecla),
            float(self.n_common_ipc),
            self.p_cite_ipc,
            self.p_cite_results,
            1.0 if self.same_applicant else 0.0,
            self.frac_common_inventors,
        ]


def _raw_citation_counts(
    topic: PatentRecord, result_ids: Sequence[str], store: CorpusStore
) -> Tuple[Dict[str, int], Dict[str, int]]:
    """In-degree of each candidate from the topic's IPC peers / the result set."""
    ipc_peers: Set[str] = set()
    for c in topic.ipc_classes:
        ipc_peers |= store.by_ipc.get(c, set())
    result_set = set(result_ids)
    from_ipc = {}
    from_results = {}
    for pid in result_ids:
        citers = store.citers(pid)
        from_ipc[pid] = len(citers & ipc_peers)
        from_results[pid] = len(citers & result_set)
    return from_ipc, from_results


def extract_rerank_features_batch(
    topic: PatentRecord,
    result_ids: Sequence[str],
    store: CorpusStore,
    use_citations: bool = True,
) -> Dict[str, RerankFeatures]:
    """Features for every candidate of one topic.

    The two citation-probability features are normalized by the maximum raw
    count over the result set (0 when that maximum is 0).
    """
    from_ipc, from_results = _raw_citation_counts(topic, result_ids, store)
    max_ipc = max(from_ipc.values(), default=0)
    max_res = max(from_results.values(), default=0)
    cited = set(topic.cited_ids) if use_citations else set()
    topic_ecla = set(topic.ecla_classes)
    topic_ipc = set(topic.ipc_classes)
    topic_applicants = set(topic.applicants)
    topic_inventors = set(topic.inventors)
    out = {}
    for pid in result_ids:
        cand = store.get(pid)
        common_inv = len(topic_inventors & set(cand.inventors))
        out[pid] = RerankFeatures(
            cited_in_description=pid in cited,
            n_common_ecla=len(topic_ecla & set(cand.ecla_classes)),
            n_common_ipc=len(topic_ipc & set(cand.ipc_classes)),
            p_cite_ipc=from_ipc[pid] / max_ipc if max_ipc else 0.0,
            p_cite_results=from_results[pid] / max_res if max_res else 0.0,
            same_applicant=bool(topic_applicants & set(cand.applicants)),
            frac_common_inventors=common_inv / len(topic_inventors) if topic_inventors else 0.0,
        )
    return out


def extract_rerank_features(
    topic: PatentRecord,
    candidate: str,
    store: CorpusStore,
    result_ids: Sequence[str],
    use_citations: bool = True,
) -> RerankFeatures:
    """Features for a single candidate within its result set."""
    return extract_rerank_features_batch(topic, result_ids, store, use_citations)[candidate]


def train_rerank(
    merged_runs: Mapping[str, RankedList],
    qrels: Qrels,
    store: CorpusStore,
    negatives_per_topic: int = 20,
    kind: str = regress.KERNEL_RBF,
    folds: int = 3,
    grid: Optional[Sequence[Dict[str, float]]] = None,
    max_rows: Optional[int] = None,
    citation_topics: Optional[Set[str]] = None,
) -> regress.RegressionModel:
    """Fit the boost regressor from merged training runs.

    Per topic: every relevant retrieved document is a positive with target
    equal to the topic's top merged score; the ``negatives_per_topic``
    highest-ranked non-relevant documents are negatives with target 0.
    ``max_rows`` caps the training set (topics in sorted order) to bound the
    kernel solve.  ``citation_topics`` restricts the citation feature to the
    listed topics (monolingual mode); None allows it everywhere.
    """
    X: List[List[float]] = []
    y: List[float] = []
    for topic_id in sorted(merged_runs):
        if max_rows is not None and len(y) >= max_rows:
            break
        rel = qrels.get(topic_id)
        ranked = merged_runs[topic_id]
        if not rel or not ranked.entries:
            continue
        w_max = ranked.entries[0][1]
        ids = ranked.ids()
        feats = extract_rerank_features_batch(
            store.get(topic_id),
            ids,
            store,
            citation_topics is None or topic_id in citation_topics,
        )
        negatives_left = negatives_per_topic
        for pid in ids:
            if pid in rel:
                X.append(feats[pid].encode())
                y.append(w_max)
            elif negatives_left > 0:
                X.append(feats[pid].encode())
                y.append(0.0)
                negatives_left -= 1
    if len(y) < 2:
        raise FitError(f"not enough re-ranking training rows ({len(y)})")
    return regress.fit_scaled(np.asarray(X), np.asarray(y), kind, folds, grid)


def apply_rerank(
    ranked: RankedList,
    model: Optional[regress.RegressionModel],
    store: CorpusStore,
    cutoff: int = 1000,
    use_citations: bool = True,
) -> RankedList:
    """Rescore ``w' = w * (s + 1)`` with ``s = max(0, prediction)`` and re-sort.

    ``model=None`` behaves as the zero model: the input order and scores pass
    through, truncated at the cutoff.
    """
    if not ranked.entries:
        return RankedList(ranked.topic_id, ranked.model_id, [])
    if model is None:
        entries = list(ranked.entries)
    else:
        ids = ranked.ids()
        feats = extract_rerank_features_batch(
            store.get(ranked.topic_id), ids, store, use_citations
        )
        encoded = np.asarray([feats[pid].encode() for pid in ids])
        boosts = np.maximum(model.predict(encoded), 0.0)
        entries = [
            (pid, float(w * (s + 1.0))) for (pid, w), s in zip(ranked.entries, boosts)
        ]
    entries.sort(key=lambda e: (-e[1], e[0]))
    return RankedList(ranked.topic_id, ranked.model_id, entries[:cutoff])


def write_feature_dump(
    rows: Sequence[Tuple[str, str, RerankFeatures]], path
) -> None:
    """Audit CSV of extracted features: topic_id, candidate, f1..f7."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topic_id", "candidate"] + list(FEATURE_NAMES))
        for topic_id, pid, f in rows:
            writer.writerow([topic_id, pid] + [repr(v) for v in f.encode()])
