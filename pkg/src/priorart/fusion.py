"""Regression-based merging of the per-model ranked lists.

Each retrieval model gets a confidence regressor trained on query-derived
features (f1 language, f2 query size, f3 working-set size, f4/f5 min and max
raw score, f6 score range, f7 IPC trunk, f8 IPC class, f9 mean phrase word
count for phrase models).  The per-topic target is the model's observed
average precision.  Merged scores are the confidence-weighted sums of
min-max-normalized scores; documents missing from a model's list contribute
0 for that model.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from . import regress
from .corpus import CorpusStore, PatentRecord
from .errors import FitError
from .evaluate import Qrels, average_precision
from .retrieve import RankedList
from .workingset import WorkingSet

LANG_CATEGORIES = ("en", "fr", "de")
TRUNK_CATEGORIES = tuple("ABCDEFGH")


def normalize_scores(ranked: RankedList) -> RankedList:
    """Shift the minimum score to 0 and scale the maximum to 1.

    A degenerate list (all scores equal) maps to all zeros: a model that
    cannot discriminate contributes nothing.  Empty lists stay empty.
    """
    if not ranked.entries:
        return RankedList(ranked.topic_id, ranked.model_id, [])
    values = [s for _, s in ranked.entries]
    lo, hi = min(values), max(values)
    if hi == lo:
        entries = [(pid, 0.0) for pid, _ in ranked.entries]
    else:
        entries = [(pid, (s - lo) / (hi - lo)) for pid, s in ranked.entries]
    return RankedList(ranked.topic_id, ranked.model_id, entries)


@dataclass
class MergeFeatures:
    language: str
    query_size: int
    working_set_size: int
    min_score: float
    max_score: float
    score_range: float
    ipc_trunk: str
    ipc_class: str
    mean_phrase_words: Optional[float] = None


@dataclass
class FeatureSchema:
    """Fixed encoding layout so train and predict vectors line up.

    Categorical features are one-hot encoded; unseen categories encode to
    all-zero blocks.  ``with_phrase_stat`` adds the f9 slot used by phrase
    models only.
    """

    ipc_classes: Tuple[str, ...]
    with_phrase_stat: bool

    def encode(self, f: MergeFeatures) -> List[float]:
        vec = [1.0 if f.language == lang else 0.0 for lang in LANG_CATEGORIES]
        vec.append(float(f.query_size))
        vec.append(float(f.working_set_size))
        vec.extend([f.min_score, f.max_score, f.score_range])
        vec.extend(1.0 if f.ipc_trunk == t else 0.0 for t in TRUNK_CATEGORIES)
        vec.extend(1.0 if f.ipc_class == c else 0.0 for c in self.ipc_classes)
        if self.with_phrase_stat:
            vec.append(float(f.mean_phrase_words or 0.0))
        return vec

    def to_obj(self) -> dict:
        return {"ipc_classes": list(self.ipc_classes), "with_phrase_stat": self.with_phrase_stat}

    @classmethod
    def from_obj(cls, obj: dict) -> "FeatureSchema":
        return cls(tuple(obj["ipc_classes"]), bool(obj["with_phrase_stat"]))


def schema_for(store: CorpusStore, model_id: str) -> FeatureSchema:
    classes = sorted({c[:3] for rec in store.records.values() for c in rec.ipc_classes})
    return FeatureSchema(tuple(classes), with_phrase_stat="phrase" in model_id)


def extract_merge_features(
    topic: PatentRecord,
    model_id: str,
    ranked: RankedList,
    working_set: Optional[WorkingSet],
    query_size: int,
    mean_phrase_words: Optional[float] = None,
) -> MergeFeatures:
    scores = [s for _, s in ranked.entries]
    lo = min(scores) if scores else 0.0
    hi = max(scores) if scores else 0.0
    ws_size = working_set.size if working_set is not None and working_set.active else 0
    first_ipc = topic.ipc_classes[0] if topic.ipc_classes else ""
    return MergeFeatures(
        language=topic.language,
        query_size=query_size,
        working_set_size=ws_size,
        min_score=lo,
        max_score=hi,
        score_range=hi - lo,
        ipc_trunk=first_ipc[:1],
        ipc_class=first_ipc[:3],
        mean_phrase_words=mean_phrase_words if "phrase" in model_id else None,
    )


@dataclass
class TopicContext:
    """Per-topic inputs the feature extractor needs besides the ranked list."""

    record: PatentRecord
    working_set: Optional[WorkingSet]
    query_sizes: Dict[str, int]
    mean_phrase_words: Optional[float] = None

    def query_size_for(self, model_id: str) -> int:
        # model ids look like "kl-lemma-en"; the analyzer is the tail
        analyzer = model_id.split("-", 1)[1] if "-" in model_id else model_id
        return self.query_sizes.get(analyzer, 0)


def train_merge(
    contexts: Mapping[str, TopicContext],
    runs_per_model: Mapping[str, Mapping[str, RankedList]],
    qrels: Qrels,
    store: CorpusStore,
    kind: str = regress.KERNEL_RBF,
    folds: int = 3,
    grid: Optional[Sequence[Dict[str, float]]] = None,
) -> Tuple[Dict[str, regress.RegressionModel], Dict[str, FeatureSchema]]:
    """Fit one confidence regressor per retrieval model.

    The target for (topic, model) is the average precision of that model's
    list under the supplied judgments.
    """
    models: Dict[str, regress.RegressionModel] = {}
    schemas: Dict[str, FeatureSchema] = {}
    for model_id in sorted(runs_per_model):
        runs = runs_per_model[model_id]
        schema = schema_for(store, model_id)
        X, y = [], []
        for topic_id in sorted(runs):
            rel = qrels.get(topic_id)
            ctx = contexts.get(topic_id)
            if not rel or ctx is None:
                continue
            feats = extract_merge_features(
                ctx.record,
                model_id,
                runs[topic_id],
                ctx.working_set,
                ctx.query_size_for(model_id),
                ctx.mean_phrase_words,
            )
            X.append(schema.encode(feats))
            y.append(average_precision(runs[topic_id].ids(), set(rel)))
        if len(X) < 2:
            raise FitError(f"model {model_id}: need at least 2 judged topics, got {len(X)}")
        models[model_id] = regress.fit_scaled(np.asarray(X), np.asarray(y), kind, folds, grid)
        schemas[model_id] = schema
    return models, schemas


def predict_confidence(
    model: regress.RegressionModel, schema: FeatureSchema, features: MergeFeatures
) -> float:
    """Regressor output clamped at 0: negative evidence never inverts a model."""
    return max(0.0, model.predict_one(schema.encode(features)))


def merge(
    topic_id: str,
    normalized_lists: Mapping[str, RankedList],
    confidences: Mapping[str, float],
    cutoff: int = 1000,
    model_id: str = "merged",
) -> RankedList:
    """Confidence-weighted linear combination of normalized scores."""
    scores: Dict[str, float] = {}
    for mid in sorted(normalized_lists):
        c = confidences.get(mid, 0.0)
        for pid, w in normalized_lists[mid].entries:
            scores[pid] = scores.get(pid, 0.0) + c * w
    entries = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return RankedList(topic_id=topic_id, model_id=model_id, entries=entries[:cutoff])


def build_validation_set(
    store: CorpusStore,
    n: int = 4131,
    min_citations: int = 4,
    exclude: Optional[Set[str]] = None,
) -> Tuple[List[str], Qrels]:
    """Pick supplementary training topics from the collection itself.

    Topics are patents citing at least ``min_citations`` in-collection
    documents, sampled to approximate the collection's language and IPC-class
    distributions (largest-remainder quotas per (language, class) bucket).
    Their citations become the judgments, restricted to documents published
    no later than the topic's priority date.  ``exclude`` removes ids (the
    evaluation topics) from candidacy.
    """

    def bucket_of(rec: PatentRecord) -> Tuple[str, str]:
        first_ipc = rec.ipc_classes[0][:3] if rec.ipc_classes else ""
        return rec.language, first_ipc

    collection_counts: Dict[Tuple[str, str], int] = {}
    for pid in store.order:
        b = bucket_of(store.get(pid))
        collection_counts[b] = collection_counts.get(b, 0) + 1

    excluded = exclude or set()
    candidates: Dict[Tuple[str, str], List[str]] = {}
    n_candidates = 0
    for pid in store.order:
        if pid not in excluded and len(store.cited(pid)) >= min_citations:
            candidates.setdefault(bucket_of(store.get(pid)), []).append(pid)
            n_candidates += 1

    if n_candidates <= n:
        if n_candidates < n:
            print(
                f"warning: only {n_candidates} candidates with >= {min_citations} "
                f"citations, requested {n}"
            )
        chosen = sorted(pid for pids in candidates.values() for pid in pids)
    else:
        total = sum(collection_counts.values())
        quotas: Dict[Tuple[str, str], float] = {
            b: n * collection_counts[b] / total for b in sorted(collection_counts)
        }
        chosen = []
        remainders = []
        for b in sorted(quotas):
            take = min(int(quotas[b]), len(candidates.get(b, [])))
            chosen.extend(candidates.get(b, [])[:take])
            remainders.append((quotas[b] - int(quotas[b]), b, take))
        # top up by largest remainder, then by any leftover candidates
        remainders.sort(key=lambda r: (-r[0], r[1]))
        for _, b, take in remainders:
            if len(chosen) >= n:
                break
            pool = candidates.get(b, [])
            if take < len(pool):
                chosen.append(pool[take])
        if len(chosen) < n:
            leftovers = sorted(set(p for ps in candidates.values() for p in ps) - set(chosen))
            chosen.extend(leftovers[: n - len(chosen)])
        chosen = sorted(chosen[:n])

    qrels: Qrels = {}
    for pid in chosen:
        rec = store.get(pid)
        valid = {
            c: 1
            for c in store.cited(pid)
            if store.publication_date(c) <= rec.priority_date
        }
        if valid:
            qrels[pid] = valid
    return [pid for pid in chosen if pid in qrels], qrels


def save_merge_models(
    models: Mapping[str, regress.RegressionModel],
    schemas: Mapping[str, FeatureSchema],
    path,
) -> None:
    obj = {
        mid: {"model": json.loads(models[mid].to_json()), "schema": schemas[mid].to_obj()}
        for mid in sorted(models)
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)


def load_merge_models(path) -> Tuple[Dict[str, regress.RegressionModel], Dict[str, FeatureSchema]]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    models = {mid: regress.RegressionModel.from_json(json.dumps(o["model"])) for mid, o in obj.items()}
    schemas = {mid: FeatureSchema.from_obj(o["schema"]) for mid, o in obj.items()}
    return models, schemas


def write_confidences(rows: Sequence[Tuple[str, str, float]], path) -> None:
    """Audit CSV: topic_id, model_id, confidence."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topic_id", "model_id", "confidence"])
        for topic_id, model_id, conf in rows:
            writer.writerow([topic_id, model_id, repr(conf)])
