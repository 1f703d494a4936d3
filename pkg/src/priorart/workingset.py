"""Per-topic candidate pools from citation, priority, name and class metadata.

The pool grows through nine ordered steps (citations, both directions of the
citation graph, priority links, applicant+inventor matches, a second
citation-graph pass, ECLA classes, co-occurring ECLA classes and two
size-capped IPC steps).  If the final pool is too small or too large it is
marked inactive and retrieval falls back to the whole collection.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .corpus import CorpusStore
from .errors import EvalError
from .retrieve import RankedList

STEP_LABELS = (
    "1.cited",
    "2.up-citation",
    "3.down-citation",
    "4.priority",
    "5.applicant-inventor",
    "2+3.second-iteration",
    "6.same-ecla",
    "7.cooccurring-ecla",
    "8.same-applicant-ipc",
    "9.same-ipc",
)


@dataclass
class WorkingSet:
    topic_id: str
    members: frozenset
    step_trace: List[Tuple[str, int]]
    active: bool
    # per-step count of covered relevant documents, filled when the
    # relevant set is supplied (audit/recall-ladder support)
    step_relevant: Optional[List[int]] = None

    @property
    def size(self) -> int:
        return len(self.members)


def ecla_cooccurrence(store: CorpusStore, top_k: Optional[int] = None) -> Dict[str, List[str]]:
    """For each ECLA class, co-assigned classes ranked by shared-patent count.

    Ties break by ascending class code; ``top_k`` truncates each list.
    """
    counts: Dict[str, Counter] = {}
    for pid in store.order:
        classes = sorted(set(store.get(pid).ecla_classes))
        for i, c1 in enumerate(classes):
            for c2 in classes[i + 1 :]:
                counts.setdefault(c1, Counter())[c2] += 1
                counts.setdefault(c2, Counter())[c1] += 1
    ranked = {}
    for cls in sorted(counts):
        ordered = sorted(counts[cls].items(), key=lambda kv: (-kv[1], kv[0]))
        names = [c for c, _ in ordered]
        ranked[cls] = names[:top_k] if top_k is not None else names
    return ranked


def build_working_set(
    topic_id: str,
    store: CorpusStore,
    lower: int = 10,
    upper: int = 10000,
    cooccurrence: Optional[Dict[str, List[str]]] = None,
    cooccur_k: int = 2,
    before_date: Optional[str] = None,
    relevant: Optional[Set[str]] = None,
    use_citations: bool = True,
) -> WorkingSet:
    """Apply the nine construction steps for one topic.

    ``before_date`` enables the temporal filter used when the topic doubles
    as a training example: no member may have been first published after that
    date.  ``relevant`` switches on per-step recall accounting.
    ``use_citations`` exists for the monolingual mode, where description
    citations of foreign-language topics are ignored.
    """
    topic = store.get(topic_id)
    members: Set[str] = set()
    trace: List[Tuple[str, int]] = []
    covered: List[int] = []

    def admissible(pid: str) -> bool:
        if pid == topic_id or pid not in store:
            return False
        if before_date is not None and store.publication_date(pid) > before_date:
            return False
        return True

    def admit(candidates: Iterable[str]) -> None:
        members.update(pid for pid in candidates if admissible(pid))

    def record(label: str) -> None:
        trace.append((label, len(members)))
        if relevant is not None:
            covered.append(sum(1 for r in relevant if r in members))

    def up_citation() -> Set[str]:
        out: Set[str] = set()
        for m in members:
            out |= store.citers(m)
        return out

    def down_citation() -> Set[str]:
        out: Set[str] = set()
        for m in members:
            out.update(store.cited(m))
        return out

    # 1. patents cited in the topic description, restricted to the collection
    if use_citations:
        admit(topic.cited_ids)
    record(STEP_LABELS[0])

    # 2. up the citation tree / 3. down the citation tree
    admit(up_citation())
    record(STEP_LABELS[1])
    admit(down_citation())
    record(STEP_LABELS[2])

    # 4. shared priority documents, and citers of priority documents
    priorities: Set[str] = set(topic.priority_ids)
    for m in members:
        priorities.update(store.get(m).priority_ids)
    linked: Set[str] = set()
    for p in priorities:
        linked |= store.by_priority.get(p, set())
        linked |= store.citers(p)
    admit(linked)
    record(STEP_LABELS[3])

    # 5. same applicant and at least one common inventor
    same_applicant: Set[str] = set()
    for a in topic.applicants:
        same_applicant |= store.by_applicant.get(a, set())
    same_inventor: Set[str] = set()
    for i in topic.inventors:
        same_inventor |= store.by_inventor.get(i, set())
    admit(same_applicant & same_inventor)
    record(STEP_LABELS[4])

    # second pass of steps 2 and 3
    admit(up_citation())
    admit(down_citation())
    record(STEP_LABELS[5])

    # 6. members of the topic's ECLA classes
    if topic.ecla_classes:
        for c in topic.ecla_classes:
            admit(store.by_ecla.get(c, set()))
    record(STEP_LABELS[6])

    # 7. members of the most frequently co-occurring ECLA classes
    if topic.ecla_classes:
        table = cooccurrence if cooccurrence is not None else ecla_cooccurrence(store)
        for c in topic.ecla_classes:
            for other in table.get(c, [])[:cooccur_k]:
                admit(store.by_ecla.get(other, set()))
    record(STEP_LABELS[7])

    # 8. same applicant and same IPC class, only while below the cap
    same_ipc: Set[str] = set()
    for c in topic.ipc_classes:
        same_ipc |= store.by_ipc.get(c, set())
    if len(members) < upper:
        admit(same_applicant & same_ipc)
    record(STEP_LABELS[8])

    # 9. same IPC class, only while below the cap
    if len(members) < upper:
        admit(same_ipc)
    record(STEP_LABELS[9])

    active = lower <= len(members) <= upper
    return WorkingSet(
        topic_id=topic_id,
        members=frozenset(members),
        step_trace=trace,
        active=active,
        step_relevant=covered if relevant is not None else None,
    )


def cited_patents_run(topic_id: str, store: CorpusStore) -> RankedList:
    """Baseline run listing the topic's in-collection description citations.

    First-mention order with uniformly descending synthetic scores.
    """
    cited = [pid for pid in store.cited(topic_id) if pid in store]
    n = len(cited)
    entries = [(pid, (n - i) / n) for i, pid in enumerate(cited)]
    return RankedList(topic_id=topic_id, model_id="cited-baseline", entries=entries)


def micro_recall(
    working_sets: Iterable[WorkingSet], qrels: Mapping[str, Mapping[str, int]]
) -> float:
    """Pooled coverage of relevant documents over all topics with judgments."""
    if not qrels:
        raise EvalError("empty qrels")
    covered = 0
    total = 0
    for ws in working_sets:
        rel = qrels.get(ws.topic_id)
        if not rel:
            continue
        total += len(rel)
        covered += sum(1 for r in rel if r in ws.members)
    if total == 0:
        raise EvalError("no topic in the working sets has relevance judgments")
    return covered / total


def save_working_sets(working_sets: Sequence[WorkingSet], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ws in working_sets:
            for pid in sorted(ws.members):
                fh.write(f"{ws.topic_id}\t{pid}\n")


def load_working_sets(path) -> Dict[str, Set[str]]:
    out: Dict[str, Set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                topic_id, pid = line.split("\t")
                out.setdefault(topic_id, set()).add(pid)
    return out


def save_step_traces(working_sets: Sequence[WorkingSet], path) -> None:
    """Audit CSV of the per-step ladder: one row per (topic, step)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topic_id", "step", "size", "relevant_covered", "active"])
        for ws in working_sets:
            for i, (label, size) in enumerate(ws.step_trace):
                rel = ws.step_relevant[i] if ws.step_relevant else ""
                writer.writerow([ws.topic_id, label, size, rel, int(ws.active)])
