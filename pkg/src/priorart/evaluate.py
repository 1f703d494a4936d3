"""Relevance judgments and IR metrics: AP/MAP, P@k, macro recall, reports.

Qrels file format: ``topic_id 0 patent_id grade`` with grade 1 (relevant:
applicant-cited, category-A citations) or 2 (very relevant: all other
citations).  The grade filter "very" keeps only grade-2 judgments; "all"
keeps everything.
"""

from __future__ import annotations

import csv
from typing import Dict, Iterable, List, Mapping, Sequence, Set

from .errors import EvalError
from .retrieve import RankedList

Qrels = Dict[str, Dict[str, int]]


def load_qrels(path) -> Qrels:
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise EvalError(f"malformed qrels line: {line!r}")
            topic_id, _, pid, grade = parts
            qrels.setdefault(topic_id, {})[pid] = int(grade)
    return qrels


def save_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for topic_id in sorted(qrels):
            for pid in sorted(qrels[topic_id]):
                fh.write(f"{topic_id} 0 {pid} {qrels[topic_id][pid]}\n")


def filter_grade(qrels: Qrels, grade_filter: str = "all") -> Qrels:
    """Select judgment grades: "all" keeps 1 and 2, "very" keeps only 2."""
    if grade_filter == "all":
        return {t: dict(rels) for t, rels in qrels.items()}
    if grade_filter == "very":
        out = {}
        for t, rels in qrels.items():
            kept = {pid: g for pid, g in rels.items() if g >= 2}
            if kept:
                out[t] = kept
        return out
    raise EvalError(f"unknown grade filter {grade_filter!r}")


def average_precision(ranked_ids: Sequence[str], relevant: Set[str]) -> float:
    """AP with the total-relevant denominator; unretrieved documents add 0."""
    if not relevant:
        raise EvalError("average precision needs a non-empty relevant set")
    hits = 0
    total = 0.0
    for k, pid in enumerate(ranked_ids, start=1):
        if pid in relevant:
            hits += 1
            total += hits / k
    return total / len(relevant)


def precision_at_k(ranked_ids: Sequence[str], relevant: Set[str], k: int) -> float:
    """Precision among the first k ranks; short lists pad with non-relevant."""
    if k < 1:
        raise EvalError("k must be >= 1")
    hits = sum(1 for pid in ranked_ids[:k] if pid in relevant)
    return hits / k


def recall(ranked_ids: Sequence[str], relevant: Set[str]) -> float:
    if not relevant:
        raise EvalError("recall needs a non-empty relevant set")
    retrieved = set(ranked_ids)
    return sum(1 for r in relevant if r in retrieved) / len(relevant)


def mean_average_precision(
    runs: Mapping[str, RankedList], qrels: Qrels, warn: bool = False
) -> float:
    """Mean AP over topics with non-empty judgments."""
    aps = []
    for topic_id in sorted(runs):
        rel = qrels.get(topic_id)
        if not rel:
            if warn:
                print(f"warning: no judgments for topic {topic_id}, skipped")
            continue
        aps.append(average_precision(runs[topic_id].ids(), set(rel)))
    if not aps:
        raise EvalError("no topic with judgments")
    return sum(aps) / len(aps)


def macro_recall(runs: Mapping[str, RankedList], qrels: Qrels) -> float:
    """Mean of per-topic recall over topics with judgments."""
    values = []
    for topic_id in sorted(runs):
        rel = qrels.get(topic_id)
        if rel:
            values.append(recall(runs[topic_id].ids(), set(rel)))
    if not values:
        raise EvalError("no topic with judgments")
    return sum(values) / len(values)


def report(
    named_runs: Mapping[str, Mapping[str, RankedList]],
    qrels: Qrels,
    grade_filter: str = "all",
    warn: bool = True,
) -> List[Dict[str, object]]:
    """Metric rows (one per run): MAP, P@5, P@10, macro recall, topic count."""
    judged = filter_grade(qrels, grade_filter)
    if not judged:
        raise EvalError("no judgments left after grade filtering")
    rows = []
    for name in sorted(named_runs):
        runs = named_runs[name]
        aps, p5s, p10s, recalls = [], [], [], []
        for topic_id in sorted(runs):
            rel = judged.get(topic_id)
            if not rel:
                if warn:
                    print(f"warning: no judgments for topic {topic_id}, skipped")
                continue
            ids = runs[topic_id].ids()
            rel_set = set(rel)
            aps.append(average_precision(ids, rel_set))
            p5s.append(precision_at_k(ids, rel_set, 5))
            p10s.append(precision_at_k(ids, rel_set, 10))
            recalls.append(recall(ids, rel_set))
        if not aps:
            continue
        n = len(aps)
        rows.append(
            {
                "run": name,
                "topics": n,
                "map": sum(aps) / n,
                "p5": sum(p5s) / n,
                "p10": sum(p10s) / n,
                "macro_recall": sum(recalls) / n,
            }
        )
    return rows


def format_report(rows: Iterable[Mapping[str, object]]) -> str:
    """Aligned text table of report rows."""
    rows = list(rows)
    header = ["run", "topics", "MAP", "P@5", "P@10", "macro recall"]
    body = [
        [
            str(r["run"]),
            str(r["topics"]),
            f"{r['map']:.4f}",
            f"{r['p5']:.4f}",
            f"{r['p10']:.4f}",
            f"{r['macro_recall']:.4f}",
        ]
        for r in rows
    ]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    for b in body:
        lines.append("  ".join(b[i].ljust(widths[i]) for i in range(len(header))))
    return "\n".join(lines)


def write_report_csv(rows: Iterable[Mapping[str, object]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "topics", "map", "p5", "p10", "macro_recall"])
        for r in rows:
            writer.writerow(
                [r["run"], r["topics"], repr(r["map"]), repr(r["p5"]), repr(r["p10"]), repr(r["macro_recall"])]
            )
