"""Multilingual concept database: loading, concept merging, domain mapping
and concept tagging with class-based disambiguation.

Terminology file: TSV lines
``concept_id<TAB>lang<TAB>term<TAB>preferred(0|1)<TAB>domains(csv)<TAB>source``.
Domain map file: TSV lines ``ipc_prefix<TAB>domains(csv)`` where the prefix
is the 3-character class level.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Sequence, Set, Tuple

from . import analyze
from .errors import ParseError


@dataclass
class ConceptEntry:
    concept_id: int
    # (language, term, is_preferred)
    terms: List[Tuple[str, str, bool]]
    domains: Set[str]
    sources: Set[str] = field(default_factory=set)


class _UnionFind:
    def __init__(self):
        self.parent: Dict[int, int] = {}

    def find(self, x: int) -> int:
        root = x
        while self.parent.setdefault(root, root) != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the smaller id as the canonical representative
            lo, hi = (ra, rb) if ra < rb else (rb, ra)
            self.parent[hi] = lo


class TerminologyDB:
    """Merged concepts indexed for per-language longest-match lookup.

    Lookup keys are the lemmatized forms of the stored terms, so tagging
    matches morphological variants at the lemma level.
    """

    def __init__(self, concepts: Dict[int, ConceptEntry]):
        self.concepts = concepts
        # language -> lemma tuple -> sorted concept ids
        self.lookup: Dict[str, Dict[Tuple[str, ...], List[int]]] = {}
        self.max_words = 1
        for cid in sorted(concepts):
            entry = concepts[cid]
            for lang, term, _ in entry.terms:
                key = tuple(analyze.lemmatize(analyze.tokenize(term, lang)).lemmas())
                if not key:
                    continue
                self.max_words = max(self.max_words, len(key))
                bucket = self.lookup.setdefault(lang, {}).setdefault(key, [])
                if cid not in bucket:
                    bucket.append(cid)

    def __len__(self) -> int:
        return len(self.concepts)

    def domains_of(self, concept_id: int) -> Set[str]:
        return self.concepts[concept_id].domains


def load_termdb(path) -> TerminologyDB:
    """Load and merge the concept TSV.

    Two raw concepts are merged when they share at least one (language, term)
    pair and at least one domain; merging is closed transitively, so the
    resulting partition does not depend on line order.
    """
    raw: Dict[int, ConceptEntry] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise ParseError(f"terminology line {lineno}: expected 6 fields, got {len(parts)}")
            cid_s, lang, term, preferred, domains_csv, source = parts
            try:
                cid = int(cid_s)
            except ValueError:
                raise ParseError(f"terminology line {lineno}: bad concept id {cid_s!r}")
            if lang not in analyze.LANGUAGES:
                raise ParseError(f"terminology line {lineno}: unknown language {lang!r}")
            domains = {d for d in domains_csv.split(",") if d}
            if not domains:
                raise ParseError(f"terminology line {lineno}: concept {cid} has no domain")
            entry = raw.setdefault(cid, ConceptEntry(cid, [], set()))
            trip = (lang, term, preferred == "1")
            if trip not in entry.terms:
                entry.terms.append(trip)
            entry.domains |= domains
            entry.sources.add(source)

    # transitive closure of the share-a-term-and-a-domain relation
    uf = _UnionFind()
    by_term: Dict[Tuple[str, str], List[int]] = {}
    for cid in sorted(raw):
        for lang, term, _ in raw[cid].terms:
            by_term.setdefault((lang, term.lower()), []).append(cid)
    changed = True
    while changed:
        changed = False
        for cids in by_term.values():
            for i in range(len(cids)):
                for j in range(i + 1, len(cids)):
                    a, b = uf.find(cids[i]), uf.find(cids[j])
                    if a == b:
                        continue
                    if _group_domains(raw, uf, a) & _group_domains(raw, uf, b):
                        uf.union(a, b)
                        changed = True

    merged: Dict[int, ConceptEntry] = {}
    for cid in sorted(raw):
        root = uf.find(cid)
        entry = merged.setdefault(root, ConceptEntry(root, [], set()))
        for trip in raw[cid].terms:
            if trip not in entry.terms:
                entry.terms.append(trip)
        entry.domains |= raw[cid].domains
        entry.sources |= raw[cid].sources
    return TerminologyDB(merged)


def _group_domains(raw, uf, root: int) -> Set[str]:
    return set().union(*(raw[c].domains for c in raw if uf.find(c) == root))


def load_domain_map(path) -> Dict[str, FrozenSet[str]]:
    """Load the IPC-prefix (3 chars) to domain-set map."""
    out: Dict[str, FrozenSet[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"domain map line {lineno}: expected 2 fields")
            prefix, domains_csv = parts
            domains = frozenset(d for d in domains_csv.split(",") if d)
            if not domains:
                raise ParseError(f"domain map line {lineno}: prefix {prefix!r} has no domain")
            out[prefix] = domains
    return out


def patent_domains(
    patent_classes: Sequence[str], domain_map: Dict[str, FrozenSet[str]]
) -> Set[str]:
    """Domains reachable from a patent's classification codes (3-char level)."""
    domains: Set[str] = set()
    for code in patent_classes:
        domains |= domain_map.get(code[:3], frozenset())
    return domains


def tag_concepts(
    stream: analyze.TokenStream,
    patent_classes: Sequence[str],
    db: TerminologyDB,
    domain_map: Dict[str, FrozenSet[str]],
) -> Counter:
    """Tag a lemmatized stream with disambiguated concept ids.

    Longest-match lookup over the stream's lemmas; candidate concepts are
    filtered to those sharing a domain with the patent's classes.  A term is
    skipped unless exactly one candidate survives the filter.
    """
    allowed = patent_domains(patent_classes, domain_map)
    table = db.lookup.get(stream.language, {})
    lemmas = stream.lemmas()
    tags: Counter = Counter()
    i = 0
    n = len(lemmas)
    while i < n:
        matched_len = 0
        matched_ids: List[int] = []
        for width in range(min(db.max_words, n - i), 0, -1):
            ids = table.get(tuple(lemmas[i : i + width]))
            if ids:
                matched_len = width
                matched_ids = ids
                break
        if not matched_ids:
            i += 1
            continue
        survivors = [c for c in matched_ids if db.domains_of(c) & allowed]
        if len(survivors) == 1:
            tags[survivors[0]] += 1
        i += matched_len
    return tags
