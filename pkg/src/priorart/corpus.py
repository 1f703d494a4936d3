"""Corpus records, name normalization, citation extraction and the metadata store.

The external record format is one JSON object per line (UTF-8) with keys
``id, lang, versions[], applicants[], inventors[], ipc[], ecla[],
priorities[], priority_date``; each version carries ``kind, date,
title{en,fr,de}, abstract{en,fr,de}, claims{en,fr,de}, description``.
Patent ids follow the synthetic syntax ``EP`` + 7 digits; citation mentions
in description text may space the digits and append a kind code
(``EP 0 123 456 A1``).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .errors import ParseError

LANGUAGES = ("en", "fr", "de")
VERSION_KINDS = ("A1", "A2", "B1", "B2")
# Order in which the *latest* description is picked for citation extraction.
CITATION_VERSION_PRIORITY = ("B2", "B1", "A2", "A1")

IPC_RE = re.compile(r"^[A-H][0-9]{2}[A-Z]?")
DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
CITATION_RE = re.compile(
    r"(?<![A-Za-z])EP[\s ]*((?:\d[\s ]*){6}\d)(?!\d)(?:\s*(?:A[12]|B[12]))?"
)


_TOKEN_LISTS: Dict[str, List[str]] = {}


def _load_token_list(name: str) -> List[str]:
    if name not in _TOKEN_LISTS:
        text = importlib_resources.files("priorart.data").joinpath(name).read_text("utf-8")
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                entries.append(line.lower())
        _TOKEN_LISTS[name] = entries
    return _TOKEN_LISTS[name]


def default_honorifics() -> List[str]:
    return _load_token_list("honorifics.txt")


def default_entity_marks() -> List[str]:
    return _load_token_list("entity_marks.txt")


def default_countries() -> List[str]:
    return _load_token_list("countries.txt")


@dataclass(frozen=True)
class PublicationVersion:
    kind: str
    date: str
    title: Dict[str, str]
    abstract: Dict[str, str]
    claims: Dict[str, str]
    description: str


@dataclass
class PatentRecord:
    patent_id: str
    language: str
    versions: List[PublicationVersion]
    applicants: List[str]
    inventors: List[str]
    ipc_classes: List[str]
    ecla_classes: List[str]
    priority_ids: List[str]
    priority_date: str
    cited_ids: List[str] = field(default_factory=list)

    def earliest_date(self) -> str:
        """First publication date (ISO strings compare chronologically)."""
        return min(v.date for v in self.versions)

    def latest_description(self) -> str:
        for kind in CITATION_VERSION_PRIORITY:
            for v in self.versions:
                if v.kind == kind and v.description:
                    return v.description
        return ""


@dataclass(frozen=True)
class CitationEdge:
    from_id: str
    to_id: str
    category: str = "OTHER"
    citation_paragraph: Optional[str] = None


def _text_map(obj, key: str, offset: int) -> Dict[str, str]:
    raw = obj.get(key, {})
    if not isinstance(raw, dict):
        raise ParseError(f"version field {key!r} must be an object", offset)
    out = {}
    for lang, text in raw.items():
        if lang not in LANGUAGES:
            raise ParseError(f"unknown language {lang!r} in {key!r}", offset)
        if text:
            out[lang] = str(text)
    return out


def parse_record(line: str) -> PatentRecord:
    """Parse one line of the record format into a :class:`PatentRecord`.

    Missing optional fields default to empty lists; a missing
    ``priority_date`` defaults to the earliest version date.  Applicant and
    inventor names are normalized on the way in.  Raises :class:`ParseError`
    (with a byte offset relative to the line) on malformed syntax, unknown
    version kinds, duplicate kinds or invalid class codes.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        offset = len(line[: exc.pos].encode("utf-8"))
        raise ParseError(f"invalid JSON: {exc.msg}", offset) from exc
    if not isinstance(obj, dict):
        raise ParseError("record must be a JSON object", 0)

    patent_id = obj.get("id")
    if not patent_id or not isinstance(patent_id, str):
        raise ParseError("missing or invalid 'id'", 0)
    language = str(obj.get("lang", "")).lower()
    if language not in LANGUAGES:
        raise ParseError(f"unknown language of proceedings {language!r}", 0)

    raw_versions = obj.get("versions", [])
    if not isinstance(raw_versions, list) or not raw_versions:
        raise ParseError("record needs at least one version", 0)
    versions = []
    seen_kinds = set()
    for rv in raw_versions:
        if not isinstance(rv, dict):
            raise ParseError("version entries must be objects", 0)
        kind = rv.get("kind")
        if kind not in VERSION_KINDS:
            raise ParseError(f"unknown version kind {kind!r}", 0)
        if kind in seen_kinds:
            raise ParseError(f"duplicate version kind {kind!r}", 0)
        seen_kinds.add(kind)
        date = rv.get("date", "")
        if not DATE_RE.match(date or ""):
            raise ParseError(f"invalid version date {date!r}", 0)
        version = PublicationVersion(
            kind=kind,
            date=date,
            title=_text_map(rv, "title", 0),
            abstract=_text_map(rv, "abstract", 0),
            claims=_text_map(rv, "claims", 0),
            description=str(rv.get("description", "") or ""),
        )
        if not (version.title or version.abstract or version.claims or version.description):
            raise ParseError(f"version {kind} has no text at all", 0)
        versions.append(version)
    versions.sort(key=lambda v: VERSION_KINDS.index(v.kind))

    ipc = [str(c) for c in obj.get("ipc", [])]
    for code in ipc:
        if not IPC_RE.match(code):
            raise ParseError(f"invalid IPC code {code!r}", 0)
    ecla = [str(c) for c in obj.get("ecla", [])]
    for code in ecla:
        if not IPC_RE.match(code):
            raise ParseError(f"ECLA code {code!r} does not extend an IPC prefix", 0)

    priority_date = obj.get("priority_date") or min(v.date for v in versions)
    if not DATE_RE.match(priority_date):
        raise ParseError(f"invalid priority date {priority_date!r}", 0)

    return PatentRecord(
        patent_id=patent_id,
        language=language,
        versions=versions,
        applicants=[normalize_applicant_name(a) for a in obj.get("applicants", [])],
        inventors=[normalize_person_name(i) for i in obj.get("inventors", [])],
        ipc_classes=ipc,
        ecla_classes=ecla,
        priority_ids=[str(p) for p in obj.get("priorities", [])],
        priority_date=priority_date,
        cited_ids=[],
    )


def serialize_record(record: PatentRecord) -> str:
    """Render a record back to its canonical one-line JSON form."""
    obj = {
        "id": record.patent_id,
        "lang": record.language,
        "versions": [
            {
                "kind": v.kind,
                "date": v.date,
                "title": {k: v.title[k] for k in LANGUAGES if v.title.get(k)},
                "abstract": {k: v.abstract[k] for k in LANGUAGES if v.abstract.get(k)},
                "claims": {k: v.claims[k] for k in LANGUAGES if v.claims.get(k)},
                "description": v.description,
            }
            for v in record.versions
        ],
        "applicants": record.applicants,
        "inventors": record.inventors,
        "ipc": record.ipc_classes,
        "ecla": record.ecla_classes,
        "priorities": record.priority_ids,
        "priority_date": record.priority_date,
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"), sort_keys=True)


def _strip_punct(token: str) -> str:
    return token.strip(".,;:()[]")


_MARK_SEQ_CACHE: Dict[Tuple[str, ...], List[List[str]]] = {}


def _mark_sequences(marks: Sequence[str]) -> List[List[str]]:
    key = tuple(marks)
    if key not in _MARK_SEQ_CACHE:
        if len(_MARK_SEQ_CACHE) > 64:
            _MARK_SEQ_CACHE.clear()
        _MARK_SEQ_CACHE[key] = sorted((m.split() for m in marks), key=len, reverse=True)
    return _MARK_SEQ_CACHE[key]


def _remove_marks(raw: str, marks: Sequence[str]) -> str:
    """Remove every (possibly multi-token) mark from a name string."""
    tokens = raw.split()
    # comparison keys: lowercase, trailing punctuation ignored
    keys = [_strip_punct(t).lower() for t in tokens]
    mark_seqs = _mark_sequences(marks)
    keep = [True] * len(tokens)
    i = 0
    while i < len(tokens):
        matched = 0
        for seq in mark_seqs:
            n = len(seq)
            if i + n <= len(tokens) and keys[i : i + n] == seq and all(keep[i : i + n]):
                for j in range(i, i + n):
                    keep[j] = False
                matched = n
                break
        i += matched if matched else 1
    kept = [tokens[i] for i in range(len(tokens)) if keep[i]]
    # drop tokens reduced to bare punctuation by the removal
    kept = [t for t in kept if _strip_punct(t)]
    return " ".join(kept)


def normalize_person_name(raw: str, honorifics: Optional[Sequence[str]] = None) -> str:
    """Strip academic/honorific tokens and collapse whitespace; idempotent."""
    marks = honorifics if honorifics is not None else default_honorifics()
    out = _remove_marks(raw, marks)
    return out if out else " ".join(raw.split())


_DEFAULT_APPLICANT_MARKS: List[str] = []


def normalize_applicant_name(
    raw: str,
    entity_marks: Optional[Sequence[str]] = None,
    countries: Optional[Sequence[str]] = None,
) -> str:
    """Strip business-entity marks and country names; idempotent."""
    if entity_marks is None and countries is None:
        if not _DEFAULT_APPLICANT_MARKS:
            _DEFAULT_APPLICANT_MARKS.extend(default_entity_marks())
            _DEFAULT_APPLICANT_MARKS.extend(default_countries())
        marks: Sequence[str] = _DEFAULT_APPLICANT_MARKS
    else:
        marks = list(entity_marks if entity_marks is not None else default_entity_marks())
        marks += list(countries if countries is not None else default_countries())
    out = _remove_marks(raw, marks)
    return out if out else " ".join(raw.split())


def _paragraphs(text: str) -> List[str]:
    return [p for p in re.split(r"\n\s*\n", text) if p.strip()]


def extract_citations(
    description: str, known_ids: Set[str]
) -> List[Tuple[str, str]]:
    """Find in-collection patent ids mentioned in a description.

    Returns ``(patent_id, enclosing_paragraph)`` pairs, deduplicated in order
    of first mention; mentions of ids outside ``known_ids`` are dropped.
    """
    found: List[Tuple[str, str]] = []
    seen = set()
    for para in _paragraphs(description):
        for match in CITATION_RE.finditer(para):
            digits = re.sub(r"\s", "", match.group(1))
            pid = f"EP{digits}"
            if pid in known_ids and pid not in seen:
                seen.add(pid)
                found.append((pid, para.strip()))
    return found


def citation_graph(
    records: Iterable[PatentRecord],
) -> Tuple[Dict[str, List[str]], Dict[str, Set[str]]]:
    """Forward and inverted citation adjacency over parsed records."""
    forward: Dict[str, List[str]] = {}
    inverse: Dict[str, Set[str]] = {}
    for rec in records:
        forward[rec.patent_id] = list(rec.cited_ids)
        inverse.setdefault(rec.patent_id, set())
    for src, targets in forward.items():
        for dst in targets:
            inverse.setdefault(dst, set()).add(src)
    return forward, inverse


class CorpusStore:
    """Immutable-after-load metadata store over a parsed corpus.

    Provides the lookups the working-set and re-ranking stages need:
    applicant/inventor/class/priority buckets plus the citation graph.
    """

    def __init__(self, records: List[PatentRecord]):
        self.records: Dict[str, PatentRecord] = {r.patent_id: r for r in records}
        self.order: List[str] = sorted(self.records)
        self.by_applicant: Dict[str, Set[str]] = {}
        self.by_inventor: Dict[str, Set[str]] = {}
        self.by_ipc: Dict[str, Set[str]] = {}
        self.by_ecla: Dict[str, Set[str]] = {}
        self.by_priority: Dict[str, Set[str]] = {}
        self.by_language: Dict[str, Set[str]] = {}
        self.edges: List[CitationEdge] = []
        self._resolve_citations()
        self._build_lookups()
        self.cites, self.cited_by = citation_graph(self.records.values())

    @classmethod
    def load(cls, path) -> "CorpusStore":
        records = []
        offset = 0
        with open(path, "rb") as fh:
            for raw in fh:
                line = raw.decode("utf-8")
                if line.strip():
                    try:
                        records.append(parse_record(line))
                    except ParseError as exc:
                        raise ParseError(exc.message, offset + exc.offset) from exc
                offset += len(raw)
        return cls(records)

    def _resolve_citations(self) -> None:
        known = set(self.records)
        for pid in sorted(self.records):
            rec = self.records[pid]
            pairs = extract_citations(rec.latest_description(), known)
            rec.cited_ids = [cid for cid, _ in pairs if cid != pid]
            for cid, para in pairs:
                if cid != pid:
                    # description-extracted citations are applicant citations
                    self.edges.append(CitationEdge(pid, cid, "D", para))

    def _build_lookups(self) -> None:
        for pid in self.order:
            rec = self.records[pid]
            for a in rec.applicants:
                self.by_applicant.setdefault(a, set()).add(pid)
            for i in rec.inventors:
                self.by_inventor.setdefault(i, set()).add(pid)
            for c in rec.ipc_classes:
                self.by_ipc.setdefault(c, set()).add(pid)
            for c in rec.ecla_classes:
                self.by_ecla.setdefault(c, set()).add(pid)
            for p in rec.priority_ids:
                self.by_priority.setdefault(p, set()).add(pid)
            self.by_language.setdefault(rec.language, set()).add(pid)

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, patent_id: str) -> bool:
        return patent_id in self.records

    def get(self, patent_id: str) -> PatentRecord:
        return self.records[patent_id]

    def publication_date(self, patent_id: str) -> str:
        return self.records[patent_id].earliest_date()

    def citers(self, patent_id: str) -> Set[str]:
        return self.cited_by.get(patent_id, set())

    def cited(self, patent_id: str) -> List[str]:
        return self.cites.get(patent_id, [])
