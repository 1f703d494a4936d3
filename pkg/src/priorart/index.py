"""Meta-document construction, citation-text augmentation and inverted
index building with a versioned binary on-disk format.

Meta-document selection: title, abstract and claims come from the latest
version where the field is non-empty; the description comes from the
earliest version present in the order A1, A2, B1, then B2.

Binary index layout (all integers little-endian):

    magic   4 bytes  b"TIDX"
    version u16      = 1
    kind    u16 len + utf-8 bytes     analyzer kind
    n_docs  u32
    per doc:   u16 len + utf-8 id, u32 doc_length
    collection_length u64
    n_terms u32
    per term (terms sorted):
        u16 len + utf-8 term, u32 doc_freq, u64 collection_tf,
        doc_freq x (u32 ordinal, u32 tf)
"""

from __future__ import annotations

import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import analyze
from .corpus import CitationEdge, CorpusStore, VERSION_KINDS
from .errors import ParseError

_MAGIC = b"TIDX"
_FORMAT_VERSION = 1
# earliest-description preference order
_DESCRIPTION_ORDER = ("A1", "A2", "B1", "B2")


@dataclass
class MetaDocument:
    patent_id: str
    language: str
    title: Dict[str, str]
    abstract: Dict[str, str]
    claims: Dict[str, str]
    description: str
    # (language of the citing patent, cited paragraph)
    appended_citation_texts: List[Tuple[str, str]] = field(default_factory=list)


def build_metadoc(record) -> MetaDocument:
    """Merge one patent's publication versions into its indexable unit."""
    title: Dict[str, str] = {}
    abstract: Dict[str, str] = {}
    claims: Dict[str, str] = {}
    # latest version wins per field: walk versions in kind order
    for version in sorted(record.versions, key=lambda v: VERSION_KINDS.index(v.kind)):
        if version.title:
            title = dict(version.title)
        if version.abstract:
            abstract = dict(version.abstract)
        if version.claims:
            claims = dict(version.claims)
    description = ""
    for kind in _DESCRIPTION_ORDER:
        candidates = [v for v in record.versions if v.kind == kind and v.description]
        if candidates:
            description = candidates[0].description
            break
    return MetaDocument(
        patent_id=record.patent_id,
        language=record.language,
        title=title,
        abstract=abstract,
        claims=claims,
        description=description,
    )


def build_metadocs(store: CorpusStore) -> List[MetaDocument]:
    """One meta-document per patent, in sorted patent-id order."""
    return [build_metadoc(store.get(pid)) for pid in store.order]


def append_citation_texts(
    metadocs: Sequence[MetaDocument], edges: Iterable[CitationEdge], store: CorpusStore
) -> List[MetaDocument]:
    """Append each citing paragraph to the cited patent's meta-document.

    The citing patent's language of proceedings travels with the paragraph so
    per-language analyzers can pick up the extra (possibly foreign-language)
    text. Citing documents are unchanged.
    """
    by_id = {m.patent_id: m for m in metadocs}
    for edge in edges:
        if edge.citation_paragraph and edge.to_id in by_id and edge.from_id in store:
            lang = store.get(edge.from_id).language
            by_id[edge.to_id].appended_citation_texts.append((lang, edge.citation_paragraph))
    return list(metadocs)


@dataclass
class TermIndex:
    """Inverted index for one analyzer over the meta-document collection."""

    analyzer_kind: str
    doc_ids: List[str]
    postings: Dict[str, List[Tuple[int, int]]]
    doc_length: List[int]
    collection_length: int
    doc_freq: Dict[str, int]
    collection_tf: Dict[str, int]

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def ordinal_of(self, patent_id: str) -> Optional[int]:
        if not hasattr(self, "_ordinals"):
            self._ordinals = {pid: i for i, pid in enumerate(self.doc_ids)}
        return self._ordinals.get(patent_id)

    def audit(self) -> List[str]:
        """Full-scan check of the accounting identities; returns violations."""
        problems = []
        if sum(self.doc_length) != self.collection_length:
            problems.append("sum(doc_length) != collection_length")
        for term, plist in self.postings.items():
            if self.doc_freq.get(term) != len(plist):
                problems.append(f"doc_freq mismatch for {term!r}")
            if self.collection_tf.get(term) != sum(tf for _, tf in plist):
                problems.append(f"collection_tf mismatch for {term!r}")
        if sum(self.collection_tf.values()) != self.collection_length:
            problems.append("sum(collection_tf) != collection_length")
        return problems


def index_from_term_bags(
    doc_terms: Sequence[Tuple[str, Counter]], analyzer_kind: str
) -> TermIndex:
    """Assemble a TermIndex from per-document term multisets.

    Documents keep the given order as ordinals; postings are merged
    deterministically by (term, ordinal). Empty documents get length 0 and
    appear in no posting.
    """
    doc_ids = [doc_id for doc_id, _ in doc_terms]
    postings: Dict[str, List[Tuple[int, int]]] = {}
    doc_length = []
    for ordinal, (_, terms) in enumerate(doc_terms):
        doc_length.append(sum(terms.values()))
        for term in sorted(terms):
            postings.setdefault(term, []).append((ordinal, terms[term]))
    doc_freq = {t: len(pl) for t, pl in postings.items()}
    collection_tf = {t: sum(tf for _, tf in pl) for t, pl in postings.items()}
    return TermIndex(
        analyzer_kind=analyzer_kind,
        doc_ids=doc_ids,
        postings=postings,
        doc_length=doc_length,
        collection_length=sum(doc_length),
        doc_freq=doc_freq,
        collection_tf=collection_tf,
    )


def build_index(
    metadocs: Sequence[MetaDocument],
    analyzer_kind: str,
    resources: Optional[analyze.AnalyzerResources] = None,
    threads: int = 1,
    restrict_language: Optional[str] = None,
) -> TermIndex:
    """Analyze every meta-document and build the inverted index.

    Documents are analyzed in independent work units (optionally across a
    thread pool; result order is preserved so the index is identical for any
    thread count).
    """

    def run(metadoc: MetaDocument) -> Counter:
        return analyze.analyze_to_terms(metadoc, analyzer_kind, resources, restrict_language)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            bags = list(pool.map(run, metadocs))
    else:
        bags = [run(m) for m in metadocs]
    pairs = [(m.patent_id, bag) for m, bag in zip(metadocs, bags)]
    return index_from_term_bags(pairs, analyzer_kind)


def _write_str(fh, text: str) -> None:
    raw = text.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<H", fh.read(2))
    return fh.read(n).decode("utf-8")


def save_index(index: TermIndex, path) -> None:
    """Serialize to the versioned binary format documented in the module."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _FORMAT_VERSION))
        _write_str(fh, index.analyzer_kind)
        fh.write(struct.pack("<I", index.n_docs))
        for ordinal, doc_id in enumerate(index.doc_ids):
            _write_str(fh, doc_id)
            fh.write(struct.pack("<I", index.doc_length[ordinal]))
        fh.write(struct.pack("<Q", index.collection_length))
        fh.write(struct.pack("<I", len(index.postings)))
        for term in sorted(index.postings):
            plist = index.postings[term]
            _write_str(fh, term)
            fh.write(struct.pack("<IQ", len(plist), index.collection_tf[term]))
            for ordinal, tf in plist:
                fh.write(struct.pack("<II", ordinal, tf))


def load_index(path) -> TermIndex:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ParseError(f"not an index file: {path}")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != _FORMAT_VERSION:
            raise ParseError(f"unsupported index format version {version}")
        analyzer_kind = _read_str(fh)
        (n_docs,) = struct.unpack("<I", fh.read(4))
        doc_ids = []
        doc_length = []
        for _ in range(n_docs):
            doc_ids.append(_read_str(fh))
            doc_length.append(struct.unpack("<I", fh.read(4))[0])
        (collection_length,) = struct.unpack("<Q", fh.read(8))
        (n_terms,) = struct.unpack("<I", fh.read(4))
        postings: Dict[str, List[Tuple[int, int]]] = {}
        doc_freq = {}
        collection_tf = {}
        for _ in range(n_terms):
            term = _read_str(fh)
            df, ctf = struct.unpack("<IQ", fh.read(12))
            plist = [struct.unpack("<II", fh.read(8)) for _ in range(df)]
            postings[term] = [(o, tf) for o, tf in plist]
            doc_freq[term] = df
            collection_tf[term] = ctf
    return TermIndex(
        analyzer_kind=analyzer_kind,
        doc_ids=doc_ids,
        postings=postings,
        doc_length=doc_length,
        collection_length=collection_length,
        doc_freq=doc_freq,
        collection_tf=collection_tf,
    )
