"""Text analysis: tokenization, rule-based lemmatization, phrase mining and
the four analyzer kinds that turn a meta-document into index terms.

Analyzer kinds are ``lemma-en``, ``lemma-fr``, ``lemma-de``, ``phrase-en``
and ``concept``.  Lemma analyzers only consume text available in their
language; the phrase analyzer emits pre-mined collocations over English
text; the concept analyzer delegates to the terminology tagger over all
three languages.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import ConfigError

LANGUAGES = ("en", "fr", "de")
ANALYZER_KINDS = ("lemma-en", "lemma-fr", "lemma-de", "phrase-en", "concept")

_SURROUND_PUNCT = ".,;:!?()[]{}<>\"'`«»„“”‚’%§&*+=|/\\~"
_SPLIT_RE = re.compile(r"[\W_]+", re.UNICODE)

_DIGIT_RE = re.compile(r"\d")


@dataclass(frozen=True)
class TokenStream:
    """Tokens as ``(surface, lemma, position)`` with strictly increasing positions."""

    tokens: Tuple[Tuple[str, str, int], ...]
    language: str

    def lemmas(self) -> List[str]:
        return [lemma for _, lemma, _ in self.tokens]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Phrase:
    lemmas: Tuple[str, ...]
    dice: float

    @property
    def term(self) -> str:
        return "_".join(self.lemmas)

    @property
    def word_count(self) -> int:
        return len(self.lemmas)


def _read_lines(name: str) -> List[str]:
    text = importlib_resources.files("priorart.data").joinpath(name).read_text("utf-8")
    return [ln for ln in (l.strip() for l in text.splitlines()) if ln and not ln.startswith("#")]


_STOPWORDS: Dict[str, frozenset] = {}
_SUFFIX_RULES: Dict[str, List[Tuple[str, str, int]]] = {}


def default_stopwords(language: str) -> frozenset:
    if language not in _STOPWORDS:
        _STOPWORDS[language] = frozenset(_read_lines(f"stopwords_{language}.txt"))
    return _STOPWORDS[language]


def default_suffix_rules(language: str) -> List[Tuple[str, str, int]]:
    """Suffix rules as (suffix, replacement, min_stem_length), longest first."""
    if language not in _SUFFIX_RULES:
        rules = []
        for line in _read_lines(f"suffixes_{language}.txt"):
            suffix, repl, min_stem = line.split("\t")
            rules.append((suffix, "" if repl == "\\0" else repl, int(min_stem)))
        rules.sort(key=lambda r: len(r[0]), reverse=True)
        _SUFFIX_RULES[language] = rules
    return _SUFFIX_RULES[language]


def tokenize(text: str, language: str) -> TokenStream:
    """Deterministic split on whitespace and punctuation.

    Chunks containing a digit are kept whole (``3,5-dimethyl``) after
    surrounding punctuation is stripped; purely alphabetic chunks are split
    at any non-letter. Surfaces are lowercased.
    """
    if language not in LANGUAGES:
        raise ConfigError(f"unknown language {language!r}")
    tokens: List[Tuple[str, str, int]] = []
    pos = 0
    for chunk in text.split():
        chunk = chunk.strip(_SURROUND_PUNCT)
        if not chunk:
            continue
        if _DIGIT_RE.search(chunk):
            surface = chunk.lower()
            tokens.append((surface, surface, pos))
            pos += 1
        else:
            for part in _SPLIT_RE.split(chunk):
                if part:
                    surface = part.lower()
                    tokens.append((surface, surface, pos))
                    pos += 1
    return TokenStream(tuple(tokens), language)


def _apply_suffix_rules(word: str, rules: Sequence[Tuple[str, str, int]]) -> str:
    for suffix, repl, min_stem in rules:
        if word.endswith(suffix) and len(word) - len(suffix) >= min_stem:
            return word[: len(word) - len(suffix)] + repl
    return word


def lemmatize(
    stream: TokenStream,
    rules: Optional[Sequence[Tuple[str, str, int]]] = None,
    stopwords: Optional[frozenset] = None,
) -> TokenStream:
    """Apply per-language suffix stripping and drop stopword tokens.

    Tokens containing digits are kept verbatim (numbers are index terms).
    """
    if rules is None:
        rules = default_suffix_rules(stream.language)
    if stopwords is None:
        stopwords = default_stopwords(stream.language)
    out = []
    for surface, _, pos in stream.tokens:
        if surface in stopwords:
            continue
        if _DIGIT_RE.search(surface):
            lemma = surface
        else:
            lemma = _apply_suffix_rules(surface, rules)
        if lemma in stopwords or not lemma:
            continue
        out.append((surface, lemma, pos))
    return TokenStream(tuple(out), stream.language)


class PhraseVocabulary:
    """Mined collocations, keyed by their lemma tuples (length 2 or 3)."""

    def __init__(self, phrases: Iterable[Phrase] = ()):
        self.by_lemmas: Dict[Tuple[str, ...], Phrase] = {p.lemmas: p for p in phrases}

    def __len__(self) -> int:
        return len(self.by_lemmas)

    def __contains__(self, lemmas: Tuple[str, ...]) -> bool:
        return lemmas in self.by_lemmas

    def match(self, lemmas: Sequence[str]) -> List[Phrase]:
        """All vocabulary phrases found over adjacent lemmas; overlaps allowed."""
        found = []
        n = len(lemmas)
        for i in range(n):
            for width in (3, 2):
                if i + width <= n:
                    key = tuple(lemmas[i : i + width])
                    phrase = self.by_lemmas.get(key)
                    if phrase is not None:
                        found.append(phrase)
        return found

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.by_lemmas):
                phrase = self.by_lemmas[key]
                fh.write("%s\t%r\n" % (" ".join(phrase.lemmas), phrase.dice))

    @classmethod
    def load(cls, path) -> "PhraseVocabulary":
        phrases = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                words, dice = line.split("\t")
                phrases.append(Phrase(tuple(words.split(" ")), float(dice)))
        return cls(phrases)


def extract_phrases(
    streams: Iterable[TokenStream],
    min_count: int = 3,
    dice_threshold: float = 0.25,
) -> PhraseVocabulary:
    """Mine bigram/trigram collocations from lemmatized streams.

    Candidates are adjacent non-stopword lemmas.  A bigram scores
    ``2*f(ab) / (f(a)+f(b))``; trigrams use the length-n generalization
    ``n*f(ngram) / sum(f(w))``.  Kept iff the score reaches the threshold
    and the candidate occurs at least ``min_count`` times.
    """
    unigram = Counter()
    ngram = Counter()
    for stream in streams:
        lemmas = stream.lemmas()
        unigram.update(lemmas)
        for i in range(len(lemmas) - 1):
            ngram[tuple(lemmas[i : i + 2])] += 1
        for i in range(len(lemmas) - 2):
            ngram[tuple(lemmas[i : i + 3])] += 1
    phrases = []
    for key, count in ngram.items():
        if count < min_count:
            continue
        dice = len(key) * count / sum(unigram[w] for w in key)
        if dice >= dice_threshold:
            phrases.append(Phrase(key, min(dice, 1.0)))
    return PhraseVocabulary(phrases)


@dataclass
class AnalyzerResources:
    """Shared lookup material the analyzers may need.

    ``classes_of`` maps a patent id to the classification codes used for
    concept disambiguation (ECLA if any, else IPC).
    """

    phrase_vocab: Optional[PhraseVocabulary] = None
    termdb: Optional[object] = None
    domain_map: Optional[Dict[str, frozenset]] = None
    classes_of: Dict[str, Sequence[str]] = field(default_factory=dict)


def metadoc_segments(metadoc, restrict_language: Optional[str] = None):
    """Yield (language, text) pairs for every text unit of a meta-document."""
    langs = LANGUAGES if restrict_language is None else (restrict_language,)
    for lang in langs:
        for m in (metadoc.title, metadoc.abstract, metadoc.claims):
            text = m.get(lang)
            if text:
                yield lang, text
    if metadoc.description and (restrict_language in (None, metadoc.language)):
        yield metadoc.language, metadoc.description
    for lang, text in metadoc.appended_citation_texts:
        if restrict_language in (None, lang):
            yield lang, text


def analyze_to_terms(
    metadoc,
    analyzer_kind: str,
    resources: Optional[AnalyzerResources] = None,
    restrict_language: Optional[str] = None,
) -> Counter:
    """Turn a meta-document into the term multiset for one analyzer.

    Raises :class:`ConfigError` for unknown analyzers or missing resources.
    """
    kind = analyzer_kind.lower()
    if kind not in ANALYZER_KINDS:
        raise ConfigError(f"unknown analyzer {analyzer_kind!r}")
    resources = resources or AnalyzerResources()
    terms: Counter = Counter()

    if kind.startswith("lemma-"):
        lang = kind.split("-", 1)[1]
        for seg_lang, text in metadoc_segments(metadoc, restrict_language):
            if seg_lang == lang:
                terms.update(lemmatize(tokenize(text, lang)).lemmas())
        return terms

    if kind == "phrase-en":
        if resources.phrase_vocab is None:
            raise ConfigError("phrase analyzer needs a phrase vocabulary")
        for seg_lang, text in metadoc_segments(metadoc, restrict_language):
            if seg_lang == "en":
                lemmas = lemmatize(tokenize(text, "en")).lemmas()
                terms.update(p.term for p in resources.phrase_vocab.match(lemmas))
        return terms

    # concept analyzer: tag every language's text against the terminology DB
    if resources.termdb is None or resources.domain_map is None:
        raise ConfigError("concept analyzer needs a terminology DB and domain map")
    from . import terminology

    classes = resources.classes_of.get(metadoc.patent_id, ())
    for seg_lang, text in metadoc_segments(metadoc, restrict_language):
        stream = lemmatize(tokenize(text, seg_lang))
        tags = terminology.tag_concepts(stream, classes, resources.termdb, resources.domain_map)
        for concept_id, count in tags.items():
            terms[f"c{concept_id}"] += count
    return terms
