"""Deterministic synthetic patent corpus generator.

Patents are grouped into technology clusters that share vocabulary rendered
through parallel EN/FR/DE lexicons.  Citations are drawn preferentially
within clusters and embedded as mentions in description paragraphs; cited
patents plus planted same-cluster near-duplicates form the relevance
judgments.  Classification codes, priority families, a terminology fixture
and a domain map all derive from the cluster structure.  Everything is
driven by one seeded RNG, so equal seeds give byte-identical output.
"""

from __future__ import annotations

import datetime
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .corpus import PatentRecord, PublicationVersion, serialize_record
from .errors import ConfigError

_CONSONANTS = "bcdfgklmnprstvz"
_VOWELS = "aeiou"
_FILLERS = {
    "en": ("the", "of", "a", "is", "in", "for", "with", "and"),
    "fr": ("le", "la", "de", "et", "dans", "pour", "un"),
    "de": ("der", "die", "und", "mit", "von", "ein", "im"),
}
_EPOCH_DAYS = 7305  # 1990-01-01 relative to 1970-01-01
_LANG_ORDER = ("en", "de", "fr")  # matches the mix tuple ordering


@dataclass
class GenParams:
    n_patents: int = 1000
    n_clusters: int = 20
    vocab_size: int = 400
    # fractions of English, German, French proceedings languages
    lang_mix: Tuple[float, float, float] = (0.69, 0.23, 0.07)
    citation_density: float = 2.0
    ecla_per_cluster: int = 3
    near_duplicate_rate: float = 0.5
    grant_rate: float = 0.5
    family_rate: float = 0.05
    # fraction of judgment-eligible patents that become evaluation topics;
    # the rest keep their citations in-text only, mirroring a collection much
    # larger than its topic set
    topic_fraction: float = 0.5

    def validate(self) -> None:
        if self.n_patents < 1:
            raise ConfigError("n_patents must be >= 1")
        if not 1 <= self.n_clusters <= self.n_patents:
            raise ConfigError("n_clusters must be between 1 and n_patents")
        if self.vocab_size < 4 * self.n_clusters:
            raise ConfigError("vocab_size must be at least 4 * n_clusters")
        if len(self.lang_mix) != 3 or any(f < 0 for f in self.lang_mix):
            raise ConfigError("lang_mix needs three non-negative fractions")
        # reported mixes may sum slightly below 1 from rounding; they are
        # normalized at use, but reject anything clearly malformed
        if not 0.9 <= sum(self.lang_mix) <= 1.0 + 1e-9:
            raise ConfigError("lang_mix must sum to (approximately) 1")
        if self.citation_density < 0:
            raise ConfigError("citation_density must be >= 0")
        if self.ecla_per_cluster < 1:
            raise ConfigError("ecla_per_cluster must be >= 1")
        if not 0.0 < self.topic_fraction <= 1.0:
            raise ConfigError("topic_fraction must lie in (0, 1]")


@dataclass
class GeneratedCorpus:
    records: List[PatentRecord]
    qrels: Dict[str, Dict[str, int]]
    termdb_lines: List[str]
    domain_lines: List[str]
    clusters: Dict[str, int] = field(default_factory=dict)


def _stem(k: int) -> str:
    word = ""
    x = k
    for _ in range(3):
        word += _CONSONANTS[x % len(_CONSONANTS)]
        x //= len(_CONSONANTS)
        word += _VOWELS[x % len(_VOWELS)]
        x //= len(_VOWELS)
    return word


def _word(k: int, lang: str) -> str:
    base = _stem(k)
    if lang == "fr":
        return base + "ie"
    if lang == "de":
        return base + "ung"
    return base


def _inflect(word: str, lang: str, rng: random.Random) -> str:
    roll = rng.random()
    if lang == "en":
        if roll < 0.2:
            return word + "s"
        if roll < 0.3:
            return word + "ing"
    elif lang == "fr":
        if roll < 0.25:
            return word + "s"
    else:
        if roll < 0.25:
            return word + "en"
    return word


_BASE_DATE = datetime.date(1990, 1, 1)


def _date_str(days: int) -> str:
    return (_BASE_DATE + datetime.timedelta(days=days)).isoformat()


def _ipc_code(cluster: int) -> str:
    return f"{'ABCDEFGH'[cluster % 8]}{cluster // 8 + 1:02d}K"


def _sentence(stems: Sequence[int], lang: str, rng: random.Random, length: int) -> str:
    words = []
    for _ in range(length):
        if rng.random() < 0.25:
            words.append(rng.choice(_FILLERS[lang]))
        else:
            words.append(_inflect(_word(rng.choice(stems), lang), lang, rng))
    return " ".join(words)


def _spaced_id(pid: str, rng: random.Random) -> str:
    digits = pid[2:]
    style = rng.random()
    if style < 0.4:
        return pid
    if style < 0.7:
        return f"EP {digits[0]} {digits[1:4]} {digits[4:]}"
    kind = rng.choice(["A1", "B1"])
    return f"EP {digits[0]} {digits[1:4]} {digits[4:]} {kind}"


def generate_corpus(seed: int, params: Optional[GenParams] = None) -> GeneratedCorpus:
    """Build the corpus in memory; see the module docstring for the layout."""
    params = params or GenParams()
    params.validate()
    rng = random.Random(seed)
    n = params.n_patents
    n_clusters = params.n_clusters

    # language quotas by largest remainder, then shuffled
    mix_total = sum(params.lang_mix)
    mix = [f / mix_total for f in params.lang_mix]
    quotas = [int(n * f) for f in mix]
    remainders = sorted(range(3), key=lambda i: (-(n * mix[i] - quotas[i]), i))
    for i in range(n - sum(quotas)):
        quotas[remainders[i % 3]] += 1
    languages = [lang for lang, q in zip(_LANG_ORDER, quotas) for _ in range(q)]
    rng.shuffle(languages)

    clusters = [rng.randrange(n_clusters) for _ in range(n)]
    ids = [f"EP{i + 1:07d}" for i in range(n)]

    # vocabulary: a shared block plus one block per cluster
    shared_size = max(2, params.vocab_size // 10)
    block = (params.vocab_size - shared_size) // n_clusters
    cluster_vocab = {
        c: list(range(shared_size + c * block, shared_size + (c + 1) * block))
        for c in range(n_clusters)
    }
    shared_vocab = list(range(shared_size))

    # applicant/inventor pools per cluster
    applicants = {c: [f"Applicant {c}.{k}" for k in range(3)] for c in range(n_clusters)}
    inventor_pool = {
        c: [f"Inventor {c}.{k}" for k in range(8)] for c in range(n_clusters)
    }

    step_days = max(1, (15 * 365) // n)
    pub_days = [i * step_days for i in range(n)]

    profiles: List[List[int]] = []
    for i in range(n):
        stems = rng.sample(cluster_vocab[clusters[i]], min(6, block)) + rng.sample(
            shared_vocab, 2
        )
        profiles.append(stems)

    qrels: Dict[str, Dict[str, int]] = {}

    # near-duplicates: copy most of the source profile into a same-cluster,
    # same-language twin; pairs are kept disjoint so a planted profile is
    # never overwritten
    if params.near_duplicate_rate > 0:
        members_by_cluster: Dict[int, List[int]] = {}
        for i, c in enumerate(clusters):
            members_by_cluster.setdefault(c, []).append(i)
        paired: set = set()
        for i in range(n):
            if i in paired:
                continue
            peers = [
                j for j in members_by_cluster[clusters[i]]
                if j != i and j not in paired and languages[j] == languages[i]
            ]
            if peers and rng.random() < params.near_duplicate_rate:
                twin = rng.choice(peers)
                paired.add(i)
                paired.add(twin)
                profiles[twin] = profiles[i][:5] + profiles[twin][5:]
                qrels.setdefault(ids[i], {})[ids[twin]] = 2

    # citations: earlier patents only (publication at least a year before the
    # citing patent's priority date), preferring the same cluster
    margin = math.ceil(365 / step_days)
    citations: List[List[int]] = [[] for _ in range(n)]
    if params.citation_density > 0:
        for i in range(n):
            limit = i - margin
            if limit < 1:
                continue
            k = rng.randint(0, int(2 * params.citation_density))
            same = [j for j in range(limit) if clusters[j] == clusters[i]]
            chosen: List[int] = []
            for _ in range(k):
                if same and rng.random() < 0.8:
                    pick = rng.choice(same)
                else:
                    pick = rng.randrange(limit)
                if pick not in chosen:
                    chosen.append(pick)
            citations[i] = chosen
            for j in chosen:
                qrels.setdefault(ids[i], {})[ids[j]] = 1

    # priority families: parent plus one or two later same-cluster children
    priorities: List[List[str]] = [[] for _ in range(n)]
    priority_days: List[int] = [max(0, pub_days[i] - 365) for i in range(n)]
    family_no = 0
    i = 0
    while i < n:
        if rng.random() < params.family_rate:
            siblings = [
                j for j in range(i + 1, min(i + 40, n)) if clusters[j] == clusters[i]
            ][: rng.randint(1, 2)]
            if siblings:
                family_no += 1
                pr = f"PR{family_no:05d}"
                priorities[i] = [pr]
                for j in siblings:
                    priorities[j] = [pr, ids[i]]
                    priority_days[j] = priority_days[i]
        i += 1

    records: List[PatentRecord] = []
    for i in range(n):
        lang = languages[i]
        cluster = clusters[i]
        stems = profiles[i]
        granted = rng.random() < params.grant_rate

        # granted patents carry the title and claims in all three languages;
        # applications only in the language of proceedings
        text_langs = ("en", "fr", "de") if granted else (lang,)
        title = {l: _sentence(stems[:4], l, rng, 4) for l in text_langs}
        abstract = {lang: _sentence(stems, lang, rng, 12)}
        claims = {l: _sentence(stems, l, rng, 14) for l in text_langs}

        paragraphs = [_sentence(stems, lang, rng, 20)]
        for j in citations[i]:
            mention = _spaced_id(ids[j], rng)
            paragraphs.append(
                f"{_sentence(stems, lang, rng, 8)} {mention} {_sentence(profiles[j][:3], lang, rng, 6)}"
            )
        paragraphs.append(_sentence(stems, lang, rng, 15))
        description = "\n\n".join(paragraphs)

        a1_date = _date_str(pub_days[i])
        versions = [
            PublicationVersion(
                kind="A1",
                date=a1_date,
                title=title,
                abstract=abstract,
                claims={} if granted else claims,
                description=description,
            )
        ]
        if granted:
            versions.append(
                PublicationVersion(
                    kind="B1",
                    date=_date_str(pub_days[i] + 400),
                    title=title,
                    abstract=abstract,
                    claims=claims,
                    description=description,
                )
            )

        ecla_codes = sorted(
            {
                f"{_ipc_code(cluster)}{rng.randint(1, params.ecla_per_cluster)}"
                for _ in range(rng.randint(1, 2))
            }
        )
        applicant = rng.choice(applicants[cluster])
        n_inventors = rng.randint(1, 3)
        inventors = sorted(rng.sample(inventor_pool[cluster], n_inventors))

        records.append(
            PatentRecord(
                patent_id=ids[i],
                language=lang,
                versions=versions,
                applicants=[applicant],
                inventors=inventors,
                ipc_classes=[_ipc_code(cluster)],
                ecla_classes=ecla_codes,
                priority_ids=priorities[i],
                priority_date=_date_str(priority_days[i]),
            )
        )

    if params.topic_fraction < 1.0 and qrels:
        eligible = sorted(qrels)
        keep = rng.sample(eligible, max(1, round(params.topic_fraction * len(eligible))))
        qrels = {t: qrels[t] for t in sorted(keep)}

    termdb_lines, domain_lines = _terminology_fixture(params, cluster_vocab)
    return GeneratedCorpus(
        records=records,
        qrels=qrels,
        termdb_lines=termdb_lines,
        domain_lines=domain_lines,
        clusters={ids[i]: clusters[i] for i in range(n)},
    )


def _terminology_fixture(
    params: GenParams, cluster_vocab: Dict[int, List[int]]
) -> Tuple[List[str], List[str]]:
    """Concept entries for the leading stems of every cluster block, plus one
    two-word concept per cluster; each cluster maps to its own domain."""
    termdb = []
    domains = []
    cid = 0
    for c in range(params.n_clusters):
        dom = f"d{c:02d}"
        domains.append(f"{_ipc_code(c)[:3]}\t{dom}")
        for k in cluster_vocab[c][:3]:
            cid += 1
            for lang in ("en", "fr", "de"):
                preferred = "1" if lang == "en" else "0"
                termdb.append(f"{cid}\t{lang}\t{_word(k, lang)}\t{preferred}\t{dom}\tgen")
        cid += 1
        k1, k2 = cluster_vocab[c][0], cluster_vocab[c][1]
        for lang in ("en", "fr", "de"):
            phrase = f"{_word(k1, lang)} {_word(k2, lang)}"
            termdb.append(f"{cid}\t{lang}\t{phrase}\t{'1' if lang == 'en' else '0'}\t{dom}\tgen")
    return termdb, domains


def generate(seed: int, params: Optional[GenParams] = None, out_dir="." ) -> Dict[str, str]:
    """Generate and write corpus.jsonl, termdb.tsv, domains.tsv and qrels.txt."""
    corpus = generate_corpus(seed, params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": str(out / "corpus.jsonl"),
        "termdb": str(out / "termdb.tsv"),
        "domains": str(out / "domains.tsv"),
        "qrels": str(out / "qrels.txt"),
    }
    with open(paths["corpus"], "w", encoding="utf-8") as fh:
        for rec in corpus.records:
            fh.write(serialize_record(rec) + "\n")
    with open(paths["termdb"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(corpus.termdb_lines) + "\n")
    with open(paths["domains"], "w", encoding="utf-8") as fh:
        fh.write("\n".join(corpus.domain_lines) + "\n")
    with open(paths["qrels"], "w", encoding="utf-8") as fh:
        for topic_id in sorted(corpus.qrels):
            for pid in sorted(corpus.qrels[topic_id]):
                fh.write(f"{topic_id} 0 {pid} {corpus.qrels[topic_id][pid]}\n")
    return paths
