"""Pipeline stages behind the CLI: each stage reads and writes files in a
workspace directory so any stage can be re-run in isolation.

Workspace layout::

    corpus.jsonl termdb.tsv domains.tsv qrels.txt          (gen or user input)
    citations.tsv corpus_stats.json                        (ingest)
    phrases.tsv indexes/index-<analyzer>.bin               (index)
    validation-topics.txt validation-qrels.txt
    worksets.tsv step_traces.csv                           (worksets)
    runs/run-<model>-<analyzer>.txt querystats.csv         (retrieve)
    models/merge.json                                      (train-merge)
    runs/run-merged.txt confidences.csv                    (merge)
    models/rerank.json                                     (train-rerank)
    runs/run-final.txt rerank-features.csv                 (rerank)
    report.txt report.csv                                  (eval)
    figures/*.png manifest.json
"""

from __future__ import annotations

import csv
import json
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import analyze, evaluate, fusion, rerank, workingset
from .analyze import AnalyzerResources, PhraseVocabulary, extract_phrases, lemmatize, tokenize
from .config import PipelineConfig
from .corpus import CorpusStore
from .errors import PriorArtError
from .index import append_citation_texts, build_index, build_metadocs, load_index, save_index
from .retrieve import Query, RankedList, read_run, retrieve, write_run
from .syngen import GenParams, generate
from .terminology import load_domain_map, load_termdb

ANALYZERS = ("lemma-en", "lemma-fr", "lemma-de", "phrase-en", "concept")
RETRIEVAL_MODELS = ("kl", "bm25")


class Workspace:
    """Path bookkeeping for one pipeline run."""

    def __init__(self, root):
        self.root = Path(root)

    def ensure(self) -> None:
        for sub in ("", "indexes", "runs", "models", "figures"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / name

    def index_path(self, analyzer: str) -> Path:
        return self.root / "indexes" / f"index-{analyzer}.bin"

    def run_path(self, model_id: str) -> Path:
        return self.root / "runs" / f"run-{model_id}.txt"


def analyzers_for(cfg: PipelineConfig) -> Tuple[str, ...]:
    if not cfg.monolingual:
        return ANALYZERS
    kinds = [f"lemma-{cfg.monolingual}"]
    if cfg.monolingual == "en":
        kinds.append("phrase-en")
    kinds.append("concept")
    return tuple(kinds)


def model_ids_for(cfg: PipelineConfig) -> List[str]:
    return [f"{m}-{a}" for m in RETRIEVAL_MODELS for a in analyzers_for(cfg)]


def update_manifest(ws: Workspace, cfg: PipelineConfig, stage: str,
                    seconds: float, outputs: Sequence[str]) -> None:
    path = ws.path("manifest.json")
    data = {"config_hash": cfg.digest(), "stages": {}}
    if path.exists():
        data = json.loads(path.read_text(encoding="utf-8"))
        data["config_hash"] = cfg.digest()
        data.setdefault("stages", {})
    data["stages"][stage] = {"seconds": round(seconds, 3), "outputs": list(outputs)}
    path.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")


def run_stage(name: str, cfg: PipelineConfig, ws: Workspace, fn, **kwargs) -> List[str]:
    ws.ensure()
    started = time.time()
    outputs = fn(cfg, ws, **kwargs)
    update_manifest(ws, cfg, name, time.time() - started, outputs)
    return outputs


def _require(path: Path) -> Path:
    if not path.exists():
        raise PriorArtError(f"missing input file: {path}")
    return path


def load_store(ws: Workspace) -> CorpusStore:
    return CorpusStore.load(_require(ws.path("corpus.jsonl")))


def load_resources(ws: Workspace, store: CorpusStore) -> AnalyzerResources:
    res = AnalyzerResources()
    termdb_path = ws.path("termdb.tsv")
    domains_path = ws.path("domains.tsv")
    if termdb_path.exists() and domains_path.exists():
        res.termdb = load_termdb(termdb_path)
        res.domain_map = load_domain_map(domains_path)
    phrases_path = ws.path("phrases.tsv")
    if phrases_path.exists():
        res.phrase_vocab = PhraseVocabulary.load(phrases_path)
    res.classes_of = {
        pid: (store.get(pid).ecla_classes or store.get(pid).ipc_classes)
        for pid in store.order
    }
    return res


# ---------------------------------------------------------------- stages


def stage_gen(cfg: PipelineConfig, ws: Workspace) -> List[str]:
    params = GenParams(
        n_patents=cfg.gen_n_patents,
        n_clusters=cfg.gen_n_clusters,
        vocab_size=cfg.gen_vocab_size,
        lang_mix=tuple(cfg.gen_lang_mix),
        citation_density=cfg.gen_citation_density,
        ecla_per_cluster=cfg.gen_ecla_per_cluster,
    )
    paths = generate(cfg.seed, params, ws.root)
    return sorted(paths.values())


def stage_ingest(cfg: PipelineConfig, ws: Workspace,
                 corpus_file: Optional[str] = None) -> List[str]:
    if corpus_file is not None:
        source = _require(Path(corpus_file))
        if source.resolve() != ws.path("corpus.jsonl").resolve():
            ws.path("corpus.jsonl").write_bytes(source.read_bytes())
    store = load_store(ws)
    citations_path = ws.path("citations.tsv")
    with open(citations_path, "w", encoding="utf-8") as fh:
        for edge in store.edges:
            para = (edge.citation_paragraph or "").replace("\t", " ").replace("\n", " ")
            fh.write(f"{edge.from_id}\t{edge.to_id}\t{edge.category}\t{para}\n")
    by_lang = {lang: len(ids) for lang, ids in sorted(store.by_language.items())}
    stats = {
        "patents": len(store),
        "by_language": by_lang,
        "citation_edges": len(store.edges),
        "patents_with_citations": sum(1 for p in store.order if store.cited(p)),
        "applicants": len(store.by_applicant),
        "inventors": len(store.by_inventor),
        "ipc_classes": len(store.by_ipc),
        "ecla_classes": len(store.by_ecla),
    }
    stats_path = ws.path("corpus_stats.json")
    stats_path.write_text(json.dumps(stats, indent=2, sort_keys=True), encoding="utf-8")
    return [str(citations_path), str(stats_path)]


def stage_index(cfg: PipelineConfig, ws: Workspace, stats: bool = False) -> List[str]:
    store = load_store(ws)
    metadocs = append_citation_texts(build_metadocs(store), store.edges, store)

    streams = []
    for m in metadocs:
        for lang, text in analyze.metadoc_segments(m):
            if lang == "en":
                streams.append(lemmatize(tokenize(text, "en")))
    vocab = extract_phrases(streams, cfg.phrase_min_count, cfg.dice_threshold)
    vocab.save(ws.path("phrases.tsv"))

    res = load_resources(ws, store)
    outputs = [str(ws.path("phrases.tsv"))]
    for kind in analyzers_for(cfg):
        idx = build_index(metadocs, kind, res, threads=cfg.threads)
        problems = idx.audit()
        if problems:
            raise PriorArtError(f"index {kind} failed accounting audit: {problems}")
        save_index(idx, ws.index_path(kind))
        outputs.append(str(ws.index_path(kind)))
        if stats:
            print(
                f"index {kind}: docs={idx.n_docs} terms={len(idx.postings)} "
                f"collection_length={idx.collection_length} audit=OK"
            )
    return outputs


def _citations_allowed(cfg: PipelineConfig, store: CorpusStore, topic_id: str) -> bool:
    return not cfg.monolingual or store.get(topic_id).language == cfg.monolingual


def stage_worksets(cfg: PipelineConfig, ws: Workspace) -> List[str]:
    store = load_store(ws)
    qrels = evaluate.load_qrels(_require(ws.path("qrels.txt")))
    eval_topics = sorted(t for t in qrels if t in store)
    val_topics, val_qrels = fusion.build_validation_set(
        store,
        n=cfg.validation_size,
        min_citations=cfg.validation_min_citations,
        exclude=set(eval_topics),
    )
    with open(ws.path("validation-topics.txt"), "w", encoding="utf-8") as fh:
        fh.writelines(f"{t}\n" for t in val_topics)
    evaluate.save_qrels(val_qrels, ws.path("validation-qrels.txt"))

    cooc = workingset.ecla_cooccurrence(store)
    sets = []
    for t in eval_topics:
        sets.append(
            workingset.build_working_set(
                t, store, cfg.ws_lower, cfg.ws_upper, cooc, cfg.cooccur_k,
                relevant=set(qrels[t]),
                use_citations=_citations_allowed(cfg, store, t),
            )
        )
    n_eval = len(sets)
    for t in val_topics:
        sets.append(
            workingset.build_working_set(
                t, store, cfg.ws_lower, cfg.ws_upper, cooc, cfg.cooccur_k,
                before_date=store.get(t).priority_date,
                relevant=set(val_qrels[t]),
                use_citations=_citations_allowed(cfg, store, t),
            )
        )
    # only active sets restrict retrieval downstream
    workingset.save_working_sets([s for s in sets if s.active], ws.path("worksets.tsv"))
    workingset.save_step_traces(sets, ws.path("step_traces.csv"))
    outputs = [
        str(ws.path("validation-topics.txt")), str(ws.path("validation-qrels.txt")),
        str(ws.path("worksets.tsv")), str(ws.path("step_traces.csv")),
    ]
    if cfg.figures and n_eval:
        from . import figures

        eval_sets = sets[:n_eval]
        total_rel = sum(len(qrels[s.topic_id]) for s in eval_sets)
        ladder = []
        mean_sizes = []
        for step in range(len(workingset.STEP_LABELS)):
            covered = sum(s.step_relevant[step] for s in eval_sets)
            ladder.append(covered / total_rel if total_rel else 0.0)
            mean_sizes.append(
                sum(s.step_trace[step][1] for s in eval_sets) / n_eval
            )
        fig_path = ws.path("figures") / "workset_recall_ladder.png"
        figures.plot_recall_ladder(workingset.STEP_LABELS, ladder, mean_sizes, fig_path)
        outputs.append(str(fig_path))
    return outputs


def _all_topics(ws: Workspace, store: CorpusStore) -> Tuple[List[str], List[str]]:
    qrels = evaluate.load_qrels(_require(ws.path("qrels.txt")))
    eval_topics = sorted(t for t in qrels if t in store)
    val_path = ws.path("validation-topics.txt")
    val_topics = []
    if val_path.exists():
        val_topics = [t for t in val_path.read_text(encoding="utf-8").split() if t]
    return eval_topics, val_topics


def _build_queries(
    cfg: PipelineConfig, store: CorpusStore, res: AnalyzerResources, topics: Sequence[str]
) -> Dict[str, Dict[str, Counter]]:
    """Whole-document queries per analyzer, from the plain meta-documents."""
    from .index import build_metadoc

    metadocs = {pid: build_metadoc(store.get(pid)) for pid in topics}
    queries: Dict[str, Dict[str, Counter]] = {}
    for analyzer in analyzers_for(cfg):
        restrict = cfg.monolingual if (cfg.monolingual and analyzer == "concept") else None
        per_topic = {}
        for pid in topics:
            terms = analyze.analyze_to_terms(metadocs[pid], analyzer, res, restrict)
            per_topic[pid] = terms
        queries[analyzer] = per_topic
    return queries


def _mean_phrase_words(terms: Counter) -> float:
    total = sum(terms.values())
    if not total:
        return 0.0
    return sum((term.count("_") + 1) * n for term, n in terms.items()) / total


def stage_retrieve(cfg: PipelineConfig, ws: Workspace) -> List[str]:
    store = load_store(ws)
    res = load_resources(ws, store)
    eval_topics, val_topics = _all_topics(ws, store)
    topics = sorted(set(eval_topics) | set(val_topics))
    worksets = {}
    if ws.path("worksets.tsv").exists():
        worksets = workingset.load_working_sets(ws.path("worksets.tsv"))
    queries = _build_queries(cfg, store, res, topics)

    with open(ws.path("querystats.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topic_id", "analyzer", "query_size", "mean_phrase_words"])
        for analyzer in analyzers_for(cfg):
            for pid in topics:
                terms = queries[analyzer][pid]
                mpw = _mean_phrase_words(terms) if analyzer == "phrase-en" else ""
                writer.writerow([pid, analyzer, sum(terms.values()), mpw])

    outputs = [str(ws.path("querystats.csv"))]
    for analyzer in analyzers_for(cfg):
        index = load_index(_require(ws.index_path(analyzer)))
        for model in RETRIEVAL_MODELS:
            model_id = f"{model}-{analyzer}"

            def run_topic(pid: str) -> Optional[RankedList]:
                terms = queries[analyzer][pid]
                if not terms:
                    return None
                return retrieve(
                    Query(pid, terms, analyzer), index, model,
                    working_set=worksets.get(pid), cutoff=cfg.cutoff,
                    model_id=model_id, kl_lambda=cfg.kl_lambda,
                    bm25_k1=cfg.bm25_k1, bm25_b=cfg.bm25_b, bm25_k3=cfg.bm25_k3,
                )

            if cfg.threads > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    lists = list(pool.map(run_topic, topics))
            else:
                lists = [run_topic(pid) for pid in topics]
            path = ws.run_path(model_id)
            write_run([l for l in lists if l is not None], path)
            outputs.append(str(path))

    baseline = [
        workingset.cited_patents_run(pid, store)
        for pid in topics
        if store.cited(pid) and _citations_allowed(cfg, store, pid)
    ]
    path = ws.run_path("cited-baseline")
    write_run([b for b in baseline if b.entries], path)
    outputs.append(str(path))
    return outputs


def _load_model_runs(cfg: PipelineConfig, ws: Workspace) -> Dict[str, Dict[str, RankedList]]:
    runs = {}
    for model_id in model_ids_for(cfg):
        path = ws.run_path(model_id)
        if path.exists():
            runs[model_id] = read_run(path)
    if not runs:
        raise PriorArtError(f"no model run files found under {ws.root / 'runs'}")
    return runs


def _load_querystats(ws: Workspace) -> Dict[Tuple[str, str], Tuple[int, Optional[float]]]:
    stats = {}
    path = _require(ws.path("querystats.csv"))
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            mpw = float(row["mean_phrase_words"]) if row["mean_phrase_words"] else None
            stats[(row["topic_id"], row["analyzer"])] = (int(row["query_size"]), mpw)
    return stats


def _contexts_for(
    cfg: PipelineConfig, ws: Workspace, store: CorpusStore, topics: Sequence[str]
) -> Dict[str, fusion.TopicContext]:
    worksets = {}
    if ws.path("worksets.tsv").exists():
        worksets = workingset.load_working_sets(ws.path("worksets.tsv"))
    stats = _load_querystats(ws)
    contexts = {}
    for pid in topics:
        members = worksets.get(pid)
        ws_obj = None
        if members is not None:
            ws_obj = workingset.WorkingSet(pid, frozenset(members), [], active=True)
        sizes = {}
        mpw = None
        for analyzer in analyzers_for(cfg):
            size, phrase_words = stats.get((pid, analyzer), (0, None))
            sizes[analyzer] = size
            if analyzer == "phrase-en" and phrase_words is not None:
                mpw = phrase_words
        contexts[pid] = fusion.TopicContext(
            record=store.get(pid), working_set=ws_obj,
            query_sizes=sizes, mean_phrase_words=mpw,
        )
    return contexts


def stage_train_merge(cfg: PipelineConfig, ws: Workspace) -> List[str]:
    store = load_store(ws)
    val_qrels = evaluate.load_qrels(_require(ws.path("validation-qrels.txt")))
    val_topics = set(val_qrels)
    runs = _load_model_runs(cfg, ws)
    runs_val = {}
    for mid, by_topic in runs.items():
        judged = {t: rl for t, rl in by_topic.items() if t in val_topics}
        if len(judged) < 2:
            print(f"warning: model {mid} has {len(judged)} judged training topics, skipped")
            continue
        runs_val[mid] = judged
    if not runs_val:
        raise PriorArtError("no retrieval model has enough judged training topics")
    contexts = _contexts_for(cfg, ws, store, sorted(val_topics & set(store.order)))
    models, schemas = fusion.train_merge(
        contexts, runs_val, val_qrels, store,
        kind=cfg.learner, folds=cfg.cv_folds, grid=cfg.merge_grid(),
    )
    path = ws.path("models") / "merge.json"
    fusion.save_merge_models(models, schemas, path)
    return [str(path)]


def stage_merge(cfg: PipelineConfig, ws: Workspace) -> List[str]:
    store = load_store(ws)
    runs = _load_model_runs(cfg, ws)
    models, schemas = fusion.load_merge_models(_require(ws.path("models") / "merge.json"))
    topics = sorted({t for by_topic in runs.values() for t in by_topic})
    contexts = _contexts_for(cfg, ws, store, topics)
    merged_lists = []
    confidence_rows = []
    for pid in topics:
        lists = {}
        confidences = {}
        ctx = contexts[pid]
        for model_id, by_topic in sorted(runs.items()):
            ranked = by_topic.get(pid)
            if ranked is None or model_id not in models:
                continue
            feats = fusion.extract_merge_features(
                ctx.record, model_id, ranked, ctx.working_set,
                ctx.query_size_for(model_id), ctx.mean_phrase_words,
            )
            confidences[model_id] = fusion.predict_confidence(
                models[model_id], schemas[model_id], feats
            )
            lists[model_id] = fusion.normalize_scores(ranked)
            confidence_rows.append((pid, model_id, confidences[model_id]))
        if lists:
            merged_lists.append(fusion.merge(pid, lists, confidences, cfg.cutoff))
    path = ws.run_path("merged")
    write_run(merged_lists, path)
    fusion.write_confidences(confidence_rows, ws.path("confidences.csv"))
    outputs = [str(path), str(ws.path("confidences.csv"))]
    if cfg.figures and confidence_rows:
        from . import figures

        fig_path = ws.path("figures") / "merge_confidences.png"
        figures.plot_confidence_distribution(confidence_rows, fig_path)
        outputs.append(str(fig_path))
    return outputs


def stage_train_rerank(cfg: PipelineConfig, ws: Workspace) -> List[str]:
    store = load_store(ws)
    val_qrels = evaluate.load_qrels(_require(ws.path("validation-qrels.txt")))
    merged = read_run(_require(ws.run_path("merged")))
    merged_val = {t: rl for t, rl in merged.items() if t in val_qrels}
    citation_topics = None
    if cfg.monolingual:
        citation_topics = {
            t for t in merged_val if store.get(t).language == cfg.monolingual
        }
    model = rerank.train_rerank(
        merged_val, val_qrels, store,
        negatives_per_topic=cfg.negatives_per_topic,
        kind=cfg.learner, folds=cfg.cv_folds, grid=cfg.rerank_grid(),
        max_rows=cfg.rerank_max_rows, citation_topics=citation_topics,
    )
    path = ws.path("models") / "rerank.json"
    path.write_text(model.to_json(), encoding="utf-8")
    return [str(path)]


def stage_rerank(cfg: PipelineConfig, ws: Workspace) -> List[str]:
    from .regress import RegressionModel

    store = load_store(ws)
    merged = read_run(_require(ws.run_path("merged")))
    model = RegressionModel.from_json(
        (_require(ws.path("models") / "rerank.json")).read_text(encoding="utf-8")
    )
    final = []
    feature_rows = []
    for pid in sorted(merged):
        use_citations = _citations_allowed(cfg, store, pid)
        final.append(
            rerank.apply_rerank(
                merged[pid], model, store, cutoff=cfg.cutoff,
                use_citations=use_citations,
            )
        )
        feats = rerank.extract_rerank_features_batch(
            store.get(pid), merged[pid].ids(), store, use_citations
        )
        for cand in merged[pid].ids():
            feature_rows.append((pid, cand, feats[cand]))
    path = ws.run_path("final")
    write_run(final, path)
    rerank.write_feature_dump(feature_rows, ws.path("rerank-features.csv"))
    return [str(path), str(ws.path("rerank-features.csv"))]


def stage_eval(
    cfg: PipelineConfig,
    ws: Workspace,
    run_files: Optional[Sequence[str]] = None,
    qrels_file: Optional[str] = None,
    grade: str = "all",
    only_topics: Optional[Set[str]] = None,
) -> List[str]:
    qrels = evaluate.load_qrels(_require(Path(qrels_file or ws.path("qrels.txt"))))
    if run_files:
        paths = [Path(p) for p in run_files]
    else:
        paths = sorted((ws.root / "runs").glob("run-*.txt"))
    if not paths:
        raise PriorArtError(f"no run files to evaluate under {ws.root / 'runs'}")
    named = {}
    for path in paths:
        _require(path)
        name = path.stem.replace("run-", "", 1)
        runs = read_run(path)
        if only_topics is not None:
            runs = {t: rl for t, rl in runs.items() if t in only_topics}
        named[name] = runs
    rows = evaluate.report(named, qrels, grade_filter=grade)
    text = evaluate.format_report(rows)
    print(text)
    ws.path("report.txt").write_text(text + "\n", encoding="utf-8")
    evaluate.write_report_csv(rows, ws.path("report.csv"))
    outputs = [str(ws.path("report.txt")), str(ws.path("report.csv"))]
    if cfg.figures and rows:
        from . import figures

        fig_path = ws.path("figures") / "metrics_by_run.png"
        figures.plot_metrics_by_run(rows, fig_path)
        outputs.append(str(fig_path))
    return outputs


def stage_pipeline(cfg: PipelineConfig, ws: Workspace) -> List[str]:
    outputs = []
    outputs += run_stage("gen", cfg, ws, stage_gen)
    outputs += run_stage("ingest", cfg, ws, stage_ingest)
    outputs += run_stage("index", cfg, ws, stage_index)
    outputs += run_stage("worksets", cfg, ws, stage_worksets)
    outputs += run_stage("retrieve", cfg, ws, stage_retrieve)
    outputs += run_stage("train-merge", cfg, ws, stage_train_merge)
    outputs += run_stage("merge", cfg, ws, stage_merge)
    outputs += run_stage("train-rerank", cfg, ws, stage_train_rerank)
    outputs += run_stage("rerank", cfg, ws, stage_rerank)
    store = load_store(ws)
    eval_topics, _ = _all_topics(ws, store)
    outputs += run_stage("eval", cfg, ws, stage_eval, only_topics=set(eval_topics))
    return outputs
