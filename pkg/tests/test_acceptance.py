"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete.
"""

import functools
import math
import random
import time
from collections import Counter
import numpy as np

from priorart import fusion, rerank, syngen, workingset
from priorart.cli import main as cli_main
from priorart.corpus import CorpusStore
from priorart.evaluate import average_precision, load_qrels, precision_at_k
from priorart.index import build_index, build_metadoc, build_metadocs, index_from_term_bags
from priorart.regress import fit_kernel_rbf, fit_linear
from priorart.retrieve import Query, RankedList, retrieve, score_bm25, score_kl, write_run
from priorart.syngen import GenParams


def criterion(number, title):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            started = time.monotonic()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\nACCEPTANCE {number} [{title}]: FAIL "
                      f"({time.monotonic() - started:.1f}s)")
                raise
            print(f"\nACCEPTANCE {number} [{title}]: PASS "
                  f"({time.monotonic() - started:.1f}s)")
        return wrapper
    return decorate


# ---------------------------------------------------------------- helpers


def naive_kl(query_tokens, doc_index, corpus_tokens, lam=0.4):
    q = Counter(query_tokens)
    d = Counter(corpus_tokens[doc_index])
    coll = Counter()
    for tokens in corpus_tokens:
        coll.update(tokens)
    clen = sum(coll.values())
    dlen = len(corpus_tokens[doc_index])
    qlen = len(query_tokens)
    score = 0.0
    for term, qtf in q.items():
        ctf = coll.get(term, 0)
        if ctf == 0:
            continue
        p_ml = d.get(term, 0) / dlen if dlen else 0.0
        score += (qtf / qlen) * math.log((1 - lam) * p_ml + lam * ctf / clen)
    return score


def naive_bm25(query_tokens, doc_index, corpus_tokens, k1=1.5, b=1.5, k3=3.0):
    q = Counter(query_tokens)
    d = Counter(corpus_tokens[doc_index])
    n_docs = len(corpus_tokens)
    avgdl = sum(len(t) for t in corpus_tokens) / n_docs
    dlen = len(corpus_tokens[doc_index])
    score = 0.0
    for term, qtf in q.items():
        df = sum(1 for tokens in corpus_tokens if term in set(tokens))
        if df == 0:
            continue
        idf = math.log((n_docs - df + 0.5) / (df + 0.5))
        if idf <= 0:
            continue
        tf = d.get(term, 0)
        if tf == 0:
            continue
        score += (
            idf
            * (tf * (k1 + 1) / (tf + k1 * (1 - b + b * dlen / avgdl)))
            * (qtf * (k3 + 1) / (k3 + qtf))
        )
    return score


def uniform_merged_lists(runs_by_model, topic):
    lists = {}
    for mid, by_topic in runs_by_model.items():
        ranked = by_topic.get(topic)
        if ranked is not None and ranked.entries:
            lists[mid] = fusion.normalize_scores(ranked)
    return lists


def ap_of(ranked, relevant):
    if ranked is None:
        return 0.0
    return average_precision(ranked.ids(), relevant)


# ---------------------------------------------------------------- criteria


@criterion(1, "scorer oracle equivalence")
def test_criterion_1_scorer_oracle_equivalence():
    started = time.monotonic()
    rng = random.Random(101)
    for trial in range(20):
        vocab = [f"t{i}" for i in range(rng.randint(5, 50))]
        n_docs = rng.randint(2, 200)
        corpus_tokens = [
            rng.choices(vocab, k=rng.randint(1, 60)) for _ in range(n_docs)
        ]
        index = index_from_term_bags(
            [(f"EP{i + 1:07d}", Counter(tokens)) for i, tokens in enumerate(corpus_tokens)],
            "lemma-en",
        )
        query_tokens = rng.choices(vocab + ["oov1", "oov2"], k=rng.randint(1, 25))
        query = Query("T", Counter(query_tokens), "lemma-en")
        for ordinal in range(n_docs):
            kl_mine = score_kl(query, ordinal, index)
            kl_ref = naive_kl(query_tokens, ordinal, corpus_tokens)
            assert abs(kl_mine - kl_ref) <= 1e-9, (trial, ordinal, kl_mine, kl_ref)
            bm_mine = score_bm25(query, ordinal, index)
            bm_ref = naive_bm25(query_tokens, ordinal, corpus_tokens)
            assert abs(bm_mine - bm_ref) <= 1e-9, (trial, ordinal, bm_mine, bm_ref)
    assert time.monotonic() - started < 30.0


@criterion(2, "working-set monotonicity ladder")
def test_criterion_2_working_set_ladder(tmp_path):
    started = time.monotonic()
    syngen.generate(202, GenParams(n_patents=5000, n_clusters=40,
                                   citation_density=2.5), tmp_path)
    store = CorpusStore.load(tmp_path / "corpus.jsonl")
    qrels = load_qrels(tmp_path / "qrels.txt")
    topics = sorted(t for t in qrels if t in store)
    assert topics
    cooc = workingset.ecla_cooccurrence(store)

    n_steps = len(workingset.STEP_LABELS)
    pooled_covered = [0] * n_steps
    total_relevant = 0
    citations_exist = False
    for topic in topics:
        relevant = set(qrels[topic])
        ws = workingset.build_working_set(topic, store, cooccurrence=cooc,
                                          relevant=relevant)
        sizes = [s for _, s in ws.step_trace]
        assert all(b >= a for a, b in zip(sizes, sizes[1:])), topic
        assert all(b >= a for a, b in
                   zip(ws.step_relevant, ws.step_relevant[1:])), topic
        total_relevant += len(relevant)
        for i, covered in enumerate(ws.step_relevant):
            pooled_covered[i] += covered
        if store.cited(topic):
            citations_exist = True

    ladder = [c / total_relevant for c in pooled_covered]
    assert all(b >= a for a, b in zip(ladder, ladder[1:]))
    assert citations_exist
    assert ladder[0] > 0.0
    elapsed = time.monotonic() - started
    assert elapsed < 120.0, f"ladder took {elapsed:.1f}s"


@criterion(3, "regression recovery")
def test_criterion_3_regression_recovery():
    started = time.monotonic()
    rng = np.random.default_rng(303)
    planted = np.array([2.0, -3.0, 0.5, 1.25, -0.125])
    X = rng.uniform(-1, 1, size=(60, 5))
    y = X @ planted + 0.75
    model = fit_linear(X, y)
    assert abs(model.weights[0] - 0.75) <= 1e-6
    assert np.max(np.abs(model.weights[1:] - planted)) <= 1e-6

    X_train = rng.uniform(0, 2 * np.pi, size=(80, 1))
    y_train = np.sin(X_train[:, 0])
    X_test = np.linspace(0.05, 2 * np.pi - 0.05, 60)[:, None]
    y_test = np.sin(X_test[:, 0])
    kernel = fit_kernel_rbf(X_train, y_train, gamma=1.0, reg=1e-3)
    linear = fit_linear(X_train, y_train)
    rmse_k = float(np.sqrt(np.mean((kernel.predict(X_test) - y_test) ** 2)))
    rmse_l = float(np.sqrt(np.mean((linear.predict(X_test) - y_test) ** 2)))
    assert rmse_k <= 0.8 * rmse_l, (rmse_k, rmse_l)
    assert time.monotonic() - started < 10.0


@criterion(4, "fusion beats single models and uniform merging")
def test_criterion_4_fusion_improvement(tmp_path):
    started = time.monotonic()
    # language-specialized construction: EN/DE mix, same-language near
    # duplicates as relevance, mostly monolingual text, so each lemma model
    # is strong only on topics in its own language
    syngen.generate(404, GenParams(n_patents=700, n_clusters=8,
                                   lang_mix=(0.5, 0.5, 0.0),
                                   citation_density=1.0, grant_rate=0.4,
                                   near_duplicate_rate=1.0),
                    tmp_path)
    store = CorpusStore.load(tmp_path / "corpus.jsonl")
    qrels = load_qrels(tmp_path / "qrels.txt")
    topics = sorted(t for t in qrels if t in store)
    train_topics = topics[0::2]
    test_topics = topics[1::2]
    assert len(test_topics) >= 40

    from priorart.analyze import analyze_to_terms

    metadocs = build_metadocs(store)
    analyzers = ("lemma-en", "lemma-de")
    indexes = {a: build_index(metadocs, a) for a in analyzers}
    queries = {
        a: {t: analyze_to_terms(build_metadoc(store.get(t)), a) for t in topics}
        for a in analyzers
    }
    runs = {}
    for a in analyzers:
        model_id = f"kl-{a}"
        runs[model_id] = {}
        for t in topics:
            terms = queries[a][t]
            if terms:
                runs[model_id][t] = retrieve(
                    Query(t, terms, a), indexes[a], "kl", cutoff=1000,
                    model_id=model_id,
                )

    contexts = {
        t: fusion.TopicContext(
            record=store.get(t), working_set=None,
            query_sizes={a: sum(queries[a][t].values()) for a in analyzers},
        )
        for t in topics
    }
    runs_train = {
        mid: {t: rl for t, rl in by_topic.items() if t in set(train_topics)}
        for mid, by_topic in runs.items()
    }
    models, schemas = fusion.train_merge(
        contexts, runs_train, qrels, store,
        grid=[{"gamma": g, "reg": r} for g in (0.1, 1.0) for r in (1e-3, 1e-2)],
    )

    def merged_for(topic, trained):
        lists = uniform_merged_lists(runs, topic)
        if not lists:
            return None
        if trained:
            confidences = {}
            for mid in lists:
                ctx = contexts[topic]
                feats = fusion.extract_merge_features(
                    ctx.record, mid, runs[mid][topic], None,
                    ctx.query_size_for(mid),
                )
                confidences[mid] = fusion.predict_confidence(
                    models[mid], schemas[mid], feats
                )
        else:
            confidences = {mid: 1.0 for mid in lists}
        return fusion.merge(topic, lists, confidences)

    map_trained = map_uniform = 0.0
    best_single = {mid: 0.0 for mid in runs}
    for t in test_topics:
        relevant = set(qrels[t])
        map_trained += ap_of(merged_for(t, trained=True), relevant)
        uniform = merged_for(t, trained=False)
        map_uniform += ap_of(uniform, relevant)
        for mid in runs:
            best_single[mid] += ap_of(runs[mid].get(t), relevant)

        # uniform merging must equal ranking by mean normalized score, exactly
        if uniform is not None:
            lists = uniform_merged_lists(runs, t)
            means = {}
            for nl in lists.values():
                for pid, w in nl.entries:
                    means[pid] = means.get(pid, 0.0) + w / len(lists)
            expected = [pid for pid, _ in
                        sorted(means.items(), key=lambda kv: (-kv[1], kv[0]))][:1000]
            assert uniform.ids() == expected, t

    n = len(test_topics)
    map_trained /= n
    map_uniform /= n
    best = max(best_single.values()) / n
    assert map_trained >= map_uniform - 1e-12, (map_trained, map_uniform)
    assert map_trained >= best - 1e-9, (map_trained, best)
    assert map_trained > best, (map_trained, best)
    elapsed = time.monotonic() - started
    assert elapsed < 300.0, f"fusion check took {elapsed:.1f}s"


@criterion(5, "re-ranking improves held-out AP")
def test_criterion_5_rerank_improvement(tmp_path):
    started = time.monotonic()
    # relevance = citations only
    syngen.generate(505, GenParams(n_patents=1400, n_clusters=12,
                                   citation_density=3.0,
                                   near_duplicate_rate=0.0,
                                   topic_fraction=1.0), tmp_path)
    store = CorpusStore.load(tmp_path / "corpus.jsonl")
    qrels = load_qrels(tmp_path / "qrels.txt")
    topics = sorted(t for t in qrels if t in store)
    train_topics = topics[0::2]
    test_topics = topics[1::2]
    assert len(test_topics) >= 200, len(test_topics)

    metadocs = build_metadocs(store)
    index = build_index(metadocs, "lemma-en")
    from priorart.analyze import analyze_to_terms

    merged = {}
    for t in topics:
        terms = analyze_to_terms(build_metadoc(store.get(t)), "lemma-en")
        if not terms:
            continue
        ranked = retrieve(Query(t, terms, "lemma-en"), index, "kl",
                          cutoff=1000, model_id="merged")
        if ranked.entries:
            merged[t] = fusion.merge(t, {"m": fusion.normalize_scores(ranked)},
                                     {"m": 1.0})

    model = rerank.train_rerank(
        {t: rl for t, rl in merged.items() if t in set(train_topics)},
        qrels, store, negatives_per_topic=20,
        grid=[{"gamma": 1.0, "reg": 0.1}, {"gamma": 0.1, "reg": 0.01}],
        max_rows=1500,
    )

    deltas = []
    before_sum = after_sum = 0.0
    n_eval = 0
    for t in test_topics:
        ranked = merged.get(t)
        if ranked is None:
            continue
        relevant = set(qrels[t])
        before = average_precision(ranked.ids()[:1000], relevant)
        after_list = rerank.apply_rerank(ranked, model, store, cutoff=1000)
        after = average_precision(after_list.ids(), relevant)
        before_sum += before
        after_sum += after
        n_eval += 1
        if after != before:
            deltas.append(after - before)
    assert n_eval >= 200, n_eval
    assert after_sum / n_eval >= before_sum / n_eval, (after_sum / n_eval,
                                                       before_sum / n_eval)
    improved = sum(1 for d in deltas if d > 0)
    assert deltas, "re-ranking changed nothing"
    assert improved / len(deltas) >= 0.55, (improved, len(deltas))

    # a zero model must reproduce the truncated input byte for byte
    some_topic = next(iter(merged))
    zero_out = rerank.apply_rerank(merged[some_topic], None, store, cutoff=1000)
    write_run([zero_out], tmp_path / "zero_a.txt")
    truncated = RankedList(some_topic, merged[some_topic].model_id,
                           merged[some_topic].entries[:1000])
    write_run([truncated], tmp_path / "zero_b.txt")
    assert (tmp_path / "zero_a.txt").read_bytes() == (tmp_path / "zero_b.txt").read_bytes()
    elapsed = time.monotonic() - started
    assert elapsed < 300.0, f"rerank check took {elapsed:.1f}s"


@criterion(6, "cited-patents baseline beats random ranking by 10x")
def test_criterion_6_cited_baseline(tmp_path):
    syngen.generate(606, GenParams(n_patents=800, n_clusters=8,
                                   citation_density=2.5), tmp_path)
    store = CorpusStore.load(tmp_path / "corpus.jsonl")
    qrels = load_qrels(tmp_path / "qrels.txt")
    topics = [t for t in sorted(qrels) if t in store and store.cited(t)]
    assert topics

    rng = random.Random(607)
    cited_sum = random_sum = 0.0
    for t in topics:
        relevant = set(qrels[t])
        cited_sum += average_precision(workingset.cited_patents_run(t, store).ids(),
                                       relevant)
        shuffled = [p for p in store.order if p != t]
        rng.shuffle(shuffled)
        random_sum += average_precision(shuffled[:1000], relevant)
    map_cited = cited_sum / len(topics)
    map_random = random_sum / len(topics)
    assert map_cited > 10.0 * map_random, (map_cited, map_random)


@criterion(7, "equation-level unit identities")
def test_criterion_7_equation_identities():
    # score normalization: [5, 10, 20] -> [0, 1/3, 1], i.e. descending [1, 1/3, 0]
    out = fusion.normalize_scores(
        RankedList("T", "m", [("a", 20.0), ("b", 10.0), ("c", 5.0)])
    )
    assert [w for _, w in out.entries] == [1.0, 1.0 / 3.0, 0.0]

    # merged score: c = (0.5, 0.5), w = (1.0, 0.4) -> 0.7
    merged = fusion.merge(
        "T",
        {"m1": RankedList("T", "m1", [("d", 1.0)]),
         "m2": RankedList("T", "m2", [("d", 0.4)])},
        {"m1": 0.5, "m2": 0.5},
    )
    assert merged.entries[0][1] == 0.7

    # boost: w' = w * (s + 1); s = 0 is the identity
    assert 0.5 * (0.0 + 1.0) == 0.5
    assert 0.5 * (1.0 + 1.0) == 1.0

    # training targets are exactly {w_max, 0}
    captured = {}
    import priorart.regress as regress_mod

    original = regress_mod.fit_scaled

    def spy(X, y, *args, **kwargs):
        captured["targets"] = set(float(v) for v in y)
        return original(X, y, *args, **kwargs)

    regress_mod.fit_scaled = spy
    try:
        records = []
        from test_workingset import make_record

        records.append(make_record("EP0000001", cites=("EP0000002",)))
        records.append(make_record("EP0000002"))
        records.append(make_record("EP0000003"))
        records.append(make_record("EP0000004"))
        store = CorpusStore(records)
        merged_run = {"EP0000001": RankedList("EP0000001", "merged",
                                              [("EP0000002", 0.8),
                                               ("EP0000003", 0.5),
                                               ("EP0000004", 0.25)])}
        rerank.train_rerank(merged_run, {"EP0000001": {"EP0000002": 1}}, store,
                            grid=[{"gamma": 1.0, "reg": 0.1}])
    finally:
        regress_mod.fit_scaled = original
    assert captured["targets"] == {0.8, 0.0}


@criterion(8, "metric oracle")
def test_criterion_8_metric_oracle():
    got = average_precision(["r", "n", "r2"], {"r", "r2"})
    assert abs(got - (1.0 + 2.0 / 3.0) / 2.0) <= 1e-9

    def naive_ap(ranked, relevant):
        precisions = []
        for doc in relevant:
            if doc in ranked:
                k = ranked.index(doc) + 1
                precisions.append(sum(1 for d in ranked[:k] if d in relevant) / k)
            else:
                precisions.append(0.0)
        return sum(precisions) / len(precisions)

    rng = random.Random(808)
    for _ in range(1000):
        universe = [f"d{i}" for i in range(rng.randint(2, 40))]
        ranked = rng.sample(universe, k=rng.randint(1, len(universe)))
        relevant = set(rng.sample(universe, k=rng.randint(1, len(universe))))
        assert abs(average_precision(ranked, relevant)
                   - naive_ap(ranked, relevant)) <= 1e-12
        k = rng.randint(1, 15)
        naive_pk = sum(1 for d in ranked[:k] if d in relevant) / k
        assert abs(precision_at_k(ranked, relevant, k) - naive_pk) <= 1e-12


@criterion(9, "pipeline determinism across reruns and thread counts")
def test_criterion_9_pipeline_determinism(tmp_path):
    small = [
        "--set", "gen_n_patents=120", "--set", "gen_n_clusters=5",
        "--set", "validation_size=30", "--set", "validation_min_citations=3",
        "--no-figures",
    ]
    outputs = {}
    for name, threads in (("a", "1"), ("b", "1"), ("c", "8")):
        ws = tmp_path / name
        code = cli_main(["pipeline", "-w", str(ws), "--seed", "19",
                         "--threads", threads] + small)
        assert code == 0
        outputs[name] = (ws / "runs" / "run-final.txt").read_bytes()
        assert outputs[name]
    assert outputs["a"] == outputs["b"], "same seed, same threads differ"
    assert outputs["a"] == outputs["c"], "thread count changed the final run"
