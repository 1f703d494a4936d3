import numpy as np
import pytest

from priorart import syngen
from priorart.corpus import CorpusStore
from priorart.regress import LINEAR, RegressionModel
from priorart.rerank import (
    apply_rerank,
    extract_rerank_features,
    extract_rerank_features_batch,
    train_rerank,
)
from priorart.retrieve import RankedList

from test_workingset import make_record, store_of


def fixed_boost_model(bias, cite_weight=0.0):
    """Linear model over the 7 rerank features: bias + cite_weight * cited."""
    weights = np.zeros(8)
    weights[0] = bias
    weights[1] = cite_weight
    return RegressionModel(kind=LINEAR, weights=weights)


class TestExtractFeatures:
    def _store(self):
        return store_of([
            make_record("EP0000001", cites=("EP0000002",), inventors=("a", "b"),
                        applicants=("ACME",), ipc=("F02K",), ecla=("F02K1", "F02K2")),
            make_record("EP0000002", inventors=("b", "c"), applicants=("ACME",),
                        ipc=("F02K",), ecla=("F02K1",)),
            make_record("EP0000003", inventors=("z",), applicants=("Other",),
                        ipc=("G01B",), ecla=("G01B9",)),
            make_record("EP0000004", cites=("EP0000002",), inventors=("q",),
                        applicants=("Q",), ipc=("F02K",), ecla=()),
        ])

    def test_cited_in_description(self):
        store = self._store()
        topic = store.get("EP0000001")
        feats = extract_rerank_features(topic, "EP0000002", store,
                                        ["EP0000002", "EP0000003"])
        assert feats.cited_in_description is True
        feats3 = extract_rerank_features(topic, "EP0000003", store,
                                         ["EP0000002", "EP0000003"])
        assert feats3.cited_in_description is False

    def test_inventor_overlap_fraction(self):
        store = self._store()
        topic = store.get("EP0000001")  # inventors {a, b}
        feats = extract_rerank_features(topic, "EP0000002", store, ["EP0000002"])
        assert feats.frac_common_inventors == pytest.approx(0.5)
        feats3 = extract_rerank_features(topic, "EP0000003", store, ["EP0000003"])
        assert feats3.frac_common_inventors == 0.0

    def test_common_class_counts(self):
        store = self._store()
        topic = store.get("EP0000001")
        feats = extract_rerank_features(topic, "EP0000002", store, ["EP0000002"])
        assert feats.n_common_ipc == 1
        assert feats.n_common_ecla == 1
        assert feats.same_applicant is True

    def test_citation_probabilities_normalized(self):
        store = self._store()
        topic = store.get("EP0000001")
        result = ["EP0000002", "EP0000003"]
        feats = extract_rerank_features_batch(topic, result, store)
        # EP2 is cited by EP1 and EP4, both in IPC class F02K of the topic;
        # EP3 is cited by nobody -> max is EP2's count, EP2 normalizes to 1
        assert feats["EP0000002"].p_cite_ipc == 1.0
        assert feats["EP0000003"].p_cite_ipc == 0.0
        # within the result set nobody cites anybody here
        assert feats["EP0000002"].p_cite_results == 0.0

    def test_zero_denominator_gives_zero(self):
        store = store_of([
            make_record("EP0000001", ipc=(), ecla=()),
            make_record("EP0000002", ipc=(), ecla=()),
        ])
        feats = extract_rerank_features(store.get("EP0000001"), "EP0000002",
                                        store, ["EP0000002"])
        assert feats.p_cite_ipc == 0.0 and feats.p_cite_results == 0.0

    def test_bounds(self, tmp_path):
        syngen.generate(81, syngen.GenParams(n_patents=100, n_clusters=5), tmp_path)
        store = CorpusStore.load(tmp_path / "corpus.jsonl")
        topic = store.order[50]
        result = store.order[:30]
        for f in extract_rerank_features_batch(store.get(topic), result, store).values():
            assert 0.0 <= f.p_cite_ipc <= 1.0
            assert 0.0 <= f.p_cite_results <= 1.0
            assert 0.0 <= f.frac_common_inventors <= 1.0
            assert f.n_common_ecla >= 0 and f.n_common_ipc >= 0


class TestTrainRerank:
    def test_targets_and_row_bound(self, tmp_path):
        syngen.generate(83, syngen.GenParams(n_patents=120, n_clusters=5), tmp_path)
        store = CorpusStore.load(tmp_path / "corpus.jsonl")
        topic = sorted(t for t in store.order if len(store.cited(t)) >= 3)[0]
        relevant = store.cited(topic)[:3]
        others = [p for p in store.order if p not in relevant and p != topic][:100]
        entries = [(pid, 1.0 - i * 0.005) for i, pid in enumerate(relevant + others)]
        runs = {topic: RankedList(topic, "merged", entries)}
        qrels = {topic: {pid: 1 for pid in relevant}}

        seen_rows = []
        import priorart.rerank as rr
        original = rr.regress.fit_scaled

        def spy(X, y, *args, **kwargs):
            seen_rows.append((np.asarray(X).shape[0], list(np.asarray(y))))
            return original(X, y, *args, **kwargs)

        rr.regress.fit_scaled = spy
        try:
            train_rerank(runs, qrels, store, negatives_per_topic=20,
                         grid=[{"gamma": 1.0, "reg": 0.1}])
        finally:
            rr.regress.fit_scaled = original
        n_rows, targets = seen_rows[0]
        assert n_rows <= 23
        w_max = entries[0][1]
        assert set(targets) <= {0.0, w_max}
        assert targets.count(w_max) == 3

    def test_fewer_candidates_fewer_rows(self, tmp_path):
        syngen.generate(83, syngen.GenParams(n_patents=120, n_clusters=5), tmp_path)
        store = CorpusStore.load(tmp_path / "corpus.jsonl")
        topic = store.order[100]
        entries = [(store.order[0], 1.0), (store.order[1], 0.5)]
        runs = {topic: RankedList(topic, "merged", entries)}
        qrels = {topic: {store.order[0]: 1}}
        model = train_rerank(runs, qrels, store, grid=[{"gamma": 1.0, "reg": 0.1}])
        assert model is not None


class TestApplyRerank:
    def _store(self, tmp_path):
        syngen.generate(85, syngen.GenParams(n_patents=80, n_clusters=4), tmp_path)
        return CorpusStore.load(tmp_path / "corpus.jsonl")

    def test_zero_model_is_identity_up_to_cutoff(self, tmp_path):
        store = self._store(tmp_path)
        entries = [(pid, 1.0 - i * 0.01) for i, pid in enumerate(store.order[:40])]
        ranked = RankedList(store.order[60], "merged", entries)
        out = apply_rerank(ranked, fixed_boost_model(bias=0.0), store, cutoff=25)
        assert out.entries == entries[:25]
        out_none = apply_rerank(ranked, None, store, cutoff=25)
        assert out_none.entries == entries[:25]

    def test_boost_formula(self, tmp_path):
        store = self._store(tmp_path)
        ranked = RankedList(store.order[60], "merged", [(store.order[0], 0.5)])
        out = apply_rerank(ranked, fixed_boost_model(bias=1.0), store)
        assert out.entries[0][1] == pytest.approx(1.0)

    def test_negative_prediction_clamped(self, tmp_path):
        store = self._store(tmp_path)
        ranked = RankedList(store.order[60], "merged", [(store.order[0], 0.5)])
        out = apply_rerank(ranked, fixed_boost_model(bias=-5.0), store)
        assert out.entries[0][1] == pytest.approx(0.5)

    def test_order_flip_by_hand(self, tmp_path):
        # w = (0.6, 0.5); s = (0, 0.5) -> w' = (0.6, 0.75): order flips
        store = self._store(tmp_path)
        topic = store.order[60]
        cited = store.cited(topic)
        if not cited:
            topic = next(t for t in store.order if store.cited(t))
            cited = store.cited(topic)
        other = next(p for p in store.order if p not in cited and p != topic)
        ranked = RankedList(topic, "merged", [(other, 0.6), (cited[0], 0.5)])
        model = fixed_boost_model(bias=0.0, cite_weight=0.5)
        out = apply_rerank(ranked, model, store)
        assert out.ids() == [cited[0], other]
        assert out.entries[0][1] == pytest.approx(0.75)
        assert out.entries[1][1] == pytest.approx(0.6)

    def test_candidate_set_preserved(self, tmp_path):
        store = self._store(tmp_path)
        entries = [(pid, 1.0 - i * 0.01) for i, pid in enumerate(store.order[:30])]
        ranked = RankedList(store.order[60], "merged", entries)
        out = apply_rerank(ranked, fixed_boost_model(bias=0.3), store)
        assert set(out.ids()) == {pid for pid, _ in entries}

    def test_boost_monotonicity(self, tmp_path):
        # raising one document's boost never lowers its rank
        store = self._store(tmp_path)
        topic = next(t for t in store.order if store.cited(t))
        cited = store.cited(topic)[0]
        others = [p for p in store.order if p != topic and p != cited][:10]
        entries = sorted(
            [(cited, 0.30)] + [(p, 0.3 + i * 0.05) for i, p in enumerate(others)],
            key=lambda e: (-e[1], e[0]),
        )
        ranked = RankedList(topic, "merged", entries)
        prev_rank = None
        for boost in (0.0, 0.2, 0.5, 1.0, 2.0):
            out = apply_rerank(ranked, fixed_boost_model(0.0, boost), store)
            rank = out.ids().index(cited)
            if prev_rank is not None:
                assert rank <= prev_rank
            prev_rank = rank
