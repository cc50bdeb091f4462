import json

import numpy as np
import pytest

from topicmask.corpus import (
    Document,
    build_corpus,
    ingest_jsonl,
    load_corpus,
    load_stopwords,
    preprocess,
    save_corpus,
    split,
    tokenize,
    virtual_windows,
)


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


class TestIngest:
    def test_count_preservation(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(p, [{"text": "alpha beta"}, {"text": "gamma"}, {"text": "beta beta"}])
        c = ingest_jsonl(p)
        assert c.n_docs == 3

    def test_missing_text_cites_line(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(p, [{"text": "ok"}, {"id": "x"}, {"text": "ok"}])
        with pytest.raises(ValueError, match="line 2"):
            ingest_jsonl(p)

    def test_malformed_json_cites_line(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text('{"text": "ok"}\n{not json\n', encoding="utf-8")
        with pytest.raises(ValueError, match="line 2"):
            ingest_jsonl(p)

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text("", encoding="utf-8")
        with pytest.raises(ValueError, match="empty"):
            ingest_jsonl(p)

    def test_labels_first_appearance_order(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(
            p,
            [
                {"text": "x", "label": "sports"},
                {"text": "y", "label": "world"},
                {"text": "z", "label": "sports"},
            ],
        )
        c = ingest_jsonl(p)
        assert [d.label for d in c.documents] == [0, 1, 0]
        assert c.label_names == ("sports", "world")

    def test_missing_ids_numbered_by_line(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(p, [{"text": "x"}, {"id": "named", "text": "y"}, {"text": "z"}])
        c = ingest_jsonl(p)
        assert [d.id for d in c.documents] == ["doc-1", "named", "doc-3"]

    def test_tokenize_lowercases_and_strips_punct(self):
        assert tokenize('Hello, World! "quoted" mid-dash') == [
            "hello",
            "world",
            "quoted",
            "mid-dash",
        ]


class TestVocabulary:
    def test_dense_ids(self, tiny_corpus):
        v = tiny_corpus.vocab
        assert sorted(v.word_to_id.values()) == list(range(len(v)))

    def test_frequencies(self, tiny_corpus):
        v = tiny_corpus.vocab
        a, b, c = v.word_to_id["a"], v.word_to_id["b"], v.word_to_id["c"]
        assert v.doc_freq[a] == 2 and v.doc_freq[b] == 2 and v.doc_freq[c] == 1
        assert v.corpus_freq[a] == 2

    def test_bijective_maps(self, tiny_corpus):
        v = tiny_corpus.vocab
        for w, i in v.word_to_id.items():
            assert v.id_to_word[i] == w


class TestPreprocess:
    def test_identity_configuration(self, tiny_corpus):
        out = preprocess(tiny_corpus, frozenset(), max_df_frac=1.0, min_count=1)
        orig = [tiny_corpus.vocab.id_to_word[t] for d in tiny_corpus.documents for t in d.tokens]
        new = [out.vocab.id_to_word[t] for d in out.documents for t in d.tokens]
        assert sorted(orig) == sorted(new)

    def test_max_df_removes_ubiquitous_word(self):
        c = build_corpus([(f"d{i}", ["every", f"u{i}"], None) for i in range(10)])
        out = preprocess(c, max_df_frac=0.5)
        assert "every" not in out.vocab.word_to_id

    def test_min_count_removes_rare_word(self):
        c = build_corpus([("d0", ["quark", "top", "top"], None), ("d1", ["top"], None)])
        out = preprocess(c, min_count=2)
        assert "quark" not in out.vocab.word_to_id
        assert "top" in out.vocab.word_to_id

    def test_stopwords_removed(self, tiny_corpus):
        out = preprocess(tiny_corpus, stopwords=frozenset({"a"}))
        assert "a" not in out.vocab.word_to_id

    def test_emptied_corpus_raises(self, tiny_corpus):
        with pytest.raises(ValueError, match="emptied"):
            preprocess(tiny_corpus, stopwords=frozenset({"a", "b", "c"}))

    def test_idempotent_even_when_docs_drop(self):
        # dropping stopword-only docs raises df fractions on the second
        # pass; a one-shot filter would not be idempotent here
        records = [("s0", ["the"], None), ("s1", ["the"], None)]
        records += [(f"d{i}", ["w", f"x{i}"], None) for i in range(5)]
        records += [(f"e{i}", [f"x{9+i}"], None) for i in range(3)]
        c = build_corpus(records)
        params = dict(stopwords=frozenset({"the"}), max_df_frac=0.55, min_count=1)
        once = preprocess(c, **params)
        twice = preprocess(once, **params)
        assert [d.tokens for d in once.documents] == [d.tokens for d in twice.documents]
        assert once.vocab.id_to_word == twice.vocab.id_to_word

    def test_docs_emptied_are_dropped(self):
        c = build_corpus([("d0", ["keep", "keep"], None), ("d1", ["gone"], None)])
        out = preprocess(c, min_count=2)
        assert [d.id for d in out.documents] == ["d0"]


class TestSplit:
    def test_stratified_counts(self, labeled_corpus):
        s = split(labeled_corpus, n_gold_per_class=2, n_unlabeled=6, n_dev=3, seed=7)
        assert len(s.gold) == 6
        for c in range(labeled_corpus.n_classes):
            assert sum(1 for d in s.gold if d.label == c) == 2
        assert len(s.unlabeled) == 6 and len(s.dev) == 3
        assert len(s.test) == labeled_corpus.n_docs - 6 - 6 - 3

    def test_deterministic(self, labeled_corpus):
        a = split(labeled_corpus, 2, 6, 3, seed=42)
        b = split(labeled_corpus, 2, 6, 3, seed=42)
        assert [d.id for d in a.gold] == [d.id for d in b.gold]
        assert [d.id for d in a.test] == [d.id for d in b.test]

    def test_disjoint_by_id(self, labeled_corpus):
        s = split(labeled_corpus, 2, 6, 3, seed=1)
        parts = [s.gold, s.unlabeled, s.dev, s.test]
        ids = [d.id for part in parts for d in part]
        assert len(ids) == len(set(ids))

    def test_unlabeled_stripped_with_hidden_truth(self, labeled_corpus):
        s = split(labeled_corpus, 2, 6, 3, seed=1)
        assert all(d.label is None for d in s.unlabeled)
        truth = {d.id: d.label for d in labeled_corpus.documents}
        for d in s.unlabeled:
            assert s.unlabeled_truth[d.id] == truth[d.id]

    def test_infeasible_counts_name_class(self, labeled_corpus):
        with pytest.raises(ValueError, match="class-0"):
            split(labeled_corpus, n_gold_per_class=7, n_unlabeled=0, n_dev=0, seed=0)

    def test_unlabeled_corpus_rejected(self, tiny_corpus):
        with pytest.raises(ValueError, match="labeled"):
            split(tiny_corpus, 1, 1, 1, seed=0)


class TestVirtualWindows:
    def test_count_formula(self):
        c = build_corpus([("d", list("abcde"), None)])
        assert len(virtual_windows(c, 2)) == 4

    def test_short_doc_yields_one_window(self):
        c = build_corpus([("d", ["a", "b", "c"], None)])
        wins = virtual_windows(c, 110)
        assert len(wins) == 1
        assert wins[0] == frozenset(c.documents[0].tokens)

    def test_window_one_gives_singletons(self):
        c = build_corpus([("d", ["a", "b", "a"], None)])
        wins = virtual_windows(c, 1)
        assert all(len(w) == 1 for w in wins)
        assert len(wins) == 3

    def test_invalid_window(self, tiny_corpus):
        with pytest.raises(ValueError):
            virtual_windows(tiny_corpus, 0)


class TestRoundTrip:
    def test_save_load(self, tmp_path, labeled_corpus):
        save_corpus(tmp_path / "c.json", labeled_corpus)
        back = load_corpus(tmp_path / "c.json")
        assert back.vocab.id_to_word == labeled_corpus.vocab.id_to_word
        assert back.label_names == labeled_corpus.label_names
        assert [d.tokens for d in back.documents] == [d.tokens for d in labeled_corpus.documents]
        assert np.array_equal(back.vocab.doc_freq, labeled_corpus.vocab.doc_freq)
        assert back.vocab.hash() == labeled_corpus.vocab.hash()

    def test_stopword_file(self, tmp_path):
        p = tmp_path / "stop.txt"
        p.write_text("The\nand\n\nof\n", encoding="utf-8")
        assert load_stopwords(p) == frozenset({"the", "and", "of"})
