import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from crisis_ssl.corpus import (CorpusFormatError, Example, EventCorpus,
                               LabelSchema, humaid_schema, load_corpus,
                               load_examples, make_split_plan, save_corpus,
                               save_examples, save_split_plan)

from conftest import corpus_from_counts
from humaid_stats import EVENTS


class TestLabelSchema:
    def test_humaid_has_ten_categories_in_order(self):
        schema = humaid_schema()
        assert schema.size == 10
        assert schema.categories[0] == "Caution and advice"
        assert schema.categories[-1] == "Not humanitarian"

    def test_repeated_calls_identical(self):
        assert humaid_schema().categories == humaid_schema().categories

    def test_injured_or_dead_people_is_index_4(self):
        assert humaid_schema().index("Injured or dead people") == 4

    def test_match_is_case_insensitive_and_trims(self):
        schema = humaid_schema()
        assert schema.match("  injured OR dead people ") == 4
        assert schema.match("banana") is None

    def test_rejects_duplicates_empties_and_singletons(self):
        with pytest.raises(ValueError):
            LabelSchema(("a", "A"))
        with pytest.raises(ValueError):
            LabelSchema(("a", ""))
        with pytest.raises(ValueError):
            LabelSchema(("only",))


class TestCorpusIO:
    def test_round_trip_is_byte_identical(self, tmp_path):
        schema = humaid_schema()
        rows = [Example("a1", "flood waters rising", 0),
                Example("a2", "so sad for everyone", 1),
                Example("a3", "no label here", None)]
        path = tmp_path / "train.tsv"
        save_examples(path, rows, schema)
        first = path.read_bytes()
        reloaded = load_examples(path, schema)
        assert reloaded == rows
        save_examples(path, reloaded, schema)
        assert path.read_bytes() == first

    def test_empty_file_gives_empty_corpus(self, tmp_path):
        (tmp_path / "train.tsv").write_text("id\ttext\tlabel\n")
        corpus = load_corpus(tmp_path, humaid_schema())
        assert corpus.train == []
        assert corpus.class_counts.sum() == 0

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_examples(tmp_path / "nope.tsv", humaid_schema())

    def test_malformed_row_names_the_line(self, tmp_path):
        path = tmp_path / "train.tsv"
        path.write_text("id\ttext\tlabel\nx1\tonly-two-columns\n")
        with pytest.raises(CorpusFormatError, match=":2"):
            load_examples(path, humaid_schema())

    def test_unknown_label_names_the_line(self, tmp_path):
        path = tmp_path / "train.tsv"
        path.write_text("id\ttext\tlabel\nx1\thello\tBanana\n")
        with pytest.raises(CorpusFormatError, match="Banana"):
            load_examples(path, humaid_schema())

    def test_tabs_in_text_rejected_on_save(self, tmp_path):
        with pytest.raises(CorpusFormatError):
            save_examples(tmp_path / "t.tsv", [Example("a", "has\ttab", 0)],
                          humaid_schema())

    def test_corpus_dir_round_trip(self, tmp_path, small_corpus):
        save_corpus(small_corpus, tmp_path / "ev")
        loaded = load_corpus(tmp_path / "ev", small_corpus.schema)
        assert loaded.train == small_corpus.train
        assert loaded.val == small_corpus.val
        assert np.array_equal(loaded.class_counts, small_corpus.class_counts)

    def test_duplicate_ids_rejected(self):
        schema = humaid_schema()
        with pytest.raises(ValueError, match="duplicate"):
            EventCorpus("e", schema, [Example("a", "x", 0), Example("a", "y", 1)])

    def test_unlabeled_train_example_rejected(self):
        with pytest.raises(ValueError, match="gold label"):
            EventCorpus("e", humaid_schema(), [Example("a", "x", None)])


class TestSplitPlan:
    def test_benchmark_spot_checks(self):
        canada = corpus_from_counts(EVENTS["canada_wildfires_2016"]["class_counts"])
        plan = make_split_plan(canada, 25, seed=0)
        assert (plan.n_labeled, plan.n_unlabeled) == (189, 1380)
        idai = corpus_from_counts(EVENTS["cyclone_idai_2019"]["class_counts"])
        plan = make_split_plan(idai, 50, seed=0)
        assert (plan.n_labeled, plan.n_unlabeled) == (453, 2300)

    def test_partition_and_determinism(self, small_corpus):
        a = make_split_plan(small_corpus, 10, seed=3)
        b = make_split_plan(small_corpus, 10, seed=3)
        assert a.labeled_ids == b.labeled_ids
        assert not (a.labeled_ids & a.unlabeled_ids)
        assert a.labeled_ids | a.unlabeled_ids == {ex.id for ex in small_corpus.train}

    def test_different_seeds_differ(self, small_corpus):
        a = make_split_plan(small_corpus, 10, seed=0)
        b = make_split_plan(small_corpus, 10, seed=1)
        assert a.labeled_ids != b.labeled_ids

    def test_per_class_budget_rule(self, small_corpus):
        k = 7
        plan = make_split_plan(small_corpus, k, seed=5)
        by_class = {ex.id: ex.gold_label for ex in small_corpus.train}
        for c, count in enumerate(small_corpus.class_counts):
            picked = sum(1 for i in plan.labeled_ids if by_class[i] == c)
            assert picked == min(k, count)

    def test_saturation_budget_labels_everything(self, small_corpus):
        k = int(small_corpus.class_counts.max())
        plan = make_split_plan(small_corpus, k, seed=0)
        assert plan.n_unlabeled == 0
        assert plan.n_labeled == len(small_corpus.train)

    def test_bad_inputs(self, small_corpus):
        with pytest.raises(ValueError):
            make_split_plan(small_corpus, 0, seed=0)

    def test_audit_file(self, tmp_path, small_corpus):
        plan = make_split_plan(small_corpus, 5, seed=0)
        path = tmp_path / "plan.tsv"
        save_split_plan(plan, small_corpus, path)
        lines = path.read_text().splitlines()
        assert len(lines) == len(small_corpus.train)
        flags = {line.split("\t")[1] for line in lines}
        assert flags == {"L", "U"}
        n_l = sum(1 for line in lines if line.endswith("\tL"))
        assert n_l == plan.n_labeled

    @settings(max_examples=25, deadline=None)
    @given(counts=hs.lists(hs.integers(0, 30), min_size=10, max_size=10),
           budget=hs.integers(1, 35), seed=hs.integers(0, 2**16))
    def test_split_properties_random(self, counts, budget, seed):
        if sum(counts) == 0:
            counts[3] = 1
        corpus = corpus_from_counts(tuple(counts))
        plan = make_split_plan(corpus, budget, seed)
        expected = sum(min(budget, c) for c in counts)
        assert plan.n_labeled == expected
        assert plan.n_labeled + plan.n_unlabeled == len(corpus.train)
        again = make_split_plan(corpus, budget, seed)
        assert again.labeled_ids == plan.labeled_ids
