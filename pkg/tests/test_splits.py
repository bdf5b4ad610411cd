"""Evaluation split sampling: exclusions, candidate pools, file round trips."""

import pytest

from conftest import aligned_corpus
from crossling.corpus import RawDocument
from crossling.splits import SplitError, make_splits, read_split, write_split


def concepts_in_training(split, language):
    return {d.concept for d in split.train_docs if d.language == language}


def test_training_intersection_count():
    docs = aligned_corpus(["aa", "bb"], [f"c{i:02d}" for i in range(10)])
    split = make_splits(docs, [("aa", "bb")], 2, 2, 5, "pairwise", seed=0)
    shared = concepts_in_training(split, "aa") & concepts_in_training(split, "bb")
    assert len(shared) == 6


def test_same_seed_reproduces_split():
    docs = aligned_corpus(["aa", "bb", "cc"], [f"c{i:02d}" for i in range(30)])
    a = make_splits(docs, [("aa", "bb"), ("bb", "cc")], 4, 3, 10, "joint", seed=9)
    b = make_splits(docs, [("aa", "bb"), ("bb", "cc")], 4, 3, 10, "joint", seed=9)
    assert a == b


def test_different_seeds_differ():
    docs = aligned_corpus(["aa", "bb"], [f"c{i:02d}" for i in range(40)])
    a = make_splits(docs, [("aa", "bb")], 5, 5, 10, "pairwise", seed=1)
    b = make_splits(docs, [("aa", "bb")], 5, 5, 10, "pairwise", seed=2)
    assert a.test_concepts != b.test_concepts


def test_query_concepts_never_trained_on():
    docs = aligned_corpus(["aa", "bb", "cc"], [f"c{i:02d}" for i in range(25)])
    split = make_splits(docs, [("aa", "bb"), ("bb", "cc")], 3, 2, 8, "joint", seed=4)
    excluded = split.excluded_concepts
    assert excluded
    for doc in split.train_docs:
        assert doc.concept not in excluded


def test_test_and_validation_queries_disjoint():
    docs = aligned_corpus(["aa", "bb"], [f"c{i:02d}" for i in range(30)])
    split = make_splits(docs, [("aa", "bb")], 5, 5, 10, "pairwise", seed=5)
    pair = ("aa", "bb")
    assert not (set(split.test_concepts[pair]) & set(split.valid_concepts[pair]))


def test_candidates_contain_each_query_concept_once():
    docs = aligned_corpus(["aa", "bb"], [f"c{i:02d}" for i in range(40)])
    split = make_splits(docs, [("aa", "bb")], 6, 4, 15, "pairwise", seed=6)
    for lang in ("aa", "bb"):
        pool = split.candidates[lang]
        assert len(pool) == len(set(pool)) == 15
        for concepts in split.test_concepts.values():
            for c in concepts:
                assert pool.count(c) == 1


def test_candidate_pool_capped_by_language_inventory():
    docs = aligned_corpus(["aa", "bb"], [f"c{i:02d}" for i in range(12)])
    split = make_splits(docs, [("aa", "bb")], 2, 1, 500, "pairwise", seed=7)
    assert len(split.candidates["aa"]) == 12


def test_too_small_intersection_reports_counts():
    docs = aligned_corpus(["aa", "bb"], ["c1", "c2", "c3"])
    with pytest.raises(SplitError, match=r"3"):
        make_splits(docs, [("aa", "bb")], 2, 1, 3, "pairwise", seed=0)


def test_unknown_mode_rejected():
    docs = aligned_corpus(["aa", "bb"], [f"c{i}" for i in range(10)])
    with pytest.raises(SplitError, match="mode"):
        make_splits(docs, [("aa", "bb")], 1, 1, 3, "leaky", seed=0)


def test_joint_mode_trains_on_union_of_pairs():
    concepts = [f"c{i:02d}" for i in range(20)]
    docs = aligned_corpus(["aa", "bb"], concepts, seed=1)
    docs += [RawDocument("cc", c, f"cc{c} filler") for c in concepts[:8]]
    split = make_splits(docs, [("aa", "bb"), ("bb", "cc")], 2, 1, 5, "joint", seed=3)
    langs = {d.language for d in split.train_docs}
    assert langs == {"aa", "bb", "cc"}


def test_transitive_excludes_whole_end_pair_intersection():
    # da and vi each share many concepts with the pivot en, but only three
    # concepts exist in both da and vi; none of those three may be trained on.
    pivot_side = [f"c{i:02d}" for i in range(20)]
    end_shared = ["s1", "s2", "s3"]
    docs = []
    for c in pivot_side + end_shared:
        docs.append(RawDocument("en", c, f"en{c} text"))
    for c in pivot_side[:10] + end_shared:
        docs.append(RawDocument("da", c, f"da{c} text"))
    for c in pivot_side[10:] + end_shared:
        docs.append(RawDocument("vi", c, f"vi{c} text"))
    split = make_splits(docs, [("da", "en"), ("vi", "en")], 2, 0, 3, "transitive", seed=2)
    assert split.pairs == [("da", "vi")]
    assert split.train_pairs == [("da", "en"), ("vi", "en")]
    trained = {d.concept for d in split.train_docs}
    assert not (trained & set(end_shared))
    # queries come from the end-pair intersection
    for c in split.test_concepts[("da", "vi")]:
        assert c in end_shared


def test_transitive_needs_exactly_two_pairs_sharing_a_pivot():
    docs = aligned_corpus(["aa", "bb", "cc"], [f"c{i:02d}" for i in range(20)])
    with pytest.raises(SplitError):
        make_splits(docs, [("aa", "bb")], 2, 1, 5, "transitive", seed=0)
    with pytest.raises(SplitError):
        make_splits(docs, [("aa", "bb"), ("aa", "bb")], 2, 1, 5, "transitive", seed=0)


def test_split_file_round_trip(tmp_path):
    docs = aligned_corpus(["aa", "bb", "cc"], [f"c{i:02d}" for i in range(25)])
    split = make_splits(docs, [("aa", "bb"), ("bb", "cc")], 3, 2, 8, "joint", seed=11)
    path = tmp_path / "split.tsv"
    write_split(split, path)
    assert read_split(path, docs) == split


def test_split_file_detects_corpus_drift(tmp_path):
    docs = aligned_corpus(["aa", "bb"], [f"c{i:02d}" for i in range(20)])
    split = make_splits(docs, [("aa", "bb")], 3, 2, 8, "pairwise", seed=12)
    path = tmp_path / "split.tsv"
    write_split(split, path)
    # drop a training document: the stored count no longer matches
    smaller = [d for d in docs if not (d.language == "aa" and d in split.train_docs)]
    with pytest.raises(SplitError, match="train"):
        read_split(path, smaller)


def test_split_file_rejects_garbage(tmp_path):
    path = tmp_path / "split.tsv"
    path.write_text("not a split file\n", encoding="utf-8")
    docs = aligned_corpus(["aa", "bb"], ["c1"])
    with pytest.raises(SplitError):
        read_split(path, docs)


def test_split_file_bytes_deterministic(tmp_path):
    docs = aligned_corpus(["aa", "bb"], [f"c{i:02d}" for i in range(20)])
    split = make_splits(docs, [("aa", "bb")], 3, 2, 8, "pairwise", seed=13)
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    write_split(split, a)
    write_split(split, b)
    assert a.read_bytes() == b.read_bytes()
