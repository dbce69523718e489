import pytest
from hypothesis import given, settings, strategies as st

from alignkit import bpe


def test_word_symbols_marker_on_last():
    assert bpe.word_symbols("abc") == ("a", "b", "c</w>")
    assert bpe.word_symbols("a") == ("a</w>",)


def test_learn_single_merge_on_repeated_word():
    merges = bpe.learn_bpe([["aa"]] * 5, n_merges=1)
    assert merges == [("a", "a</w>")]


def test_learn_tie_breaks_lexicographically():
    # "ab" and "cd" both appear twice; pairs (a,b</w>) and (c,d</w>) tie
    merges = bpe.learn_bpe([["ab", "cd"], ["ab", "cd"]], n_merges=1)
    assert merges == [("a", "b</w>")]


def test_learn_stops_when_words_are_single_symbols():
    merges = bpe.learn_bpe([["ab"]], n_merges=10)
    assert merges == [("a", "b</w>")]


def test_apply_bpe_word_replays_in_order():
    assert bpe.apply_bpe_word("abc", [("a", "b")]) == ("ab", "c</w>")
    assert bpe.apply_bpe_word("abc", [("a", "b"), ("ab", "c</w>")]) == ("abc</w>",)
    # merges that do not apply are skipped
    assert bpe.apply_bpe_word("xyz", [("a", "b")]) == ("x", "y", "z</w>")


def test_merges_never_cross_word_boundaries():
    merges = bpe.learn_bpe([["ab", "ba"]] * 10, n_merges=5)
    for left, right in merges:
        # no merged symbol may contain an interior end-of-word marker
        assert bpe.END_OF_WORD not in left
        combined = left + right
        assert not combined.startswith(bpe.END_OF_WORD)
        if bpe.END_OF_WORD in combined:
            assert combined.endswith(bpe.END_OF_WORD)


def test_join_subwords_inverse():
    assert bpe.join_subwords(("ab", "c</w>")) == "abc"
    with pytest.raises(ValueError):
        bpe.join_subwords(("ab",))


def test_segment_sentence_map():
    merges = [("a", "b")]
    subwords, seg = bpe.segment_sentence(["abc", "d"], merges)
    assert subwords == ("ab", "c</w>", "d</w>")
    assert seg.ranges == ((0, 2), (2, 3))
    assert seg.n_words == 2
    assert seg.word_of(1) == 0
    assert list(seg.subwords_of(0)) == [0, 1]
    assert bpe.unsegment_sentence(subwords, seg) == ("abc", "d")


def test_segmentation_map_must_tile():
    with pytest.raises(ValueError):
        bpe.SegmentationMap(((0, 1), (2, 3)), 3)
    with pytest.raises(ValueError):
        bpe.SegmentationMap(((0, 1),), 2)
    with pytest.raises(ValueError):
        bpe.SegmentationMap(((0, 0),), 0)


def test_expand_alignment_cross_product():
    src = bpe.SegmentationMap(((0, 2), (2, 3)), 3)
    tgt = bpe.SegmentationMap(((0, 1), (1, 3)), 3)
    out = bpe.expand_alignment({(0, 1)}, src, tgt)
    assert out == {(0, 1), (0, 2), (1, 1), (1, 2)}


def test_reduce_alignment_any_subword_rule():
    src = bpe.SegmentationMap(((0, 2), (2, 3)), 3)
    tgt = bpe.SegmentationMap(((0, 1), (1, 3)), 3)
    assert bpe.reduce_alignment({(1, 2)}, src, tgt) == {(0, 1)}
    assert bpe.reduce_alignment({(0, 0), (1, 2), (2, 0)}, src, tgt) == {(0, 0), (0, 1), (1, 0)}


def test_expand_reduce_bounds_checks():
    seg = bpe.SegmentationMap(((0, 1),), 1)
    with pytest.raises(IndexError):
        bpe.expand_alignment({(1, 0)}, seg, seg)
    with pytest.raises(IndexError):
        bpe.reduce_alignment({(0, 5)}, seg, seg)


words = st.text(alphabet="abcd", min_size=1, max_size=6)
sentences = st.lists(words, min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(st.lists(sentences, min_size=1, max_size=5), st.integers(0, 12))
def test_segmentation_round_trip(corpus, n_merges):
    merges = bpe.learn_bpe(corpus, n_merges)
    for sent in corpus:
        subwords, seg = bpe.segment_sentence(sent, merges)
        assert bpe.unsegment_sentence(subwords, seg) == tuple(sent)


@settings(max_examples=60, deadline=None)
@given(sentences, sentences, st.integers(0, 8), st.data())
def test_expand_then_reduce_is_identity(src_sent, tgt_sent, n_merges, data):
    merges = bpe.learn_bpe([src_sent, tgt_sent], n_merges)
    _, src_map = bpe.segment_sentence(src_sent, merges)
    _, tgt_map = bpe.segment_sentence(tgt_sent, merges)
    links = data.draw(st.sets(st.tuples(
        st.integers(0, len(src_sent) - 1), st.integers(0, len(tgt_sent) - 1))))
    assert bpe.reduce_alignment(
        bpe.expand_alignment(links, src_map, tgt_map), src_map, tgt_map) == links


def test_merge_table_file_round_trip(tmp_path):
    merges = [("a", "b"), ("ab", "c</w>")]
    path = tmp_path / "merges.txt"
    bpe.write_merges(merges, path)
    assert bpe.read_merges(path) == merges
