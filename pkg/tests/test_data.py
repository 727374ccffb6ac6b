"""Core data types and file formats."""

import io

import pytest
from hypothesis import given, strategies as st

from runon.data import (
    AlignmentError,
    AnnotatedSentence,
    DataError,
    DatasetSpec,
    GapLabel,
    LabeledSequence,
    MalformedTree,
    ParseNode,
    Token,
    detokenize,
    parse_tree,
    read_corpus,
    read_labeled,
    write_corpus,
    write_labeled,
)
from conftest import labeled, sent

surface_st = st.text(
    alphabet=st.characters(blacklist_categories=("Zs", "Zl", "Zp", "Cc", "Cs")),
    min_size=1, max_size=12,
).filter(lambda s: not any(c.isspace() for c in s) and "\t" not in s)


class TestToken:
    def test_rejects_empty_surface(self):
        with pytest.raises(DataError):
            Token("")

    def test_rejects_whitespace(self):
        with pytest.raises(DataError):
            Token("two words")

    @given(surface_st)
    def test_is_capitalized_consistent(self, s):
        assert Token(s).is_capitalized == s[0].isupper()

    def test_url_detection(self):
        assert Token("http://x.com").is_url()
        assert Token("www.example.org").is_url()
        assert Token("HTTPS://x").is_url()
        assert not Token("dog").is_url()
        assert not Token("ex.com").is_url()

    def test_special_punct(self):
        for s in (":", ";", "-", "--", "–", "—", "...", "…"):
            assert Token(s).is_special_punct()
        assert not Token("well-known").is_special_punct()
        assert not Token(",").is_special_punct()


class TestParseTree:
    def test_round_trip(self):
        text = "(S (NP (DT the) (NN dog)) (VP (VBD ran)))"
        tree = parse_tree(text)
        assert repr(tree) == text
        assert [l.label for l in tree.leaves()] == ["the", "dog", "ran"]

    def test_preterminal(self):
        tree = parse_tree("(S (NP (DT the) (NN dog)) (VP (VBD ran)))")
        np_, vp = tree.children
        assert not np_.is_preterminal       # two children
        assert not vp.is_preterminal        # single child, but not a leaf
        assert vp.children[0].is_preterminal   # (VBD ran)
        assert np_.children[0].is_preterminal  # (DT the)

    def test_unbalanced_rejected(self):
        for bad in ("(S (NP", "(S))", "(S (NP x) ) trailing", "()"):
            with pytest.raises(DataError):
                parse_tree(bad)


class TestAnnotatedSentence:
    def test_requires_tokens(self):
        with pytest.raises(DataError):
            AnnotatedSentence([])

    def test_parse_must_align(self):
        tree = parse_tree("(S (NN dog))")
        AnnotatedSentence([Token("dog")], parse=tree)
        with pytest.raises(MalformedTree):
            AnnotatedSentence([Token("cat")], parse=tree)
        with pytest.raises(MalformedTree):
            AnnotatedSentence([Token("dog"), Token("dog")], parse=tree)


class TestGapLabel:
    def test_parse_accepts_both_spellings(self):
        assert GapLabel.parse("S") is GapLabel.SPACE
        assert GapLabel.parse("SPACE") is GapLabel.SPACE
        assert GapLabel.parse("P") is GapLabel.PERIOD
        assert GapLabel.parse("period") is GapLabel.PERIOD
        with pytest.raises(DataError):
            GapLabel.parse("Q")


class TestLabeledSequence:
    def test_length_mismatch(self):
        with pytest.raises(AlignmentError):
            LabeledSequence(sent("a b c"), [GapLabel.SPACE] * 2)

    def test_final_label_must_be_space(self):
        with pytest.raises(DataError):
            labeled("a b c", "SSP")

    def test_is_runon_iff_period_present(self):
        assert labeled("a b c", "PSS").is_runon
        assert not labeled("a b c", "SSS").is_runon

    def test_gap_labels_drop_terminal(self):
        seq = labeled("a b c", "PSS")
        assert seq.gap_labels == [GapLabel.PERIOD, GapLabel.SPACE]
        assert seq.period_positions == {0}


class TestDatasetSpec:
    def test_fraction_defaults_to_count_ratio(self):
        spec = DatasetSpec(runon_count=10, nonrunon_count=90)
        assert spec.target_runon_fraction == pytest.approx(0.10)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            DatasetSpec(runon_count=-1, nonrunon_count=1)


class TestDetokenize:
    def test_attaches_punctuation(self):
        assert detokenize(["the", "dog", "ran", "."]) == "the dog ran."
        assert detokenize(["a", ",", "b"]) == "a, b"

    def test_plain_words_spaced(self):
        assert detokenize(["a", "b"]) == "a b"


class TestCorpusFiles:
    def test_round_trip_with_trees(self, toy_paragraphs):
        body, trees = io.StringIO(), io.StringIO()
        write_corpus(toy_paragraphs, body, trees=trees)
        body.seek(0)
        trees.seek(0)
        back = list(read_corpus(body, trees=trees))
        assert len(back) == len(toy_paragraphs)
        for pa, pb in zip(toy_paragraphs, back):
            assert [s.surfaces for s in pa] == [s.surfaces for s in pb]
            assert [[t.pos for t in s.tokens] for s in pa] == \
                [[t.pos for t in s.tokens] for s in pb]
            assert [repr(s.parse) for s in pa] == [repr(s.parse) for s in pb]

    def test_odd_columns_rejected(self):
        with pytest.raises(DataError):
            list(read_corpus(io.StringIO("a\tDT\tb\n")))


class TestLabeledFiles:
    def test_round_trip(self):
        seqs = [labeled("a b c d", "SPSS"), labeled("x y", "SS")]
        buf = io.StringIO()
        write_labeled(seqs, buf)
        buf.seek(0)
        back = list(read_labeled(buf))
        assert len(back) == 2
        for a, b in zip(seqs, back):
            assert a.sentence.surfaces == b.sentence.surfaces
            assert a.labels == b.labels

    @given(st.lists(
        st.lists(st.tuples(st.sampled_from("abcdef"), st.sampled_from("SP")),
                 min_size=1, max_size=6),
        min_size=1, max_size=5))
    def test_round_trip_property(self, items):
        seqs = []
        for pairs in items:
            words = [w for w, _ in pairs]
            labs = [l for _, l in pairs[:-1]] + ["S"]
            seqs.append(labeled(" ".join(words), "".join(labs)))
        buf = io.StringIO()
        write_labeled(seqs, buf)
        buf.seek(0)
        back = list(read_labeled(buf))
        assert [(s.sentence.surfaces, s.labels) for s in seqs] == \
            [(s.sentence.surfaces, s.labels) for s in back]

    def test_bad_column_count(self):
        with pytest.raises(DataError):
            list(read_labeled(io.StringIO("a\tS\n")))
