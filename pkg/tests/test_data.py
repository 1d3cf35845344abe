import numpy as np
import pytest
from hypothesis import given, strategies as st

from jointseg.data import (DataError, SyntheticConfig, generate_synthetic_corpus, kfold_assignments,
                           parse_dataset_line, read_dataset, realize, relabel_by_stem_lexicon,
                           split_records, to_two_morphemes, write_dataset)
from jointseg.embeddings import PREFIX, STEM, SUFFIX, cosine


class TestParse:
    def test_running_example(self):
        rec = parse_dataset_line("questionably\tquestion:stem+able:suffix+ly:suffix")
        assert rec.surface == "questionably" and rec.u == "questionablely"
        assert rec.analysis.labels == (STEM, SUFFIX, SUFFIX)

    def test_two_segments(self):
        rec = parse_dataset_line("unquiet\tun:prefix+quiet:stem")
        assert rec.analysis.segments == ("un", "quiet")

    @pytest.mark.parametrize("line, message", [
        ("badline", "missing tab"),
        ("ab\ta:stem+:suffix", "empty segment"),
        ("ab\ta:stem+b:infix", "unknown label"),
        ("ab\ta:b:stem", "':'"),
        ("\ta:stem", "empty surface"),
    ])
    def test_errors(self, line, message):
        with pytest.raises(DataError, match=message):
            parse_dataset_line(line, lineno=7)

    def test_error_carries_line_number(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("ab\ta:stem+b:suffix\nbroken\n", encoding="utf-8")
        with pytest.raises(DataError) as info:
            read_dataset(p)
        assert info.value.lineno == 2 and "line 2" in str(info.value)

    def test_insertion_limit(self):
        with pytest.raises(DataError, match="exceeds"):
            parse_dataset_line("a\taaaa:stem", insertion_limit=2)
        assert parse_dataset_line("a\taaa:stem", insertion_limit=2).u == "aaa"

    @given(st.lists(st.tuples(st.text("abcé", min_size=1, max_size=4), st.sampled_from([STEM, PREFIX, SUFFIX])),
                    min_size=1, max_size=4),
           st.text("abcé", min_size=1, max_size=6))
    def test_round_trip(self, parts, surface):
        line = surface + "\t" + "+".join(f"{s}:{l}" for s, l in parts)
        assert parse_dataset_line(line + "  \n").to_line() == line

    def test_file_round_trip_skips_blank_and_comments(self, tmp_path):
        src = tmp_path / "in.tsv"
        src.write_text("# header\n\nacing\tace:stem+ing:suffix\nunquiet\tun:prefix+quiet:stem\n",
                       encoding="utf-8")
        recs = read_dataset(src)
        write_dataset(recs, tmp_path / "out.tsv")
        assert (tmp_path / "out.tsv").read_text() == "acing\tace:stem+ing:suffix\nunquiet\tun:prefix+quiet:stem\n"


class TestRules:
    def test_consonant_suffix_leaves_stem(self):
        assert realize(["able", "ly"], [STEM, SUFFIX]) == "ablely"
        assert realize(["hope", "ful"], [STEM, SUFFIX]) == "hopeful"

    def test_vowel_suffix_drops_e(self):
        assert realize(["ace", "ing"], [STEM, SUFFIX]) == "acing"

    def test_suffix_final_e_is_kept(self):
        assert realize(["make", "able", "er"], [STEM, SUFFIX, SUFFIX]) == "makableer"

    def test_english_rule_set(self):
        assert realize(["question", "able", "ly"], [STEM, SUFFIX, SUFFIX], "english") == "questionably"
        assert realize(["question", "able", "ly"], [STEM, SUFFIX, SUFFIX]) == "questionablely"
        assert realize(["ace", "ing"], [STEM, SUFFIX], "none") == "aceing"


class TestSynthetic:
    def test_noiseless_vectors_are_additive(self):
        corpus = generate_synthetic_corpus(SyntheticConfig(stems=40, noise=0.0, seed=2))
        for rec in corpus.records:
            v = sum(corpus.latent[(l, m)] for m, l in zip(rec.analysis.segments, rec.analysis.labels))
            assert cosine(v, corpus.table.lookup(rec.surface)) == pytest.approx(1.0, abs=1e-12)

    def test_shape_and_rule_rate(self):
        corpus = generate_synthetic_corpus(SyntheticConfig(stems=300, seed=0))
        assert corpus.table.dim == 10
        assert len({r.surface for r in corpus.records}) == len(corpus.records)
        assert all(r.surface in corpus.table for r in corpus.records)
        assert 0.2 <= corpus.rule_rate() <= 0.4
        for r in corpus.records:
            labs = r.analysis.labels
            assert labs.count(STEM) == 1 and labs.count(PREFIX) <= 1 and labs.count(SUFFIX) <= 2
            assert realize(r.analysis.segments, labs) == r.surface

    def test_seeded(self):
        a = generate_synthetic_corpus(SyntheticConfig(stems=20, seed=5))
        b = generate_synthetic_corpus(SyntheticConfig(stems=20, seed=5))
        assert a.records == b.records
        for r in a.records:
            np.testing.assert_array_equal(a.table.lookup(r.surface), b.table.lookup(r.surface))

    def test_collision_rejected(self):
        with pytest.raises(ValueError, match="collide"):
            generate_synthetic_corpus(SyntheticConfig(prefixes=("er",), stems=5))

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            generate_synthetic_corpus(SyntheticConfig(rule="umlaut", stems=5))


class TestTwoMorpheme:
    def test_suffix_outermost(self):
        rec = parse_dataset_line("questionably\tquestion:stem+able:suffix+ly:suffix")
        two = to_two_morphemes(rec)
        assert two.analysis.segments == ("questionable", "ly") and two.analysis.labels == (STEM, SUFFIX)
        assert two.u == rec.u

    def test_prefix_takes_precedence(self):
        rec = parse_dataset_line("unquietly\tun:prefix+quiet:stem+ly:suffix")
        assert to_two_morphemes(rec).analysis.segments == ("un", "quietly")

    def test_short_records_unchanged(self):
        rec = parse_dataset_line("unquiet\tun:prefix+quiet:stem")
        assert to_two_morphemes(rec) is rec

    def test_reader_flag(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("questionably\tquestion:stem+able:suffix+ly:suffix\n", encoding="utf-8")
        assert len(read_dataset(p, two_morpheme=True)[0].analysis.segments) == 2


def test_relabel_by_stem_lexicon():
    a = relabel_by_stem_lexicon("unquietly", ["un", "quiet", "ly"], {"quiet"})
    assert a.labels == (PREFIX, STEM, SUFFIX)
    b = relabel_by_stem_lexicon("unquietly", ["un", "quiet", "ly"], set())
    assert b.labels == (PREFIX, STEM, SUFFIX)


class TestSplits:
    def test_kfold_partition(self):
        a = kfold_assignments(47, 10, seed=1)
        assert sorted(set(a)) == list(range(10))
        assert max(np.bincount(a)) - min(np.bincount(a)) <= 1

    def test_split_records(self):
        items = list(range(100))
        tr, dev, te = split_records(items, (0.8, 0.1, 0.1), seed=3)
        assert (len(tr), len(dev), len(te)) == (80, 10, 10)
        assert sorted(tr + dev + te) == items
        assert split_records(items, (0.8, 0.1, 0.1), seed=3) == [tr, dev, te]
