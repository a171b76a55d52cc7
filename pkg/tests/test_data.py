"""Tests for data parsing, vocabulary construction, corpus building, and
corpus statistics."""

import numpy as np
import pytest

from morphseg import data as D


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# ---------------------------------------------------------------------------
# file format


def test_load_dataset_roundtrip(tmp_path):
    p = write(
        tmp_path,
        "toy.tsv",
        "# a comment\n"
        "nep+tikuyekai\tne|p+|ti|kuye|kai\n"
        "\n"
        "ab\ta|b\n",
    )
    ds = D.load_dataset(p, lang="WX")
    assert len(ds) == 2
    assert ds[0].source == "nep+tikuyekai"
    assert ds[1].target == "a|b"
    assert all(ex.lang == "WX" for ex in ds)

    out = tmp_path / "round.tsv"
    D.serialize_dataset(ds, out)
    again = D.load_dataset(out, lang="WX")
    assert again.examples == ds.examples


def test_load_dataset_non_ascii(tmp_path):
    p = write(tmp_path, "t.tsv", "tɨarika\ttɨ|arika\n")
    ds = D.load_dataset(p)
    assert ds[0].source == "tɨarika"


def test_parse_errors_carry_line_numbers(tmp_path):
    p = write(tmp_path, "bad1.tsv", "ok\tok\nno-tab-here\n")
    with pytest.raises(D.ParseError) as exc:
        D.load_dataset(p)
    assert ":2:" in str(exc.value)

    p = write(tmp_path, "bad2.tsv", "# c\nab\tax|b\n")
    with pytest.raises(D.ParseError) as exc:
        D.load_dataset(p)
    assert ":2:" in str(exc.value) and "spell" in str(exc.value)

    p = write(tmp_path, "bad3.tsv", "ab\t\n")
    with pytest.raises(D.ParseError):
        D.load_dataset(p)

    p = write(tmp_path, "bad4.tsv", "a|b\ta|b\n")
    with pytest.raises(D.ParseError):
        D.load_dataset(p)

    p = write(tmp_path, "empty.tsv", "# nothing\n")
    with pytest.raises(D.ParseError):
        D.load_dataset(p)


def test_example_validation():
    with pytest.raises(D.DataError):
        D.SegExample("ab", "a|c")
    with pytest.raises(D.DataError):
        D.SegExample("", "")
    with pytest.raises(D.DataError):
        D.SegExample("a|b", "a|b")
    with pytest.raises(D.DataError):
        D.SegExample("ab", "a|b", task="COPY")
    # Doubled/edge separators still spell the word, so they parse.
    ex = D.SegExample("ab", "a||b")
    assert ex.target == "a||b"


def test_aux_word_loading(tmp_path):
    p = write(tmp_path, "aux.txt", "# words\nAbc\n\nnoqo\nbad|word\nabc\n")
    with pytest.warns(UserWarning):
        words = D.load_aux_words(p)
    assert words == ["abc", "noqo", "abc"]  # lowercased, separator word skipped

    p = write(tmp_path, "none.txt", "# only comments\n")
    with pytest.raises(D.DataError):
        D.load_aux_words(p)


# ---------------------------------------------------------------------------
# vocabulary


def test_vocabulary_layout_and_order():
    examples = [
        D.SegExample("ba", "b|a", lang="WX"),
        D.SegExample("+u", "+u", lang="YN"),  # '+' sorts before letters
    ]
    vocab = D.Vocabulary.build(examples)
    n_res = len(D.BASE_RESERVED)
    assert vocab.symbols[:n_res] == D.BASE_RESERVED
    assert vocab.symbols[n_res : n_res + 2] == ("<L=WX>", "<L=YN>")
    assert vocab.sigma == ("+", "a", "b", "u")  # code-point order
    assert vocab.sigma_start == n_res + 2
    assert len(vocab) == n_res + 2 + 4


def test_vocabulary_char_lookup_and_render():
    vocab = D.Vocabulary.build([D.SegExample("ab", "a|b")])
    assert vocab.char_id("a") == vocab.sigma_start
    assert vocab.char_id("z") == vocab.unk_id
    # Reserved symbol text is never a valid character.
    assert vocab.char_id("<pad>") == vocab.unk_id
    assert vocab.render(vocab.sep_id) == D.SEPARATOR
    assert vocab.render(vocab.unk_id) == D.UNK_RENDER
    assert vocab.render(vocab.char_id("b")) == "b"


def test_vocabulary_from_symbols_validation():
    vocab = D.Vocabulary.build([D.SegExample("ab", "a|b")])
    again = D.Vocabulary.from_symbols(vocab.symbols, vocab.sigma_start)
    assert again == vocab
    with pytest.raises(D.DataError):
        D.Vocabulary.from_symbols(("<bogus>",) + vocab.symbols[1:], vocab.sigma_start)
    with pytest.raises(D.DataError):
        D.Vocabulary.from_symbols(vocab.symbols + ("a",), vocab.sigma_start)
    with pytest.raises(D.DataError):
        D.Vocabulary.from_symbols(vocab.symbols, 1)


def test_encode_example_markers_and_targets():
    base = [D.SegExample("ab", "a|b", lang="WX"), D.SegExample("bc", "bc", lang="YN")]
    vocab = D.Vocabulary.build(base)
    enc = D.encode_example(vocab, D.SegExample("ab", "a|b", task="SEG", lang="WX"))
    assert enc.src[0] == vocab.index["<L=WX>"]
    assert enc.src[1] == vocab.index[D.SEG_MARK]
    assert list(enc.src[2:]) == [vocab.char_id("a"), vocab.char_id("b")]
    assert list(enc.tgt) == [
        vocab.char_id("a"),
        vocab.sep_id,
        vocab.char_id("b"),
        vocab.eos_id,
    ]
    assert enc.word_len == 2

    plain = D.encode_example(vocab, D.SegExample("ab", "a|b"))
    assert plain.src.shape == (2,)

    oov = D.encode_example(vocab, D.SegExample("az", "a|z"))
    assert oov.src[1] == vocab.unk_id
    assert oov.tgt[2] == vocab.unk_id

    with pytest.raises(D.DataError):
        D.encode_example(vocab, D.SegExample("ab", "ab", lang="MX"))


# ---------------------------------------------------------------------------
# corpus construction


def toy_dataset(n=6, lang="WX"):
    exs = tuple(
        D.SegExample(f"ab{chr(99 + i % 3)}", f"ab|{chr(99 + i % 3)}", lang=lang)
        for i in range(n)
    )
    return D.Dataset(exs, lang=lang)


def test_corpus_sizes_per_mode():
    train = toy_dataset(6)
    aux = [f"w{i}" for i in range(100)]
    assert len(D.build_training_corpus(train, "S2S")) == 6
    for mode, m in (("MTT-U", 4), ("MTT-R", 8), ("DA-U", 1), ("DA-R", 4)):
        corpus = D.build_training_corpus(train, mode, m=m, aux_words=aux, seed=3)
        assert len(corpus) == 6 * (1 + m)


def test_mtt_markers_and_da_unmarked():
    train = toy_dataset(4)
    aux = [f"word{i}" for i in range(40)]
    mtt = D.build_training_corpus(train, "MTT-U", m=2, aux_words=aux, seed=0)
    assert all(ex.task == "SEG" for ex in mtt[:4])
    assert all(ex.task == "AE" for ex in mtt[4:])
    assert all(ex.source == ex.target for ex in mtt[4:])

    da = D.build_training_corpus(train, "DA-R", m=2, seed=0)
    assert all(ex.task is None for ex in da)
    assert all(ex.source == ex.target for ex in da[4:])
    # Random-string lengths come from the training length multiset.
    train_lens = {len(ex.source) for ex in train}
    assert {len(ex.source) for ex in da[4:]} <= train_lens
    # ... and characters from the training alphabet.
    alpha = {c for ex in train for c in ex.source}
    assert {c for ex in da[4:] for c in ex.source} <= alpha


def test_mode_argument_validation():
    train = toy_dataset(3)
    with pytest.raises(ValueError):
        D.build_training_corpus(train, "S2S", m=1)
    with pytest.raises(ValueError):
        D.build_training_corpus(train, "FOO")
    with pytest.raises(ValueError):
        D.build_training_corpus(train, "XLING")
    with pytest.raises(D.DataError):
        D.build_training_corpus(train, "MTT-U", m=2)  # no aux words


def test_xling_corpus_tags_and_size():
    a = toy_dataset(3, lang=None)
    b = toy_dataset(5, lang=None)
    corpus = D.build_xling_corpus({"WX": a, "MX": b})
    assert len(corpus) == 8
    assert [ex.lang for ex in corpus[:5]] == ["MX"] * 5  # sorted tag order
    assert [ex.lang for ex in corpus[5:]] == ["WX"] * 3
    with pytest.raises(D.DataError):
        D.build_xling_corpus({"WX": a})


def test_pick_aux_words_without_replacement():
    rng = np.random.default_rng(5)
    words = ["a", "b", "a", "c", "d"]  # dedups to a b c d
    picked = D.pick_aux_words(words, 4, rng)
    assert sorted(picked) == ["a", "b", "c", "d"]
    with pytest.warns(UserWarning):
        over = D.pick_aux_words(words, 10, rng)
    assert len(over) == 10
    assert sorted(set(over)) == ["a", "b", "c", "d"]
    assert sorted(over[:4]) == ["a", "b", "c", "d"]  # exhaust uniques first


def test_monolingual_corpora_carry_no_language_tags():
    # Tags exist to pool languages in one model; a single-language corpus
    # must not grow a tag symbol even if its examples were loaded with one.
    train = toy_dataset(4)  # every example stamped lang="WX"
    assert all(ex.lang is None for ex in D.build_training_corpus(train, "S2S"))
    corpus = D.build_training_corpus(train, "MTT-R", m=2, seed=0)
    assert all(ex.lang is None for ex in corpus)
    vocab = D.Vocabulary.build(corpus)
    assert not any(s.startswith("<L=") for s in vocab.symbols)
    assert D.decorate_for_mode(train[0], "S2S").lang is None
    assert D.decorate_for_mode(train[0], "DA-U").lang is None


def test_decorate_for_mode():
    ex = D.SegExample("ab", "a|b", lang="WX")
    assert D.decorate_for_mode(ex, "MTT-U").task == "SEG"
    assert D.decorate_for_mode(ex, "DA-R").task is None
    assert D.decorate_for_mode(ex, "XLING").lang == "WX"
    assert D.decorate_for_mode(ex, "XLING", lang="MX").lang == "MX"
    bare = D.SegExample("ab", "a|b")
    with pytest.raises(D.DataError):
        D.decorate_for_mode(bare, "XLING")


# ---------------------------------------------------------------------------
# random strings


def test_random_strings_uniform_characters():
    out = D.generate_random_strings("ab", 10000, [5], seed=11)
    assert len(out) == 10000 and all(len(w) == 5 for w in out)
    for pos in range(5):
        freq = sum(w[pos] == "a" for w in out) / 10000
        assert abs(freq - 0.5) < 0.02


def test_random_strings_lengths_from_multiset():
    out = D.generate_random_strings("ab", 3000, [2, 2, 5], seed=7)
    lens = [len(w) for w in out]
    assert set(lens) == {2, 5}
    frac2 = lens.count(2) / 3000
    assert abs(frac2 - 2 / 3) < 0.05


def test_random_strings_seeded():
    a = D.generate_random_strings("abc", 50, [3, 4], seed=1)
    b = D.generate_random_strings("abc", 50, [3, 4], seed=1)
    c = D.generate_random_strings("abc", 50, [3, 4], seed=2)
    assert a == b
    assert a != c


def test_random_strings_guards():
    with pytest.raises(D.DataError):
        D.generate_random_strings("", 1, [3], seed=0)
    with pytest.raises(D.DataError):
        D.generate_random_strings("a|b", 1, [3], seed=0)
    with pytest.raises(D.DataError):
        D.generate_random_strings("ab", 1, [], seed=0)
    with pytest.raises(D.DataError):
        D.generate_random_strings("ab", -1, [3], seed=0)


# ---------------------------------------------------------------------------
# statistics


def test_corpus_stats_small_oracle():
    exs = [
        D.SegExample("abc", "a|b|c"),
        D.SegExample("ab", "ab"),
        D.SegExample("ab", "a|b"),
    ]
    st = D.corpus_stats(exs, top_k=3)
    assert st.n_words == 3
    assert st.n_unique_words == 2
    assert st.alphabet_size == 3
    assert st.morphs_per_word == pytest.approx(2.0)
    assert st.seg_points_per_word == pytest.approx(1.0)
    assert st.max_morphs == 3
    assert st.n_unique_morphs == 4
    assert st.top_morphs == (("a", 2), ("b", 2), ("ab", 1))


def test_corpus_stats_tie_order_is_lexicographic():
    exs = [D.SegExample("zy", "z|y"), D.SegExample("yz", "y|z")]
    st = D.corpus_stats(exs, top_k=2)
    assert st.top_morphs == (("y", 2), ("z", 2))


def test_morphs_of_collapses_edge_and_double_separators():
    assert D.morphs_of("a||b") == ["a", "b"]
    assert D.morphs_of("|ab|") == ["ab"]


def test_corpus_stats_needs_examples():
    with pytest.raises(D.DataError):
        D.corpus_stats([])
