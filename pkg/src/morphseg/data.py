"""Segmentation data: file format, vocabulary, training-corpus construction.

The on-disk format is one example per line, ``word<TAB>segmentation``, where
the segmentation is the word with ``|`` inserted at morph boundaries.  Files
are UTF-8; ``#`` starts a comment line.  Beyond parsing, this module builds
the six kinds of training corpora (plain sequence-to-sequence, multi-task
with an autoencoding auxiliary task, plain data augmentation — each with
corpus words or random strings as the auxiliary source — and multilingual
corpora with language-tag prefixes) and computes corpus statistics.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from statistics import fmean
from typing import Iterable, Mapping, Sequence

import numpy as np

SEPARATOR = "|"
UNK_RENDER = "\N{REPLACEMENT CHARACTER}"

# Reserved symbols, in fixed vocabulary order ahead of any language tags and
# the alphabet.
PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"
SEP = "<sep>"
SEG_MARK = "<seg>"  # source prefix: "produce the segmentation"
AE_MARK = "<ae>"  # source prefix: "reproduce the input"
BASE_RESERVED = (PAD, BOS, EOS, UNK, SEP, SEG_MARK, AE_MARK)

MODES = ("S2S", "MTT-U", "MTT-R", "DA-U", "DA-R", "XLING")


class DataError(ValueError):
    """A problem with input data (files, words, corpus construction)."""


class ParseError(DataError):
    """A malformed line in a data file; the message carries file:line."""


def lang_symbol(tag: str) -> str:
    """Reserved vocabulary symbol for a language tag, e.g. 'YN' -> '<L=YN>'."""
    return f"<L={tag}>"


@dataclass(frozen=True)
class SegExample:
    """One word with its gold segmentation.

    `task` marks multi-task examples ("SEG" or "AE"); `lang` carries the
    language tag for multilingual training.  The segmentation must spell the
    word once separators are removed.
    """

    source: str
    target: str
    task: str | None = None
    lang: str | None = None

    def __post_init__(self):
        if not self.source:
            raise DataError("empty source word")
        if SEPARATOR in self.source:
            raise DataError(f"source contains separator: {self.source!r}")
        if self.target.replace(SEPARATOR, "") != self.source:
            raise DataError(
                f"segmentation {self.target!r} does not spell {self.source!r}"
            )
        if self.task not in (None, "SEG", "AE"):
            raise DataError(f"unknown task marker {self.task!r}")


@dataclass(frozen=True)
class Dataset:
    examples: tuple[SegExample, ...]
    lang: str | None = None
    path: str | None = None

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]


def load_dataset(path, lang: str | None = None) -> Dataset:
    """Parse a segmentation file; raise ParseError with file:line on bad input."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(
                    f"{path}:{lineno}: expected 'word<TAB>segmentation', "
                    f"got {len(parts)} field(s)"
                )
            word, seg = parts
            if not word:
                raise ParseError(f"{path}:{lineno}: empty word")
            if not seg:
                raise ParseError(f"{path}:{lineno}: empty segmentation")
            if SEPARATOR in word:
                raise ParseError(f"{path}:{lineno}: word contains {SEPARATOR!r}")
            if seg.replace(SEPARATOR, "") != word:
                raise ParseError(
                    f"{path}:{lineno}: segmentation {seg!r} does not spell {word!r}"
                )
            examples.append(SegExample(word, seg, lang=lang))
    if not examples:
        raise ParseError(f"{path}: no examples")
    return Dataset(tuple(examples), lang=lang, path=str(path))


def serialize_dataset(dataset: Iterable[SegExample], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in dataset:
            fh.write(f"{ex.source}\t{ex.target}\n")


def load_aux_words(path) -> list[str]:
    """Read an auxiliary word list (one word per line, lowercased); words
    containing the separator character are skipped with a warning."""
    words = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            word = raw.strip()
            if not word or word.startswith("#"):
                continue
            if SEPARATOR in word:
                warnings.warn(
                    f"{path}:{lineno}: skipping word containing {SEPARATOR!r}"
                )
                continue
            words.append(word.lower())
    if not words:
        raise DataError(f"{path}: no usable auxiliary words")
    return words


# ---------------------------------------------------------------------------
# vocabulary


@dataclass(frozen=True)
class Vocabulary:
    """Symbol table: reserved symbols first, then language tags, then the
    alphabet in code-point order starting at `sigma_start`."""

    symbols: tuple[str, ...]
    sigma_start: int
    index: dict[str, int] = field(repr=False, compare=False)

    @classmethod
    def from_symbols(cls, symbols: Sequence[str], sigma_start: int) -> "Vocabulary":
        symbols = tuple(symbols)
        if len(set(symbols)) != len(symbols):
            raise DataError("duplicate symbols in vocabulary")
        if symbols[: len(BASE_RESERVED)] != BASE_RESERVED:
            raise DataError("vocabulary must start with the reserved symbols")
        if not len(BASE_RESERVED) <= sigma_start <= len(symbols):
            raise DataError(f"sigma_start {sigma_start} out of range")
        return cls(symbols, sigma_start, {s: i for i, s in enumerate(symbols)})

    @classmethod
    def build(
        cls, examples: Iterable[SegExample], extra_tags: Iterable[str] = ()
    ) -> "Vocabulary":
        """Vocabulary over a training corpus: alphabet from the example
        characters, one tag symbol per language seen."""
        alphabet: set[str] = set()
        tags = {lang_symbol(t) for t in extra_tags}
        n = 0
        for ex in examples:
            n += 1
            alphabet.update(ex.source)
            alphabet.update(ex.target.replace(SEPARATOR, ""))
            if ex.lang:
                tags.add(lang_symbol(ex.lang))
        if n == 0:
            raise DataError("cannot build a vocabulary from no examples")
        reserved = BASE_RESERVED + tuple(sorted(tags))
        return cls.from_symbols(reserved + tuple(sorted(alphabet)), len(reserved))

    @property
    def sigma(self) -> tuple[str, ...]:
        return self.symbols[self.sigma_start :]

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def bos_id(self) -> int:
        return self.index[BOS]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @property
    def sep_id(self) -> int:
        return self.index[SEP]

    def char_id(self, ch: str) -> int:
        """Alphabet lookup; unseen characters map to the unknown symbol."""
        i = self.index.get(ch, -1)
        return i if i >= self.sigma_start else self.unk_id

    def render(self, symbol_id: int) -> str:
        """Output-side text for a symbol: the separator and unknown symbols
        have single-character renderings; alphabet symbols are themselves."""
        sym = self.symbols[symbol_id]
        if sym == SEP:
            return SEPARATOR
        if sym == UNK:
            return UNK_RENDER
        return sym


@dataclass(frozen=True)
class EncodedExample:
    """Integer form of one example: source symbol ids (language tag and task
    marker first, when present), target ids ending with the end symbol, and
    the bare word length used for decoding-length limits."""

    src: np.ndarray
    tgt: np.ndarray
    word_len: int


def encode_example(vocab: Vocabulary, ex: SegExample) -> EncodedExample:
    prefix = []
    if ex.lang is not None:
        tag = lang_symbol(ex.lang)
        if tag not in vocab.index:
            raise DataError(f"language tag {tag} not in vocabulary")
        prefix.append(vocab.index[tag])
    if ex.task is not None:
        prefix.append(vocab.index[SEG_MARK if ex.task == "SEG" else AE_MARK])
    src = prefix + [vocab.char_id(c) for c in ex.source]
    tgt = [
        vocab.sep_id if c == SEPARATOR else vocab.char_id(c) for c in ex.target
    ] + [vocab.eos_id]
    return EncodedExample(
        np.asarray(src, dtype=np.int64),
        np.asarray(tgt, dtype=np.int64),
        len(ex.source),
    )


# ---------------------------------------------------------------------------
# training-corpus construction


def generate_random_strings(
    alphabet: Iterable[str], n: int, lengths: Sequence[int], seed: int
) -> list[str]:
    """`n` random strings: length drawn uniformly from the `lengths`
    multiset, characters drawn uniformly from the alphabet."""
    alpha = sorted(set(alphabet))
    lens = list(lengths)
    if not alpha:
        raise DataError("empty alphabet")
    if SEPARATOR in alpha:
        raise DataError("alphabet must not contain the separator")
    if not lens or min(lens) < 1:
        raise DataError("lengths must be a non-empty multiset of positive ints")
    if n < 0:
        raise DataError("n must be non-negative")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        k = lens[int(rng.integers(0, len(lens)))]
        out.append("".join(alpha[i] for i in rng.integers(0, len(alpha), size=k)))
    return out


def pick_aux_words(words: Sequence[str], n: int, rng: np.random.Generator) -> list[str]:
    """Sample `n` auxiliary words: without replacement over the deduplicated
    list while it lasts, topping up with replacement (with a warning) if the
    list is too small."""
    unique = list(dict.fromkeys(words))
    order = [unique[i] for i in rng.permutation(len(unique))]
    if n <= len(order):
        return order[:n]
    warnings.warn(
        f"auxiliary corpus has {len(unique)} unique words, need {n}; reusing words"
    )
    extra = [unique[int(i)] for i in rng.integers(0, len(unique), size=n - len(order))]
    return order + extra


def build_training_corpus(
    train: Dataset,
    mode: str,
    m: int = 0,
    aux_words: Sequence[str] | None = None,
    seed: int = 0,
) -> list[SegExample]:
    """Assemble the training examples for one mode.

    S2S: the gold examples unchanged.  MTT-*: gold examples carry the
    segmentation task marker and m*|train| auxiliary word->word examples
    carry the autoencoding marker.  DA-*: the same auxiliary examples but
    unmarked.  The -U variants draw auxiliary words from `aux_words`; the -R
    variants generate random strings over the training alphabet with lengths
    drawn from the training word lengths.  Total size is |train|*(1+m).

    Language tags are a multilingual-pooling device, so monolingual corpora
    drop any per-example language (no tag symbol enters the vocabulary).
    """
    if mode == "XLING":
        raise ValueError("multilingual corpora are built by build_xling_corpus")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if m < 0:
        raise ValueError("m must be non-negative")
    if mode == "S2S":
        if m:
            raise ValueError("S2S takes no auxiliary examples (m must be 0)")
        return [replace(ex, lang=None) for ex in train.examples]

    multi_task = mode.startswith("MTT")
    gold = [
        replace(ex, task="SEG" if multi_task else ex.task, lang=None)
        for ex in train.examples
    ]
    n_aux = m * len(gold)
    if n_aux == 0:
        return gold
    if mode.endswith("-U"):
        if not aux_words:
            raise DataError(f"mode {mode} with m={m} needs auxiliary words")
        words = pick_aux_words(aux_words, n_aux, np.random.default_rng(seed))
    else:
        lengths = [len(ex.source) for ex in train.examples]
        alphabet = {c for ex in train.examples for c in ex.source}
        words = generate_random_strings(alphabet, n_aux, lengths, seed)
    task = "AE" if multi_task else None
    aux = [SegExample(w, w, task=task) for w in words]
    return gold + aux


def build_xling_corpus(datasets: Mapping[str, Dataset]) -> list[SegExample]:
    """Pool several languages into one corpus, prefixing every example with
    its language tag.  Size is the sum of the per-language sizes."""
    if len(datasets) < 2:
        raise DataError("multilingual training needs at least two languages")
    out: list[SegExample] = []
    for tag in sorted(datasets):
        out.extend(replace(ex, lang=tag) for ex in datasets[tag].examples)
    return out


def decorate_for_mode(ex: SegExample, mode: str, lang: str | None = None) -> SegExample:
    """Prepare a held-out example for decoding under a trained mode: the
    multi-task models expect the segmentation marker, the multilingual model
    expects a language tag (and only that model — any stray language left
    over from dataset loading is dropped otherwise)."""
    if mode.startswith("MTT"):
        ex = replace(ex, task="SEG")
    if mode == "XLING":
        tag = lang or ex.lang
        if not tag:
            raise DataError("multilingual decoding needs a language tag")
        ex = replace(ex, lang=tag)
    else:
        ex = replace(ex, lang=None)
    return ex


# ---------------------------------------------------------------------------
# corpus statistics


@dataclass(frozen=True)
class CorpusStats:
    n_words: int
    n_unique_words: int
    alphabet_size: int
    morphs_per_word: float
    seg_points_per_word: float
    max_morphs: int
    n_unique_morphs: int
    top_morphs: tuple[tuple[str, int], ...]


def morphs_of(target: str) -> list[str]:
    """Morphs of a segmentation string; empty pieces from doubled or edge
    separators are dropped."""
    return [p for p in target.split(SEPARATOR) if p]


def corpus_stats(examples: Sequence[SegExample], top_k: int = 10) -> CorpusStats:
    if not examples:
        raise DataError("statistics need at least one example")
    morph_lists = [morphs_of(ex.target) for ex in examples]
    counts = Counter(m for ms in morph_lists for m in ms)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return CorpusStats(
        n_words=len(examples),
        n_unique_words=len({ex.source for ex in examples}),
        alphabet_size=len({c for ex in examples for c in ex.source}),
        morphs_per_word=fmean(len(ms) for ms in morph_lists),
        seg_points_per_word=fmean(len(ms) - 1 for ms in morph_lists),
        max_morphs=max(len(ms) for ms in morph_lists),
        n_unique_morphs=len(counts),
        top_morphs=tuple(ranked[:top_k]),
    )
