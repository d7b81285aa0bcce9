"""Segmented corpora, character vocabulary, word short list, dev split and
pre-trained character embeddings."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numcore import ContractError, DimensionError

UNK = "<unk>"
_WS = re.compile(r"\s+")


class CorpusError(ValueError):
    """Malformed corpus or embedding file."""


# ------------------------------------------------------------ segmentations


def lengths_to_cuts(lengths: Sequence[int]) -> tuple[int, ...]:
    cuts, pos = [], 0
    for length in lengths[:-1]:
        pos += length
        cuts.append(pos)
    return tuple(cuts)


def cuts_to_lengths(cuts: Sequence[int], n: int) -> tuple[int, ...]:
    bounds = [0, *cuts, n]
    lengths = tuple(b - a for a, b in zip(bounds, bounds[1:]))
    if any(length < 1 for length in lengths):
        raise ContractError(f"cuts {tuple(cuts)} are not strictly increasing inside (0, {n})")
    return lengths


def check_partition(lengths: Sequence[int], n: int) -> None:
    if any(length < 1 for length in lengths) or sum(lengths) != n:
        raise ContractError(f"word lengths {tuple(lengths)} do not partition {n} characters")


def normalize_text(text: str) -> str:
    """Map ASCII digits to ``0`` and ASCII letters to ``A``; length is preserved."""
    out = []
    for ch in text:
        if "0" <= ch <= "9":
            out.append("0")
        elif ("a" <= ch <= "z") or ("A" <= ch <= "Z"):
            out.append("A")
        else:
            out.append(ch)
    return "".join(out)


@dataclass(frozen=True)
class Sentence:
    """Unsegmented text plus, when supervised, gold cut positions.

    A cut at ``i`` means a word boundary between characters ``i-1`` and ``i``.
    """

    text: str
    gold_cuts: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.gold_cuts is not None:
            cuts_to_lengths(self.gold_cuts, len(self.text))

    def __len__(self) -> int:
        return len(self.text)

    @classmethod
    def from_words(cls, words: Sequence[str]) -> Sentence:
        return cls("".join(words), lengths_to_cuts([len(w) for w in words]))

    @property
    def gold_lengths(self) -> tuple[int, ...]:
        if self.gold_cuts is None:
            raise ContractError("sentence has no gold segmentation")
        return cuts_to_lengths(self.gold_cuts, len(self.text))

    def words(self, lengths: Sequence[int] | None = None) -> list[str]:
        lengths = self.gold_lengths if lengths is None else lengths
        check_partition(lengths, len(self.text))
        out, pos = [], 0
        for length in lengths:
            out.append(self.text[pos : pos + length])
            pos += length
        return out

    def render(self, lengths: Sequence[int] | None = None) -> str:
        return " ".join(self.words(lengths))


@dataclass(frozen=True)
class CorpusStats:
    sentences: int
    words: int
    characters: int


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    source: str | None = None
    word_freq: Counter = field(default_factory=Counter, compare=False)

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sentence], source: str | None = None) -> Corpus:
        sentences = tuple(sentences)
        freq: Counter = Counter()
        for s in sentences:
            if s.gold_cuts is not None:
                freq.update(s.words())
        return cls(sentences, source, freq)

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def stats(self) -> CorpusStats:
        return CorpusStats(
            sentences=len(self.sentences),
            words=sum(len(s.gold_cuts) + 1 for s in self.sentences if s.gold_cuts is not None),
            characters=sum(len(s) for s in self.sentences),
        )

    @property
    def word_set(self) -> frozenset[str]:
        return frozenset(self.word_freq)


def parse_segmented_line(line: str, normalize: bool = False) -> Sentence | None:
    words = _WS.split(line.strip())
    words = [w for w in words if w]
    if not words:
        return None
    if normalize:
        words = [normalize_text(w) for w in words]
    return Sentence.from_words(words)


def load_segmented_corpus(path: str | Path, normalize: bool = False) -> Corpus:
    """Read a SIGHAN-style file: one sentence per line, words split by whitespace."""
    path = Path(path)
    raw = path.read_bytes()
    sentences = []
    for lineno, bline in enumerate(raw.splitlines(), 1):
        try:
            line = bline.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: invalid UTF-8 ({exc.reason})") from None
        if lineno == 1:
            line = line.lstrip("﻿")
        sent = parse_segmented_line(line, normalize)
        if sent is not None:
            sentences.append(sent)
    return Corpus.from_sentences(sentences, str(path))


def load_raw_lines(path: str | Path) -> list[str]:
    """Unsegmented input: one sentence per line, whitespace stripped, order kept."""
    path = Path(path)
    out = []
    for lineno, bline in enumerate(path.read_bytes().splitlines(), 1):
        try:
            line = bline.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: invalid UTF-8 ({exc.reason})") from None
        out.append(_WS.sub("", line.lstrip("﻿") if lineno == 1 else line))
    return out


def split_dev(corpus: Corpus, fraction: float = 0.1) -> tuple[Corpus, Corpus]:
    """Hold out the last ``ceil(fraction * N)`` sentences, keeping file order."""
    n = len(corpus)
    if n < 10:
        raise ContractError(f"corpus of {n} sentences is too small for a dev split")
    n_dev = math.ceil(round(fraction * n, 9))
    cut = n - n_dev
    return (
        Corpus.from_sentences(corpus.sentences[:cut], corpus.source),
        Corpus.from_sentences(corpus.sentences[cut:], corpus.source),
    )


# ------------------------------------------------------------ vocabularies


@dataclass(frozen=True)
class CharVocab:
    """Character ids. Id 0 is :data:`UNK`; known characters follow in code-point order."""

    chars: tuple[str, ...]
    freq: tuple[int, ...]
    unk_threshold: int = 1

    def __post_init__(self):
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.chars)})

    @property
    def unk_id(self) -> int:
        return 0

    def __len__(self) -> int:
        return len(self.chars)

    def __contains__(self, ch: str) -> bool:
        return ch in self._index and ch != UNK

    def id(self, ch: str) -> int:
        return self._index.get(ch, 0)

    def encode(self, text: str) -> np.ndarray:
        index = self._index
        return np.fromiter((index.get(c, 0) for c in text), dtype=np.intp, count=len(text))

    @property
    def rare_mask(self) -> np.ndarray:
        """True for ids eligible for stochastic UNK replacement during training."""
        f = np.asarray(self.freq)
        mask = f <= self.unk_threshold
        mask[0] = False
        return mask


def build_char_vocab(corpus: Corpus, unk_threshold: int = 1) -> CharVocab:
    if not len(corpus):
        raise ContractError("cannot build a vocabulary from an empty corpus")
    counts: Counter = Counter()
    for s in corpus:
        counts.update(s.text)
    chars = sorted(counts)
    return CharVocab((UNK, *chars), (0, *(counts[c] for c in chars)), unk_threshold)


@dataclass(frozen=True)
class ShortList:
    """Frequent training words that get their own embedding row."""

    words: tuple[str, ...]
    fraction: float
    iv_count: int

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def get(self, word: str) -> int | None:
        return self._index.get(word)


def build_short_list(corpus: Corpus, fraction: float) -> ShortList:
    """Top ``ceil(fraction * |IV|)`` words by (frequency desc, word asc)."""
    if not 0.0 <= fraction <= 1.0:
        raise ContractError(f"short-list fraction {fraction} outside [0, 1]")
    ranked = sorted(corpus.word_freq.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = math.ceil(round(fraction * len(ranked), 9))
    return ShortList(tuple(w for w, _ in ranked[:keep]), fraction, len(ranked))


# ------------------------------------------------------------ embeddings


def load_pretrained_embeddings(path: str | Path, vocab: CharVocab, matrix: np.ndarray) -> float:
    """Overwrite rows of ``matrix`` (|vocab| x d_c) from a word2vec text file.

    Returns the fraction of non-UNK vocabulary characters found in the file.
    """
    path = Path(path)
    d_c = matrix.shape[1]
    if matrix.shape[0] != len(vocab):
        raise DimensionError(f"embedding matrix {matrix.shape} does not match vocab size {len(vocab)}")
    lines = path.read_text(encoding="utf-8").splitlines()
    found = set()
    if lines:
        header = lines[0].split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise CorpusError(f"{path}:1: expected header 'V d'")
        if int(header[1]) != d_c:
            raise DimensionError(f"{path}: embedding dimension {header[1]} != d_c={d_c}")
        for lineno, line in enumerate(lines[1:], 2):
            parts = line.rstrip().split(" ")
            if not line.strip():
                continue
            if len(parts) != d_c + 1:
                raise CorpusError(f"{path}:{lineno}: expected token and {d_c} values")
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: non-numeric value") from None
            token = parts[0]
            if token in vocab:
                matrix[vocab.id(token)] = vec
                found.add(token)
    known = len(vocab) - 1
    return len(found) / known if known else 0.0
