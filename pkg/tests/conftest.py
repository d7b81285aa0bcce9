from __future__ import annotations

import numpy as np
import pytest

from greedyseg.corpus import Corpus, Sentence, build_char_vocab, build_short_list
from greedyseg.scorer import Dims, ModelParams, init_params
from greedyseg.search import Segmenter

ALPHABET = "ABCDEFGH"

TINY_LINES = ["AB C DE", "ABC D", "A BC", "DE A B C", "AB AB", "FG H", "E FGH", "C D", "H AB", "BCD E"]


@pytest.fixture
def tiny_corpus() -> Corpus:
    return Corpus.from_sentences(Sentence.from_words(line.split()) for line in TINY_LINES)


def random_model(seed: int, d: int = 6, hidden: int | None = None, scale: float = 0.8, max_len: int = 4):
    """A tiny model with every tensor (biases, u, h0, c0 included) random."""
    corpus = Corpus.from_sentences(Sentence.from_words(line.split()) for line in TINY_LINES)
    vocab = build_char_vocab(corpus)
    shortlist = build_short_list(corpus, 0.5)
    dims = Dims(len(vocab), len(shortlist), d, d, hidden or d, max_len)
    rng = np.random.default_rng(seed)
    base = init_params(dims, seed)
    params = ModelParams(dims, {k: rng.normal(scale=scale, size=v.shape) for k, v in base.items()})
    return Segmenter(params, vocab, shortlist)


def random_text(rng: np.random.Generator, n: int) -> str:
    return "".join(rng.choice(list(ALPHABET), size=n))


def random_lengths(rng: np.random.Generator, n: int, max_len: int = 4) -> tuple[int, ...]:
    out, left = [], n
    while left:
        length = int(rng.integers(1, min(max_len, left) + 1))
        out.append(length)
        left -= length
    return tuple(out)


@pytest.fixture
def model():
    return random_model(7)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
