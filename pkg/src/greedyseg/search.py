"""Prefix-synchronous beam search over segmentations.

For every character position ``j`` the beam keeps the ``k`` best hypotheses
whose last word ends exactly at ``j``. Candidates at ``j`` extend every
hypothesis stored at ``j - l`` (``1 <= l <= L_max``) with the word
``text[j-l:j]``, so a sentence costs at most ``L_max * k * n`` expansions.
With ``k = 1`` this is the greedy segmenter.

Ties are broken by preferring the larger parent position (shorter last
word), then the lexicographically smaller sequence of word end positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import CharVocab, ShortList, normalize_text
from .numcore import ArrayLike, ContractError
from .scorer import (
    StepState,
    advance,
    init_decoder_state,
    max_word_len,
    score_sequence,
    spans_of,
    word_matrix,
)

MAX_ENUMERATE = 12


@dataclass(eq=False)
class Hypothesis:
    end_pos: int
    model_score: float
    delta: int
    score: float
    last_len: int
    parent: Hypothesis | None
    ends: tuple[int, ...]
    word_vec: np.ndarray | None = None
    state: StepState | None = field(default=None, repr=False)
    up: np.ndarray | None = field(default=None, repr=False)

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in zip((0, *self.ends), self.ends))

    def sort_key(self):
        return (-self.score, self.last_len, self.ends)


class BeamDecoder:
    """Incremental beam search state for one sentence.

    ``gold_lengths`` with ``mu > 0`` turns on loss augmentation: appending a
    word that is not exactly a gold word adds ``mu`` per character.
    """

    def __init__(
        self,
        params: Mapping[str, ArrayLike],
        ids: np.ndarray,
        text: str,
        shortlist: ShortList,
        k: int = 1,
        gold_lengths: Sequence[int] | None = None,
        mu: float = 0.0,
    ):
        if k < 1:
            raise ContractError(f"beam size must be >= 1, got {k}")
        if not text:
            raise ContractError("cannot decode an empty sentence")
        if len(ids) != len(text):
            raise ContractError("character ids and text differ in length")
        self.params = params
        self.k = k
        self.n = len(text)
        self.mu = float(mu)
        self.L = min(max_word_len(params), self.n)
        self.gold_spans = None if gold_lengths is None else frozenset(spans_of(gold_lengths))
        if self.gold_spans is not None and sum(gold_lengths) != self.n:
            raise ContractError("gold segmentation does not cover the sentence")
        self.u = np.asarray(params["legal_u"])
        self.vecs = {
            n: word_matrix(params, ids, text, [(s, s + n) for s in range(self.n - n + 1)], shortlist)
            for n in range(1, self.L + 1)
        }
        root_state = init_decoder_state(params)
        self.root = Hypothesis(0, 0.0, 0, 0.0, 0, None, (), state=root_state)
        self.root.up = self.u + root_state.prediction
        self.beams: list[list[Hypothesis] | None] = [[self.root]] + [None] * self.n
        self.expansions = 0

    def materialize(self, hyp: Hypothesis) -> Hypothesis:
        if hyp.state is None:
            hyp.state = advance(self.params, self.materialize(hyp.parent).state, hyp.word_vec)
            hyp.up = self.u + hyp.state.prediction
        return hyp

    def word_delta(self, start: int, end: int) -> int:
        if self.gold_spans is None or (start, end) in self.gold_spans:
            return 0
        return end - start

    def extend(self, parent: Hypothesis, length: int) -> Hypothesis:
        self.materialize(parent)
        start = parent.end_pos
        end = start + length
        vec = self.vecs[length][start]
        model_score = parent.model_score + float(parent.up @ vec)
        delta = parent.delta + self.word_delta(start, end)
        return Hypothesis(
            end, model_score, delta, model_score + self.mu * delta, length, parent,
            (*parent.ends, end), vec,
        )

    def step(self, j: int) -> list[Hypothesis]:
        """Fill and return the beam of hypotheses ending at position ``j``."""
        candidates = []
        for length in range(1, min(self.L, j) + 1):
            for parent in self.beams[j - length]:
                candidates.append(self.extend(parent, length))
        self.expansions += len(candidates)
        if self.k == 1:
            beam = [min(candidates, key=Hypothesis.sort_key)]
        else:
            beam = sorted(candidates, key=Hypothesis.sort_key)[: self.k]
        self.beams[j] = beam
        return beam

    def reset(self, j: int, hyp: Hypothesis) -> None:
        self.beams[j] = [hyp]

    def follow(self, lengths: Sequence[int]) -> Hypothesis:
        """Hypothesis for a fixed path, built with the same incremental scoring."""
        hyp = self.root
        for length in lengths:
            hyp = self.extend(hyp, length)
        return hyp

    def run(self) -> Hypothesis:
        for j in range(1, self.n + 1):
            self.step(j)
        return self.beams[self.n][0]


@dataclass
class DecodeResult:
    lengths: tuple[int, ...]
    score: float
    model_score: float
    delta: int
    expansions: int
    trace: list[list[tuple[tuple[int, ...], float]]] | None = None


def decode(
    params: Mapping[str, ArrayLike],
    ids: np.ndarray,
    text: str,
    shortlist: ShortList,
    k: int = 1,
    margin: tuple[Sequence[int], float] | None = None,
    trace: bool = False,
) -> DecodeResult:
    """Best segmentation found by beam search of width ``k``.

    ``margin=(gold_lengths, mu)`` enables loss-augmented scoring. ``score``
    includes the margin; ``model_score`` does not.
    """
    gold, mu = margin if margin is not None else (None, 0.0)
    dec = BeamDecoder(params, ids, text, shortlist, k, gold, mu)
    best = dec.run()
    beams = None
    if trace:
        beams = [[(h.ends, h.score) for h in beam] for beam in dec.beams[1:]]
    return DecodeResult(best.lengths, best.score, best.model_score, best.delta, dec.expansions, beams)


def enumerate_segmentations(n: int, max_len: int = 4) -> list[tuple[int, ...]]:
    """Every split of ``n`` characters into words of at most ``max_len``."""
    if n > MAX_ENUMERATE:
        raise ContractError(f"refusing to enumerate segmentations of {n} > {MAX_ENUMERATE} characters")
    if n < 0 or max_len < 1:
        raise ContractError(f"bad arguments n={n}, max_len={max_len}")
    out: list[tuple[int, ...]] = []

    def rec(rest: int, prefix: tuple[int, ...]):
        if rest == 0:
            out.append(prefix)
            return
        for length in range(1, min(max_len, rest) + 1):
            rec(rest - length, (*prefix, length))

    rec(n, ())
    return out


def exact_decode(
    params: Mapping[str, ArrayLike], ids: np.ndarray, text: str, shortlist: ShortList
) -> tuple[tuple[int, ...], float]:
    """Brute-force argmax over all segmentations (short inputs only)."""
    if not text:
        raise ContractError("cannot decode an empty sentence")
    best_key, best = None, None
    for lengths in enumerate_segmentations(len(text), max_word_len(params)):
        s = float(score_sequence(params, ids, text, lengths, shortlist))
        ends = tuple(np.cumsum(lengths).tolist())
        key = (-s, lengths[-1], ends)
        if best_key is None or key < best_key:
            best_key, best = key, (lengths, s)
    return best


@dataclass
class Segmenter:
    """A trained model bundled with the vocabularies it was trained with."""

    params: Mapping[str, np.ndarray]
    vocab: CharVocab
    shortlist: ShortList
    normalize: bool = False

    def prepare(self, text: str) -> tuple[str, np.ndarray]:
        if self.normalize:
            text = normalize_text(text)
        return text, self.vocab.encode(text)

    def segment(self, text: str, k: int = 1) -> tuple[int, ...]:
        if not text:
            return ()
        norm, ids = self.prepare(text)
        return decode(self.params, ids, norm, self.shortlist, k).lengths

    def words(self, text: str, k: int = 1) -> list[str]:
        out, pos = [], 0
        for length in self.segment(text, k):
            out.append(text[pos : pos + length])
            pos += length
        return out
