"""Word-segmentation scoring: precision, recall, F1 and OOV recall.

Counts are pooled over the corpus before dividing (micro-average), which is
the convention of the SIGHAN bakeoff scoring script.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import AbstractSet, Iterable, Sequence

from .corpus import Corpus, check_partition
from .numcore import ContractError


def word_spans(lengths: Sequence[int], n: int) -> set[tuple[int, int]]:
    """Half-open ``(start, end)`` spans of a segmentation of ``n`` characters."""
    check_partition(lengths, n)
    spans, pos = set(), 0
    for length in lengths:
        spans.add((pos, pos + length))
        pos += length
    return spans


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class SegMetrics:
    gold_words: int = 0
    pred_words: int = 0
    correct_words: int = 0
    oov_gold_words: int = 0
    oov_correct: int = 0

    @property
    def precision(self) -> float:
        return self.correct_words / self.pred_words if self.pred_words else 0.0

    @property
    def recall(self) -> float:
        return self.correct_words / self.gold_words if self.gold_words else 0.0

    @property
    def f1(self) -> float:
        return _f1(self.precision, self.recall)

    @property
    def oov_recall(self) -> float:
        # no OOV gold words: nothing was missed
        return self.oov_correct / self.oov_gold_words if self.oov_gold_words else 1.0

    def add(
        self,
        text: str,
        gold: Sequence[int],
        pred: Sequence[int],
        train_words: AbstractSet[str] | None = None,
    ) -> None:
        if sum(gold) != sum(pred):
            raise ContractError(f"gold covers {sum(gold)} characters, prediction {sum(pred)}")
        n = len(text)
        g, p = word_spans(gold, n), word_spans(pred, n)
        hit = g & p
        self.gold_words += len(g)
        self.pred_words += len(p)
        self.correct_words += len(hit)
        if train_words is not None:
            for s, e in g:
                if text[s:e] not in train_words:
                    self.oov_gold_words += 1
                    self.oov_correct += (s, e) in hit

    def merge(self, other: SegMetrics) -> SegMetrics:
        return SegMetrics(**{k: getattr(self, k) + v for k, v in asdict(other).items()})

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "oov_recall": self.oov_recall,
            **asdict(self),
        }


def prf(gold: Sequence[int], pred: Sequence[int]) -> tuple[float, float, float]:
    m = SegMetrics()
    m.add("\0" * sum(gold), gold, pred)
    return m.precision, m.recall, m.f1


def oov_recall(text: str, gold: Sequence[int], pred: Sequence[int], train_words: AbstractSet[str]) -> float:
    m = SegMetrics()
    m.add(text, gold, pred, train_words)
    return m.oov_recall


def score_corpus(
    items: Iterable[tuple[str, Sequence[int], Sequence[int]]],
    train_words: AbstractSet[str] | None = None,
) -> SegMetrics:
    """Pool ``(text, gold_lengths, pred_lengths)`` triples into one metric record."""
    m = SegMetrics()
    for text, gold, pred in items:
        m.add(text, gold, pred, train_words)
    return m


def evaluate_corpus(segmenter, corpus: Corpus, k: int = 1, train_words: AbstractSet[str] | None = None) -> SegMetrics:
    """Decode every sentence of ``corpus`` at beam ``k`` and score against its gold."""
    return score_corpus(
        ((s.text, s.gold_lengths, segmenter.segment(s.text, k)) for s in corpus), train_words
    )
