"""Crafted update-strategy scenarios shared by the unit and acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from greedyseg.scorer import ModelParams
from greedyseg.search import BeamDecoder, Segmenter, decode, enumerate_segmentations
from greedyseg.training import LOSSES, Example, TrainConfig, sgd_step

from conftest import random_model

TINY = dict(d_c=6, d_w=6, hidden=6, max_word_len=4)


def example(seg: Segmenter, text: str, gold) -> Example:
    return Example(text, seg.vocab.encode(text), tuple(gold))


def first_fall_off(seg: Segmenter, ex: Example, mu: float, k: int = 1) -> int:
    """First gold boundary whose gold prefix is missing from the margin-augmented beam."""
    res = decode(seg.params, ex.ids, ex.text, seg.shortlist, k, margin=(ex.gold, mu), trace=True)
    ends = np.cumsum(ex.gold).tolist()
    for j in ends:
        prefix = tuple(e for e in ends if e <= j)
        if all(h != prefix for h, _ in res.trace[j - 1]):
            return j
    return len(ex.text)


@dataclass
class EarlyCase:
    seg: Segmenter
    ex: Example
    config: TrainConfig
    expected_stop: int
    prefix_chars: str
    suffix_chars: str


def early_fall_off_case(seed: int) -> EarlyCase:
    """A model and gold whose early update fires inside a prefix of characters
    that never occur in the rest of the sentence."""
    prefix, suffix = "ABCD", "EFGH"
    config = TrainConfig(**TINY, mu=0.2, strategy="early")
    for s in range(seed, seed + 1000):
        seg = random_model(s)
        for head in enumerate_segmentations(len(prefix)):
            ex = example(seg, prefix + suffix, (*head, 1, 1, 1, 1))
            stop = first_fall_off(seg, ex, config.mu)
            if stop <= len(prefix):
                return EarlyCase(seg, ex, config, stop, prefix, suffix)
    raise RuntimeError("no early fall-off found")


def inverted_case(n: int = 8, seed: int = 0) -> tuple[Segmenter, Example, TrainConfig]:
    """Gold is all single characters and a huge margin makes every two-character
    candidate outrank it, so gold falls off at each boundary from 2 on."""
    seg = random_model(seed)
    text = "ABCDEFGH"[:n]
    ex = example(seg, text, (1,) * n)
    return seg, ex, TrainConfig(**TINY, mu=1e3, strategy="laso")


def record_resets(monkeypatch) -> list[tuple[int, list[tuple[int, ...]], tuple[int, ...]]]:
    """Patch BeamDecoder.reset to log (position, beam paths after reset, reset path)."""
    log = []
    original = BeamDecoder.reset

    def spy(self, j, hyp):
        original(self, j, hyp)
        log.append((j, [h.ends for h in self.beams[j]], hyp.ends))

    monkeypatch.setattr(BeamDecoder, "reset", spy)
    return log


def zero_loss_is_noop(seg: Segmenter, text: str, strategy: str, k: int = 1) -> tuple[float, bool]:
    """Use the unaugmented decode output as gold, so every strategy sees zero loss.

    Returns the loss and whether an sgd_step with the returned gradients
    leaves every parameter bit-identical.
    """
    ids = seg.vocab.encode(text)
    gold = decode(seg.params, ids, text, seg.shortlist, k).lengths
    config = TrainConfig(**TINY, mu=0.0, beam_size=k, strategy=strategy)
    params = ModelParams(seg.params.dims, {n: v.copy() for n, v in seg.params.items()})
    before = params.copy()
    res = LOSSES[strategy](params, Example(text, ids, gold), seg.shortlist, config)
    sgd_step(params, res.gradients(params), 0.2, 5.0)
    same = all(np.array_equal(params[n], before[n]) and params[n].tobytes() == before[n].tobytes() for n in params)
    return res.loss, same and res.grads is None
