"""Desk-scale training on a synthetic Zipfian corpus.

This is a stand-in for the PKU desk run (acceptance criteria 6 and 7), which
needs data that is not bundled. It exercises the same code path and
settings, but its numbers say nothing about PKU.
"""

import time

import pytest

from greedyseg.corpus import split_dev
from greedyseg.evalseg import evaluate_corpus
from greedyseg.training import TrainConfig, train

from synth import make_corpus


@pytest.mark.slow
def test_synthetic_desk_run():
    corpus = make_corpus(1000, seed=0)
    tr, dev = split_dev(corpus)
    t0 = time.perf_counter()
    result = train(TrainConfig(strategy="early", max_epochs=5, patience=5), tr, dev)
    elapsed = time.perf_counter() - t0
    rep = result.report
    assert len(rep.epochs) <= 5
    assert rep.best.dev_f1 >= 0.80
    assert elapsed < 20 * 60
    f1_1 = evaluate_corpus(result.segmenter, dev, 1).f1
    f1_8 = evaluate_corpus(result.segmenter, dev, 8).f1
    assert f1_1 == rep.best.dev_f1
    assert abs(f1_8 - f1_1) <= 0.005
