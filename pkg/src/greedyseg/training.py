"""Max-margin training with standard, early and LaSO updates."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import numcore as nc
from .corpus import (
    CharVocab,
    Corpus,
    ShortList,
    build_char_vocab,
    build_short_list,
    load_pretrained_embeddings,
)
from .evalseg import evaluate_corpus, word_spans
from .numcore import ArrayLike, ContractError
from .scorer import Dims, ModelParams, init_params, score_sequence
from .search import BeamDecoder, Hypothesis, Segmenter

log = logging.getLogger(__name__)

STRATEGIES = ("standard", "early", "laso")


@dataclass
class TrainConfig:
    d_c: int = 50
    d_w: int = 50
    hidden: int = 50
    max_word_len: int = 4
    mu: float = 0.2
    beam_size: int = 1
    lr: float = 0.2
    gamma: float = 0.1
    max_epochs: int = 50
    patience: int = 5
    strategy: str = "early"
    shortlist_fraction: float = 0.5
    seed: int = 1
    unk_threshold: int = 1
    unk_replace_prob: float = 0.5
    grad_clip_norm: float = 5.0

    def __post_init__(self):
        if self.mu < 0:
            raise ContractError(f"margin discount must be >= 0, got {self.mu}")
        if self.beam_size < 1:
            raise ContractError(f"beam size must be >= 1, got {self.beam_size}")
        if self.lr <= 0:
            raise ContractError(f"learning rate must be > 0, got {self.lr}")
        if self.strategy not in STRATEGIES:
            raise ContractError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        for name in ("shortlist_fraction", "unk_replace_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")
        if min(self.d_c, self.d_w, self.hidden, self.max_word_len) < 1:
            raise ContractError("dimensions must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Example:
    """A training sentence with character ids and gold word lengths."""

    text: str
    ids: np.ndarray
    gold: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.text)


# ------------------------------------------------------------ losses


def margin_delta(hyp: Sequence[int], gold: Sequence[int]) -> int:
    """Characters whose word in ``hyp`` is not exactly a word of ``gold``."""
    n = sum(gold)
    if sum(hyp) != n:
        raise ContractError(f"segmentations cover {sum(hyp)} and {n} characters")
    gold_spans = word_spans(gold, n)
    return sum(e - s for s, e in word_spans(hyp, n) if (s, e) not in gold_spans)


@dataclass(frozen=True)
class Violation:
    """One hinge term: a (prefix) hypothesis that outranked the gold prefix."""

    upto: int
    hyp: tuple[int, ...]
    gold: tuple[int, ...]
    delta: int
    hinge: float


@dataclass
class LossResult:
    loss: float
    grads: dict[str, np.ndarray] | None
    stop_pos: int
    update_count: int
    violations: list[Violation] = field(default_factory=list)

    def gradients(self, params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        if self.grads is not None:
            return self.grads
        return {k: np.zeros_like(v) for k, v in params.items()}


def frozen_loss(
    params: Mapping[str, ArrayLike],
    ex: Example,
    shortlist: ShortList,
    violations: Sequence[Violation],
    mu: float,
) -> ArrayLike:
    """Sum of ``s(hyp) + mu * delta - s(gold)`` over fixed violating paths."""
    out = None
    for v in violations:
        term = nc.sub(
            score_sequence(params, ex.ids, ex.text, v.hyp, shortlist, upto=v.upto),
            score_sequence(params, ex.ids, ex.text, v.gold, shortlist, upto=v.upto),
        )
        term = nc.add(term, np.asarray(mu * v.delta))
        out = term if out is None else nc.add(out, term)
    return np.asarray(0.0) if out is None else out


def _violation(upto: int, best: Hypothesis, gold: Hypothesis) -> Violation:
    # gold's margin is zero by construction
    return Violation(upto, best.lengths, gold.lengths, best.delta, max(0.0, best.score - gold.model_score))


def _finish(params, ex, shortlist, config, violations, stop_pos) -> LossResult:
    active = [v for v in violations if v.hinge > 0.0]
    if not active:
        return LossResult(0.0, None, stop_pos, 0, violations)
    loss, grads = nc.value_and_grad(
        lambda P: frozen_loss(P, ex, shortlist, active, config.mu), params
    )
    return LossResult(loss, grads, stop_pos, len(active), violations)


def _decoder(params, ex, shortlist, config) -> BeamDecoder:
    return BeamDecoder(params, ex.ids, ex.text, shortlist, config.beam_size, ex.gold, config.mu)


def _gold_chain(dec: BeamDecoder, gold: Sequence[int]) -> dict[int, Hypothesis]:
    chain, hyp = {}, dec.root
    for length in gold:
        hyp = dec.extend(hyp, length)
        chain[hyp.end_pos] = hyp
    return chain


def sentence_loss_standard(params, ex: Example, shortlist: ShortList, config: TrainConfig) -> LossResult:
    """Full-sentence hinge against the loss-augmented beam output."""
    dec = _decoder(params, ex, shortlist, config)
    best = dec.run()
    gold = dec.follow(ex.gold)
    violations = [] if best.ends == gold.ends else [_violation(dec.n, best, gold)]
    return _finish(params, ex, shortlist, config, violations, dec.n)


def _search_with_updates(params, ex, shortlist, config, laso: bool) -> LossResult:
    dec = _decoder(params, ex, shortlist, config)
    chain = _gold_chain(dec, ex.gold)
    violations = []
    for j in range(1, dec.n + 1):
        beam = dec.step(j)
        gold = chain.get(j)
        if gold is None or any(h.ends == gold.ends for h in beam):
            continue
        violations.append(_violation(j, beam[0], gold))
        if not laso:
            return _finish(params, ex, shortlist, config, violations, j)
        dec.reset(j, gold)
    best, gold = dec.beams[dec.n][0], chain[dec.n]
    if best.ends != gold.ends:
        # gold survived the beam but is not the argmax
        violations.append(_violation(dec.n, best, gold))
    return _finish(params, ex, shortlist, config, violations, dec.n)


def sentence_loss_early(params, ex: Example, shortlist: ShortList, config: TrainConfig) -> LossResult:
    """Stop at the first gold boundary where the gold prefix has left the beam."""
    return _search_with_updates(params, ex, shortlist, config, laso=False)


def sentence_loss_laso(params, ex: Example, shortlist: ShortList, config: TrainConfig) -> LossResult:
    """After every fall-off, reset the beam to the gold prefix and keep going."""
    return _search_with_updates(params, ex, shortlist, config, laso=True)


LOSSES: dict[str, Callable[..., LossResult]] = {
    "standard": sentence_loss_standard,
    "early": sentence_loss_early,
    "laso": sentence_loss_laso,
}


# ------------------------------------------------------------ optimisation


def lr_schedule(epoch: int, lr0: float = 0.2, gamma: float = 0.1) -> float:
    if epoch < 0:
        raise ContractError(f"epoch index must be >= 0, got {epoch}")
    return lr0 / (1.0 + gamma * epoch)


def sgd_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    lr: float,
    clip_norm: float | None = 5.0,
) -> float:
    """In-place ``theta -= lr * g`` after global-norm clipping; returns the raw norm."""
    for name, g in grads.items():
        if np.shape(g) != params[name].shape:
            raise nc.DimensionError(f"{name}: gradient {np.shape(g)} vs parameter {params[name].shape}")
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    factor = lr
    if clip_norm is not None and norm > clip_norm:
        factor = lr * clip_norm / norm
    if factor == 0.0:
        return norm
    for name, g in grads.items():
        arr = params[name]
        arr -= factor * g
    return norm


def split_long_words(lengths: Sequence[int], max_len: int) -> tuple[tuple[int, ...], int]:
    """Chop words longer than ``max_len`` into ``max_len`` chunks plus remainder."""
    out, altered = [], 0
    for length in lengths:
        if length <= max_len:
            out.append(length)
            continue
        altered += 1
        while length > max_len:
            out.append(max_len)
            length -= max_len
        if length:
            out.append(length)
    return tuple(out), altered


def make_examples(corpus: Corpus, vocab: CharVocab, max_len: int) -> tuple[list[Example], int]:
    examples, altered = [], 0
    for s in corpus:
        gold, n = split_long_words(s.gold_lengths, max_len)
        altered += n
        examples.append(Example(s.text, vocab.encode(s.text), gold))
    return examples, altered


def replace_rare(ex: Example, rare: np.ndarray, prob: float, rng: np.random.Generator) -> Example:
    draws = rng.random(len(ex.ids))
    hit = rare[ex.ids] & (draws < prob)
    if not hit.any():
        return ex
    ids = ex.ids.copy()
    ids[hit] = 0
    return Example(ex.text, ids, ex.gold)


# ------------------------------------------------------------ orchestration


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    mean_loss: float
    updates: int
    dev_precision: float
    dev_recall: float
    dev_f1: float
    dev_oov_recall: float
    mean_stop_frac: float
    seconds: float = field(default=0.0, compare=False)


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    altered_words: int = 0
    pretrained_coverage: float | None = None

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch]


@dataclass
class TrainResult:
    segmenter: Segmenter
    report: TrainReport
    config: TrainConfig
    train_words: frozenset[str]


def train(
    config: TrainConfig,
    train_corpus: Corpus,
    dev_corpus: Corpus,
    pretrained: str | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Train with per-sentence SGD, keeping the parameters of the best dev-F1 epoch."""
    vocab = build_char_vocab(train_corpus, config.unk_threshold)
    shortlist = build_short_list(train_corpus, config.shortlist_fraction)
    dims = Dims(len(vocab), len(shortlist), config.d_c, config.d_w, config.hidden, config.max_word_len)
    params = init_params(dims, config.seed)
    report = TrainReport()
    if pretrained is not None:
        report.pretrained_coverage = load_pretrained_embeddings(pretrained, vocab, params["char_emb"])
    examples, report.altered_words = make_examples(train_corpus, vocab, config.max_word_len)
    if report.altered_words:
        log.info("split %d gold words longer than %d", report.altered_words, config.max_word_len)
    loss_fn = LOSSES[config.strategy]
    rare = vocab.rare_mask
    rng = np.random.default_rng(config.seed)
    train_words = train_corpus.word_set
    best_params, best_f1, stale = params.copy(), -1.0, 0

    for epoch in range(config.max_epochs):
        t0 = time.perf_counter()
        lr = lr_schedule(epoch, config.lr, config.gamma)
        total_loss, updates, stop_frac = 0.0, 0, 0.0
        for i in rng.permutation(len(examples)):
            ex = examples[i]
            if config.unk_replace_prob > 0:
                ex = replace_rare(ex, rare, config.unk_replace_prob, rng)
            res = loss_fn(params, ex, shortlist, config)
            stop_frac += res.stop_pos / len(ex)
            if res.loss > 0.0:
                total_loss += res.loss
                updates += res.update_count
                sgd_step(params, res.grads, lr, config.grad_clip_norm)
        dev = evaluate_corpus(Segmenter(params, vocab, shortlist), dev_corpus, config.beam_size, train_words)
        rec = EpochRecord(
            epoch=epoch,
            lr=lr,
            mean_loss=total_loss / max(len(examples), 1),
            updates=updates,
            dev_precision=dev.precision,
            dev_recall=dev.recall,
            dev_f1=dev.f1,
            dev_oov_recall=dev.oov_recall,
            mean_stop_frac=stop_frac / max(len(examples), 1),
            seconds=time.perf_counter() - t0,
        )
        report.epochs.append(rec)
        log.info(
            "epoch %d lr=%.4f loss=%.4f updates=%d dev_f1=%.4f (%.1fs)",
            epoch, lr, rec.mean_loss, updates, rec.dev_f1, rec.seconds,
        )
        if on_epoch is not None:
            on_epoch(rec)
        if rec.dev_f1 > best_f1:
            best_f1, report.best_epoch, stale = rec.dev_f1, epoch, 0
            best_params = params.copy()
        else:
            stale += 1
            if stale >= config.patience:
                break

    return TrainResult(Segmenter(best_params, vocab, shortlist), report, config, train_words)
