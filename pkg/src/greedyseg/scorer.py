"""Neural sentence scorer.

A candidate word is represented by a gated composition of its character
embeddings, averaged with a dedicated word embedding when the word is in the
short list. Words are linked left to right by an LSTM whose hidden state
predicts the next word vector, and a segmentation scores

    s(w_1..w_m) = sum_i (u + p_i) . Word(w_i)

where ``u`` is a learned legality vector and ``p_i = tanh(W_p h_{i-1} + b_p)``.

All functions take a parameter mapping whose values are plain arrays (fast
inference) or :class:`~greedyseg.numcore.Tensor` leaves (differentiable).
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import numcore as nc
from .corpus import ShortList, check_partition
from .numcore import ArrayLike, ContractError, LstmParams


@dataclass(frozen=True)
class Dims:
    n_chars: int
    n_words: int
    d_c: int = 50
    d_w: int = 50
    hidden: int = 50
    max_word_len: int = 4

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Canonical tensor order and shapes."""
        d_c, d_w, H = self.d_c, self.d_w, self.hidden
        out: dict[str, tuple[int, ...]] = {
            "char_emb": (self.n_chars, d_c),
            "word_emb": (self.n_words, d_w),
        }
        for n in range(1, self.max_word_len + 1):
            out[f"gate_W{n}"] = (n * d_c, n * d_c)
            out[f"gate_b{n}"] = (n * d_c,)
            out[f"comp_W{n}"] = (d_w, n * d_c)
            out[f"comp_b{n}"] = (d_w,)
        out.update(
            lstm_Wx=(4 * H, d_w),
            lstm_Wh=(4 * H, H),
            lstm_b=(4 * H,),
            pred_W=(d_w, H),
            pred_b=(d_w,),
            legal_u=(d_w,),
            h0=(H,),
            c0=(H,),
        )
        return out

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes().values())


class ModelParams(Mapping):
    """Every learned tensor of the scorer, keyed by name in canonical order."""

    def __init__(self, dims: Dims, tensors: dict[str, np.ndarray]):
        shapes = dims.shapes()
        if list(tensors) != list(shapes):
            tensors = {k: tensors[k] for k in shapes}
        for name, shape in shapes.items():
            arr = tensors[name]
            if arr.shape != shape:
                raise nc.DimensionError(f"{name}: expected {shape}, got {arr.shape}")
            if arr.dtype != np.float64:
                raise TypeError(f"{name}: expected float64, got {arr.dtype}")
        self.dims = dims
        self._t = tensors

    def __getitem__(self, name: str) -> np.ndarray:
        return self._t[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self) -> int:
        return len(self._t)

    def copy(self) -> ModelParams:
        return ModelParams(self.dims, {k: v.copy() for k, v in self._t.items()})

    def param_count(self) -> int:
        return sum(v.size for v in self._t.values())

    def equal(self, other: ModelParams) -> bool:
        return self.dims == other.dims and all(
            np.array_equal(self[k], other[k]) for k in self
        )


def init_params(dims: Dims, seed: int = 0, pretrained_chars: np.ndarray | None = None) -> ModelParams:
    """Glorot-uniform affine maps, small uniform embeddings, zero biases and states."""
    if min(dims.d_c, dims.d_w, dims.hidden, dims.max_word_len, dims.n_chars) < 1:
        raise ContractError(f"dimensions must be positive: {dims}")
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in dims.shapes().items():
        if name in ("char_emb", "word_emb"):
            bound = 0.5 / shape[1]
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        elif len(shape) == 2:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    if pretrained_chars is not None:
        if pretrained_chars.shape != tensors["char_emb"].shape:
            raise nc.DimensionError(
                f"pretrained matrix {pretrained_chars.shape} != {tensors['char_emb'].shape}"
            )
        tensors["char_emb"] = np.array(pretrained_chars, dtype=np.float64)
    return ModelParams(dims, tensors)


def max_word_len(params: Mapping[str, ArrayLike]) -> int:
    n = 0
    while f"comp_W{n + 1}" in params:
        n += 1
    return n


def lstm_params(params: Mapping[str, ArrayLike]) -> LstmParams:
    return LstmParams(params["lstm_Wx"], params["lstm_Wh"], params["lstm_b"])


# ------------------------------------------------------------ word vectors


def compose_batch(params: Mapping[str, ArrayLike], char_ids: np.ndarray) -> ArrayLike:
    """Compose ``m`` words of equal length ``l`` given as an ``m x l`` id matrix."""
    char_ids = np.asarray(char_ids, dtype=np.intp)
    m, length = char_ids.shape
    if not 1 <= length <= max_word_len(params):
        raise ContractError(f"word length {length} outside 1..{max_word_len(params)}")
    E = params["char_emb"]
    d_c = nc.value(E).shape[1]
    x = nc.reshape(nc.gather(E, char_ids.reshape(-1)), (m, length * d_c))
    gates = nc.sigmoid(nc.affine(params[f"gate_W{length}"], x, params[f"gate_b{length}"]))
    return nc.tanh(nc.affine(params[f"comp_W{length}"], nc.hadamard(gates, x), params[f"comp_b{length}"]))


def compose_word(params: Mapping[str, ArrayLike], char_ids: Sequence[int]) -> ArrayLike:
    """Gated character composition of a single word, a vector of size d_w."""
    ids = np.asarray(char_ids, dtype=np.intp)
    if ids.ndim != 1 or not len(ids):
        raise ContractError("compose_word needs a non-empty id sequence")
    return nc.row(compose_batch(params, ids[None, :]), 0)


def word_repr(
    params: Mapping[str, ArrayLike], char_ids: Sequence[int], word: str, shortlist: ShortList
) -> ArrayLike:
    comp = compose_word(params, char_ids)
    wid = shortlist.get(word)
    if wid is None:
        return comp
    return nc.scale(nc.add(comp, nc.row(params["word_emb"], wid)), 0.5)


def word_matrix(
    params: Mapping[str, ArrayLike],
    ids: np.ndarray,
    text: str,
    spans: Sequence[tuple[int, int]],
    shortlist: ShortList,
) -> ArrayLike:
    """Word vectors for the given ``(start, end)`` spans, one row per span.

    Spans are composed in one batch per word length; this agrees with calling
    :func:`word_repr` per span up to floating-point rounding.
    """
    by_len: dict[int, list[int]] = {}
    for i, (s, e) in enumerate(spans):
        by_len.setdefault(e - s, []).append(i)
    blocks, order = [], []
    for length in sorted(by_len):
        members = by_len[length]
        starts = np.array([spans[i][0] for i in members], dtype=np.intp)
        block = compose_batch(params, ids[starts[:, None] + np.arange(length)])
        sl_rows, sl_ids = [], []
        for r, i in enumerate(members):
            wid = shortlist.get(text[spans[i][0] : spans[i][1]])
            if wid is not None:
                sl_rows.append(r)
                sl_ids.append(wid)
        if sl_rows:
            avg = nc.scale(nc.add(nc.gather(block, sl_rows), nc.gather(params["word_emb"], sl_ids)), 0.5)
            in_sl = set(sl_rows)
            keep = [r for r in range(len(members)) if r not in in_sl]
            parts = [avg] if not keep else [nc.gather(block, keep), avg]
            block = parts[0] if len(parts) == 1 else nc.vstack(parts)
            members = [members[r] for r in keep] + [members[r] for r in sl_rows]
        blocks.append(block)
        order.extend(members)
    allw = blocks[0] if len(blocks) == 1 else nc.vstack(blocks)
    if order == list(range(len(order))):
        return allw
    inverse = np.empty(len(order), dtype=np.intp)
    inverse[np.asarray(order)] = np.arange(len(order))
    return nc.gather(allw, inverse)


# ------------------------------------------------------------ linking / scoring


@dataclass(frozen=True)
class StepState:
    h: ArrayLike
    c: ArrayLike
    prediction: ArrayLike
    words_consumed: int = 0


def init_decoder_state(params: Mapping[str, ArrayLike]) -> StepState:
    h0, c0 = params["h0"], params["c0"]
    pred = nc.tanh(nc.affine(params["pred_W"], h0, params["pred_b"]))
    return StepState(h0, c0, pred, 0)


def advance(params: Mapping[str, ArrayLike], state: StepState, word_vec: ArrayLike) -> StepState:
    h, c = nc.lstm_step(lstm_params(params), word_vec, state.h, state.c)
    pred = nc.tanh(nc.affine(params["pred_W"], h, params["pred_b"]))
    return StepState(h, c, pred, state.words_consumed + 1)


def step_score(state: StepState, word_vec: ArrayLike, params: Mapping[str, ArrayLike]) -> ArrayLike:
    return nc.dot(nc.add(params["legal_u"], state.prediction), word_vec)


def spans_of(lengths: Sequence[int]) -> list[tuple[int, int]]:
    out, pos = [], 0
    for length in lengths:
        out.append((pos, pos + length))
        pos += length
    return out


def score_sequence(
    params: Mapping[str, ArrayLike],
    ids: np.ndarray,
    text: str,
    lengths: Sequence[int],
    shortlist: ShortList,
    upto: int | None = None,
) -> ArrayLike:
    """Score of a segmentation given as word lengths.

    ``lengths`` must partition the sentence, or its first ``upto`` characters
    when scoring a prefix.
    """
    n = len(text) if upto is None else upto
    check_partition(lengths, n)
    if len(ids) != len(text):
        raise ContractError("character ids and text differ in length")
    L = max_word_len(params)
    if any(length > L for length in lengths):
        raise ContractError(f"segmentation has a word longer than {L}")
    if not lengths:
        return np.asarray(0.0)
    words = word_matrix(params, ids, text, spans_of(lengths), shortlist)
    m = len(lengths)
    states = nc.lstm_sequence(lstm_params(params), words, params["h0"], params["c0"])
    # row i holds the state before word i; the final state predicts nothing
    before = nc.gather(states, np.arange(m))
    preds = nc.tanh(nc.affine(params["pred_W"], before, params["pred_b"]))
    return nc.total(nc.hadamard(nc.add(preds, params["legal_u"]), words))
