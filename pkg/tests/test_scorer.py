import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greedyseg import numcore as nc
from greedyseg.corpus import ShortList
from greedyseg.numcore import ContractError
from greedyseg.scorer import (
    Dims,
    ModelParams,
    advance,
    compose_word,
    init_decoder_state,
    init_params,
    score_sequence,
    step_score,
    word_repr,
)

import oracles
from conftest import random_lengths, random_model, random_text

EMPTY = ShortList((), 0.0, 0)


def zero_model(d=4, n_chars=5, n_words=2):
    dims = Dims(n_chars, n_words, d, d, d, 4)
    return ModelParams(dims, {k: np.zeros(s) for k, s in dims.shapes().items()})


def test_compose_zero_params():
    P = zero_model()
    assert np.array_equal(compose_word(P, [1, 2, 3]), np.zeros(4))


def test_compose_closed_gate_gives_tanh_bias():
    P = zero_model()
    P["char_emb"][:] = 1.0
    P["gate_b1"][:] = -50.0
    P["comp_W1"][:] = 3.0
    P["comp_b1"][:] = [0.1, -0.2, 0.3, 2.0]
    np.testing.assert_allclose(compose_word(P, [2]), np.tanh(P["comp_b1"]), atol=1e-12)


def test_compose_matches_scalar_oracle():
    P = random_model(1).params
    ids = [1, 4, 2]
    np.testing.assert_allclose(compose_word(P, ids), oracles.compose(P, ids), rtol=0, atol=1e-12)


def test_compose_contract_errors():
    P = random_model(1).params
    with pytest.raises(ContractError):
        compose_word(P, [1, 2, 3, 4, 5])
    with pytest.raises(ContractError):
        compose_word(P, [99])


@settings(max_examples=40)
@given(st.integers(0, 1000), st.lists(st.integers(0, 8), min_size=1, max_size=4))
def test_compose_range(seed, ids):
    P = random_model(seed, scale=3.0).params
    out = compose_word(P, ids)
    assert np.all(np.abs(out) <= 1.0)


def test_word_repr_outside_short_list_is_composition():
    seg = random_model(2)
    ids = seg.vocab.encode("ABD")
    assert "ABD" not in seg.shortlist
    assert np.array_equal(word_repr(seg.params, ids, "ABD", seg.shortlist), compose_word(seg.params, ids))


def test_word_repr_averages_with_embedding():
    seg = random_model(2)
    word = seg.shortlist.words[0]
    ids = seg.vocab.encode(word)
    P = seg.params.copy()
    comp = compose_word(P, ids)
    P["word_emb"][seg.shortlist.get(word)] = comp
    np.testing.assert_allclose(word_repr(P, ids, word, seg.shortlist), comp, atol=1e-15)


def test_word_repr_arithmetic_mean():
    P = zero_model(d=4)
    # zero params compose to 0; put the composition at 0.2 through the bias
    P["comp_b1"][:] = np.arctanh(0.2)
    P["word_emb"][1] = 0.6
    sl = ShortList(("x", "y"), 1.0, 2)
    np.testing.assert_allclose(word_repr(P, [1], "y", sl), np.full(4, 0.4), atol=1e-12)


def test_init_decoder_state():
    P = zero_model()
    s = init_decoder_state(P)
    assert np.array_equal(s.prediction, np.zeros(4)) and s.words_consumed == 0
    R = random_model(3).params
    a, b = init_decoder_state(R), init_decoder_state(R)
    assert np.array_equal(a.prediction, b.prediction)
    assert np.all(np.abs(a.prediction) < 1.0)


def test_advance_zero_params():
    P = zero_model()
    s = advance(P, init_decoder_state(P), np.array([0.5, -1.0, 2.0, 0.1]))
    assert np.array_equal(s.prediction, np.zeros(4)) and s.words_consumed == 1


def test_advance_roll_forward_vs_scalar_oracle():
    P = random_model(4).params
    rng = np.random.default_rng(0)
    state = init_decoder_state(P)
    h, c = list(P["h0"]), list(P["c0"])
    for _ in range(3):
        w = rng.uniform(-1, 1, size=6)
        state = advance(P, state, w)
        h, c = oracles.lstm(P["lstm_Wx"], P["lstm_Wh"], P["lstm_b"], w, h, c)
        np.testing.assert_allclose(state.h, h, atol=1e-12)
        np.testing.assert_allclose(state.c, c, atol=1e-12)
        np.testing.assert_allclose(state.prediction, oracles.prediction(P, h), atol=1e-12)
    assert state.words_consumed == 3


def test_step_score_examples():
    P = zero_model(d=3)
    s = init_decoder_state(P)
    assert float(step_score(s, np.array([0.3, 0.5, -0.2]), P)) == 0.0
    P["legal_u"][:] = [1.0, 0.0, 0.0]
    assert float(step_score(s, np.array([0.3, 0.5, -0.2]), P)) == pytest.approx(0.3, abs=1e-15)
    R = random_model(5).params
    s = init_decoder_state(R)
    w = np.linspace(-1, 1, 6)
    expect = sum((u + p) * x for u, p, x in zip(R["legal_u"], s.prediction, w))
    assert abs(float(step_score(s, w, R)) - expect) < 1e-12
    with pytest.raises(nc.DimensionError):
        step_score(s, np.zeros(5), R)


def test_score_sequence_small_cases():
    seg = random_model(6)
    P = seg.params
    assert float(score_sequence(P, np.array([], dtype=int), "", (), seg.shortlist)) == 0.0
    text = "AB"
    ids = seg.vocab.encode(text)
    s0 = init_decoder_state(P)
    one = float(step_score(s0, word_repr(P, ids, text, seg.shortlist), P))
    assert abs(float(score_sequence(P, ids, text, (2,), seg.shortlist)) - one) < 1e-12


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_score_sequence_additivity(seed):
    seg = random_model(seed % 50)
    rng = np.random.default_rng(seed)
    text = random_text(rng, int(rng.integers(1, 15)))
    lengths = random_lengths(rng, len(text))
    ids = seg.vocab.encode(text)
    P, sl = seg.params, seg.shortlist
    state, acc, pos = init_decoder_state(P), 0.0, 0
    for length in lengths:
        w = word_repr(P, ids[pos : pos + length], text[pos : pos + length], sl)
        acc += float(step_score(state, w, P))
        state = advance(P, state, w)
        pos += length
    batch = float(score_sequence(P, ids, text, lengths, sl))
    assert abs(batch - acc) < 1e-9
    assert abs(batch - oracles.sentence_score(P, ids, text, lengths, sl)) < 1e-9


def test_score_sequence_contract_errors():
    seg = random_model(6)
    ids = seg.vocab.encode("ABCDEF")
    with pytest.raises(ContractError):
        score_sequence(seg.params, ids, "ABCDEF", (2, 2), seg.shortlist)
    with pytest.raises(ContractError):
        score_sequence(seg.params, ids, "ABCDEF", (5, 1), seg.shortlist)


def test_score_sequence_gradient():
    seg = random_model(8)
    rng = np.random.default_rng(8)
    text = random_text(rng, 9)
    lengths = random_lengths(rng, 9)
    ids = seg.vocab.encode(text)
    err = nc.grad_check(lambda P: score_sequence(P, ids, text, lengths, seg.shortlist), dict(seg.params))
    assert err < 1e-4


def test_init_params_deterministic_and_ranges():
    dims = Dims(30, 20)
    a, b = init_params(dims, 5), init_params(dims, 5)
    assert a.equal(b)
    assert not a.equal(init_params(dims, 6))
    assert (dims.d_c, dims.d_w, dims.hidden, dims.max_word_len) == (50, 50, 50, 4)
    assert np.abs(a["char_emb"]).max() <= 0.5 / 50
    bound = np.sqrt(6.0 / (50 + 200))
    assert np.abs(a["gate_W4"]).max() <= bound
    for name in ("gate_b1", "comp_b3", "lstm_b", "pred_b", "legal_u", "h0", "c0"):
        assert not a[name].any()


def test_param_count_closed_form():
    n_chars, n_words = 4700, 27000
    dims = Dims(n_chars, n_words)
    # gate + composition maps for l = 1..4 at d = 50
    per_length = sum((50 * l) ** 2 + 50 * l + 50 * 50 * l + 50 for l in range(1, 5))
    assert per_length == 100_700
    lstm = 200 * 50 + 200 * 50 + 200
    fixed = per_length + lstm + (50 * 50 + 50) + 50 + 2 * 50
    assert fixed == 123_600
    assert dims.param_count() == 50 * (n_chars + n_words) + 123_600
    assert init_params(Dims(7, 3, 6, 6, 6), 0).param_count() == Dims(7, 3, 6, 6, 6).param_count()


def test_pretrained_rows_overwrite():
    dims = Dims(3, 0, 2, 2, 2, 2)
    M = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(init_params(dims, 0, M)["char_emb"], M)


def test_no_update_gate_parameters():
    names = set(Dims(5, 5).shapes())
    expected = {"char_emb", "word_emb", "lstm_Wx", "lstm_Wh", "lstm_b", "pred_W", "pred_b", "legal_u", "h0", "c0"}
    expected |= {f"{k}{l}" for k in ("gate_W", "gate_b", "comp_W", "comp_b") for l in range(1, 5)}
    assert names == expected
