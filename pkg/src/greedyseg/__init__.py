"""Greedy neural word segmentation with gated character composition."""

from .corpus import (
    CharVocab,
    Corpus,
    Sentence,
    ShortList,
    build_char_vocab,
    build_short_list,
    load_segmented_corpus,
    split_dev,
)
from .evalseg import SegMetrics, evaluate_corpus, prf
from .modelfile import load_model, save_model
from .scorer import Dims, ModelParams, init_params, score_sequence
from .search import Segmenter, decode, exact_decode
from .training import TrainConfig, train

__all__ = [
    "CharVocab",
    "Corpus",
    "Dims",
    "ModelParams",
    "SegMetrics",
    "Segmenter",
    "Sentence",
    "ShortList",
    "TrainConfig",
    "build_char_vocab",
    "build_short_list",
    "decode",
    "evaluate_corpus",
    "exact_decode",
    "init_params",
    "load_model",
    "load_segmented_corpus",
    "prf",
    "save_model",
    "score_sequence",
    "split_dev",
    "train",
]

__version__ = "0.1.0"
