"""Versioned binary model files.

Layout (all integers little-endian)::

    magic       8 bytes   b"GRDYSEG\\0"
    version     u32
    meta_len    u64
    checksum    32 bytes  SHA-256 of metadata + payload
    metadata    meta_len bytes of UTF-8 JSON (sorted keys, compact)
    payload     float64 LE tensors, concatenated in metadata["tensors"] order

The metadata carries dims, vocabulary, short list, config and provenance, so
a model file is self-describing.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CharVocab, ShortList
from .numcore import LSTM_GATE_ORDER
from .scorer import Dims, ModelParams
from .search import Segmenter

MAGIC = b"GRDYSEG\x00"
VERSION = 1
_HEADER = struct.Struct("<8sIQ32s")


class ModelFormatError(ValueError):
    """Not a model file, or written by an incompatible format version."""


class ModelIntegrityError(ModelFormatError):
    """Truncated or corrupted model file."""


@dataclass
class LoadedModel:
    segmenter: Segmenter
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def params(self) -> ModelParams:
        return self.segmenter.params


def _metadata(seg: Segmenter, config: dict, provenance: dict) -> dict:
    params: ModelParams = seg.params
    d = params.dims
    return {
        "format": "greedyseg-model",
        "dims": {
            "n_chars": d.n_chars,
            "n_words": d.n_words,
            "d_c": d.d_c,
            "d_w": d.d_w,
            "hidden": d.hidden,
            "max_word_len": d.max_word_len,
        },
        "lstm_gate_order": list(LSTM_GATE_ORDER),
        "tensors": [[name, list(arr.shape)] for name, arr in params.items()],
        "vocab": {
            "chars": list(seg.vocab.chars),
            "freq": list(seg.vocab.freq),
            "unk_threshold": seg.vocab.unk_threshold,
        },
        "shortlist": {
            "words": list(seg.shortlist.words),
            "fraction": seg.shortlist.fraction,
            "iv_count": seg.shortlist.iv_count,
        },
        "normalize": seg.normalize,
        "config": config,
        "provenance": provenance,
    }


def _encode(meta: dict, params: ModelParams) -> bytes:
    meta_bytes = json.dumps(meta, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(params[name], dtype="<f8").tobytes() for name, _ in meta["tensors"])
    digest = hashlib.sha256(meta_bytes + payload).digest()
    return _HEADER.pack(MAGIC, VERSION, len(meta_bytes), digest) + meta_bytes + payload


def save_model(
    path: str | Path,
    segmenter: Segmenter,
    config: dict | None = None,
    provenance: dict | None = None,
) -> None:
    meta = _metadata(segmenter, config or {}, provenance or {})
    Path(path).write_bytes(_encode(meta, segmenter.params))


def dump_loaded(path: str | Path, model: LoadedModel) -> None:
    """Write a loaded model back out unchanged."""
    Path(path).write_bytes(_encode(model.meta, model.params))


def load_model(path: str | Path) -> LoadedModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{path}: too short to be a model file")
    magic, version, meta_len, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: bad magic bytes")
    if version != VERSION:
        raise ModelFormatError(f"{path}: format version {version}, this build reads version {VERSION}")
    meta_end = _HEADER.size + meta_len
    if len(data) < meta_end:
        raise ModelIntegrityError(f"{path}: truncated metadata")
    try:
        meta = json.loads(data[_HEADER.size : meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelIntegrityError(f"{path}: unreadable metadata ({exc})") from None
    sizes = [int(np.prod(shape)) for _, shape in meta["tensors"]]
    expected = meta_end + 8 * sum(sizes)
    if len(data) != expected:
        raise ModelIntegrityError(f"{path}: payload is {len(data) - meta_end} bytes, expected {expected - meta_end}")
    if hashlib.sha256(data[_HEADER.size :]).digest() != digest:
        raise ModelIntegrityError(f"{path}: checksum mismatch")

    tensors, offset = {}, meta_end
    for (name, shape), size in zip(meta["tensors"], sizes):
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=offset).astype(np.float64)
        tensors[name] = arr.reshape(shape)
        offset += 8 * size
    params = ModelParams(Dims(**meta["dims"]), tensors)
    v, s = meta["vocab"], meta["shortlist"]
    vocab = CharVocab(tuple(v["chars"]), tuple(v["freq"]), v["unk_threshold"])
    shortlist = ShortList(tuple(s["words"]), s["fraction"], s["iv_count"])
    seg = Segmenter(params, vocab, shortlist, meta["normalize"])
    return LoadedModel(seg, meta["config"], meta["provenance"], meta)
