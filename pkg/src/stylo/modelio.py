"""Binary model files and the plain-text embedding format.

Binary layout, little-endian throughout::

    b"PVDM" | u32 version | u32 len + JSON config
    | u32 min_count | u32 n_words | n_words * (u32 len + utf-8 word, u64 count)
    | u32 n_docs | n_docs * (u32 len + utf-8 key)
    | 3 * (u32 rows, u32 cols, rows*cols f32)   # w_in, w_out, w_doc
    | u32 crc32 of everything before it
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

from .pvdm import Model, TrainConfig
from .vocab import Vocabulary

MAGIC = b"PVDM"
FORMAT_VERSION = 1


class ModelFileError(Exception):
    code = "model_file"


class BadMagicError(ModelFileError):
    code = "model_bad_magic"


class VersionMismatchError(ModelFileError):
    code = "model_version_mismatch"


class TruncatedFileError(ModelFileError):
    code = "model_truncated"


class ChecksumError(ModelFileError):
    code = "model_checksum"


def _str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _matrix(m: np.ndarray) -> bytes:
    rows, cols = m.shape
    return struct.pack("<II", rows, cols) + np.ascontiguousarray(m, dtype="<f4").tobytes()


def model_bytes(model: Model) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    parts.append(_str(json.dumps(model.config.to_dict(), sort_keys=True)))
    vocab = model.vocab
    parts.append(struct.pack("<II", vocab.min_count, len(vocab)))
    for word, count in zip(vocab.id_to_word, vocab.counts):
        parts.append(_str(word) + struct.pack("<Q", int(count)))
    parts.append(struct.pack("<I", len(model.doc_keys)))
    parts.extend(_str(k) for k in model.doc_keys)
    for m in (model.w_in, model.w_out, model.w_doc):
        parts.append(_matrix(m))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model: Model, path: str | Path) -> None:
    data = model_bytes(model)
    tmp = Path(f"{path}.tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes, end: int):
        self.data = data
        self.pos = 0
        self.end = end

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise TruncatedFileError(f"model file truncated at byte {self.pos} (needed {n} more)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def matrix(self) -> np.ndarray:
        rows, cols = self.u32(), self.u32()
        return np.frombuffer(self.take(rows * cols * 4), dtype="<f4").reshape(rows, cols).astype(np.float32)


def model_from_bytes(data: bytes) -> Model:
    if len(data) < 8:
        raise TruncatedFileError("model file shorter than its header")
    if data[:4] != MAGIC:
        raise BadMagicError("not a PVDM model file")
    version = struct.unpack("<I", data[4:8])[0]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"model format version {version}, expected {FORMAT_VERSION}")
    r = _Reader(data, max(8, len(data) - 4))
    r.pos = 8
    try:
        config = TrainConfig.from_dict(json.loads(r.string()))
        min_count, n_words = r.u32(), r.u32()
        words, counts = [], []
        for _ in range(n_words):
            words.append(r.string())
            counts.append(r.u64())
        doc_keys = [r.string() for _ in range(r.u32())]
        w_in, w_out, w_doc = r.matrix(), r.matrix(), r.matrix()
    except UnicodeDecodeError as exc:
        raise ModelFileError(f"corrupt string block: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(f"corrupt model file: {exc}") from exc
    if len(data) - r.pos != 4:
        if len(data) - r.pos < 4:
            raise TruncatedFileError("model file is missing its checksum")
        raise ModelFileError(f"{len(data) - r.pos - 4} unexpected trailing bytes")
    (stored,) = struct.unpack("<I", data[-4:])
    if stored != zlib.crc32(data[:-4]):
        raise ChecksumError("model file checksum mismatch")
    arr = np.array(counts, dtype=np.int64)
    vocab = Vocabulary({w: i for i, w in enumerate(words)}, words, arr, int(arr.sum()), min_count)
    return Model(w_in, w_out, w_doc, doc_keys, vocab, config)


def load_model(path: str | Path) -> Model:
    return model_from_bytes(Path(path).read_bytes())


def export_text(keys: Sequence[str], vectors: np.ndarray, path: str | Path) -> int:
    """Write ``<rows> <dim>`` then one ``<key> v1 ... vD`` line per vector.

    Values use the shortest text that round-trips the stored float32.
    """
    vectors = np.asarray(vectors)
    if vectors.dtype != np.float32:
        vectors = vectors.astype(np.float64)
    for key in keys:
        if not key or any(ch.isspace() for ch in key):
            raise ValueError(f"key {key!r} cannot be written in the text format")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(keys)} {vectors.shape[1]}\n")
        for key, row in zip(keys, vectors):
            fh.write(key + " " + " ".join(str(v) for v in row) + "\n")
    return len(keys) + 1


def read_text(path: str | Path, dtype=np.float32) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        rows, dim = (int(x) for x in fh.readline().split())
        keys = []
        out = np.empty((rows, dim), dtype=dtype)
        for i in range(rows):
            parts = fh.readline().rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"line {i + 2}: expected {dim + 1} fields, got {len(parts)}")
            keys.append(parts[0])
            out[i] = [float(x) for x in parts[1:]]
    return keys, out
