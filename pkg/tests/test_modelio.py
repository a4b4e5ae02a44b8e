import struct
import zlib

import numpy as np
import pytest

from stylo.modelio import (
    BadMagicError,
    ChecksumError,
    ModelFileError,
    TruncatedFileError,
    VersionMismatchError,
    export_text,
    load_model,
    model_bytes,
    model_from_bytes,
    read_text,
    save_model,
)


def _same(a, b):
    for x, y in ((a.w_in, b.w_in), (a.w_out, b.w_out), (a.w_doc, b.w_doc)):
        assert x.dtype == y.dtype and x.tobytes() == y.tobytes()
    assert a.doc_keys == b.doc_keys
    assert a.vocab.id_to_word == b.vocab.id_to_word
    assert a.vocab.counts.tolist() == b.vocab.counts.tolist()
    assert a.vocab.min_count == b.vocab.min_count
    assert a.config == b.config


def test_round_trip_bit_exact(small_model, tmp_path):
    path = tmp_path / "m.bin"
    save_model(small_model, path)
    loaded = load_model(path)
    _same(small_model, loaded)
    assert model_bytes(loaded) == path.read_bytes()


def test_header_layout(small_model):
    data = model_bytes(small_model)
    assert data[:4] == b"PVDM"
    assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])


@pytest.mark.parametrize("cut", [0, 3, 7, 20, -5, -1])
def test_truncated(small_model, cut):
    data = model_bytes(small_model)
    with pytest.raises(TruncatedFileError):
        model_from_bytes(data[:cut])


def test_every_truncation_is_rejected(small_model):
    data = model_bytes(small_model)
    for cut in range(0, len(data), max(1, len(data) // 97)):
        with pytest.raises(ModelFileError):
            model_from_bytes(data[:cut])


def test_flipped_byte_fails_checksum(small_model):
    data = bytearray(model_bytes(small_model))
    data[len(data) // 2] ^= 0x40
    with pytest.raises(ChecksumError):
        model_from_bytes(bytes(data))


def test_version_mismatch(small_model):
    data = bytearray(model_bytes(small_model))
    data[4:8] = struct.pack("<I", 999)
    with pytest.raises(VersionMismatchError):
        model_from_bytes(bytes(data))


def test_bad_magic(small_model):
    with pytest.raises(BadMagicError):
        model_from_bytes(b"NOPE" + model_bytes(small_model)[4:])


def test_trailing_garbage(small_model):
    with pytest.raises(ModelFileError):
        model_from_bytes(model_bytes(small_model) + b"\0")


class TestTextExport:
    def test_lines_and_round_trip(self, small_model, tmp_path):
        path = tmp_path / "docs.txt"
        n = export_text(small_model.doc_keys, small_model.w_doc, path)
        lines = path.read_text().splitlines()
        assert n == len(lines) == len(small_model.doc_keys) + 1
        assert lines[0] == f"{len(small_model.doc_keys)} 16"
        keys, vecs = read_text(path)
        assert keys == small_model.doc_keys
        assert vecs.tobytes() == small_model.w_doc.tobytes()

    def test_float64_full_precision(self, tmp_path):
        v = np.array([[0.1, 1 / 3, -2.5e-300]])
        export_text(["k"], v, tmp_path / "x.txt")
        _, back = read_text(tmp_path / "x.txt", dtype=np.float64)
        assert back.tobytes() == v.tobytes()

    def test_whitespace_key_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_text(["a b"], np.zeros((1, 2), dtype=np.float32), tmp_path / "x.txt")
        assert not (tmp_path / "x.txt").exists()
