import numpy as np
import pytest

from clamlab.checkpoint import canonical_json, load_checkpoint, save_checkpoint
from clamlab.errors import (BadMagicError, TruncatedFileError,
                            VersionMismatchError)


def _tensors():
    rng = np.random.default_rng(0)
    return {
        "enc.w": rng.standard_normal((4, 3)).astype(np.float32),
        "enc.b": np.zeros(3, np.float32),
        "head.w": rng.standard_normal((3, 2, 2)).astype(np.float32),
    }


def test_round_trip(tmp_path):
    meta = {"kind": "demo", "nested": {"a": 1, "b": [1, 2]}}
    p = tmp_path / "m.ckpt"
    save_checkpoint(p, meta, _tensors())
    got_meta, got = load_checkpoint(p)
    assert got_meta == meta
    assert list(got) == list(_tensors())  # insertion order preserved
    for k, v in _tensors().items():
        np.testing.assert_array_equal(got[k], v)
        assert got[k].dtype == np.float32


def test_save_load_save_is_byte_identical(tmp_path):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, {"v": 1}, _tensors())
    meta, tensors = load_checkpoint(p1)
    save_checkpoint(p2, meta, tensors)
    assert p1.read_bytes() == p2.read_bytes()


def test_canonical_json_sorts_keys():
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


def test_bad_magic(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_bytes(b"WRONGMAG" + b"\x00" * 16)
    with pytest.raises(BadMagicError):
        load_checkpoint(p)


def test_version_mismatch(tmp_path):
    p = tmp_path / "x.ckpt"
    save_checkpoint(p, {}, {"w": np.zeros(2, np.float32)})
    blob = bytearray(p.read_bytes())
    blob[8] = 2
    p.write_bytes(bytes(blob))
    with pytest.raises(VersionMismatchError):
        load_checkpoint(p)


def test_truncation_mid_tensor(tmp_path):
    p = tmp_path / "x.ckpt"
    save_checkpoint(p, {}, {"w": np.ones((8, 8), np.float32)})
    blob = p.read_bytes()
    p.write_bytes(blob[:len(blob) - 16])
    with pytest.raises(TruncatedFileError):
        load_checkpoint(p)


def test_trailing_bytes_rejected(tmp_path):
    p = tmp_path / "x.ckpt"
    save_checkpoint(p, {}, {"w": np.zeros(2, np.float32)})
    p.write_bytes(p.read_bytes() + b"junk")
    with pytest.raises(TruncatedFileError):
        load_checkpoint(p)


def test_float64_input_is_stored_as_float32(tmp_path):
    p = tmp_path / "x.ckpt"
    save_checkpoint(p, {}, {"w": np.full(3, 0.1, np.float64)})
    _, got = load_checkpoint(p)
    assert got["w"].dtype == np.float32
    np.testing.assert_allclose(got["w"], np.float32(0.1))
