import struct

import numpy as np
import pytest

from lwplg.weights import MAGIC, WeightsFormatError, WeightStore, decode, encode, load_weights, save_weights


@pytest.fixture
def store(rng):
    s = WeightStore()
    s["a/weight"] = rng.standard_normal((3, 2, 1, 1)).astype(np.float32)
    s["a/bias"] = np.zeros(3, np.float32)
    s["b/ünï"] = rng.standard_normal((2, 2))
    s["scalar"] = np.array(1.5)
    return s


def test_round_trip_bit_exact(store, tmp_path):
    path = tmp_path / "w.lwpv"
    save_weights(store, path)
    back = load_weights(path)
    assert back.equal(store)
    assert [v.dtype for v in back.values()] == [v.dtype for v in store.values()]
    assert back.numel() == store.numel()


def test_layout_header(store):
    buf = encode(store)
    assert buf[:4] == MAGIC
    assert struct.unpack("<II", buf[4:12]) == (1, 4)
    (nlen,) = struct.unpack("<I", buf[12:16])
    assert buf[16:16 + nlen] == b"a/weight"
    assert buf[16 + nlen:18 + nlen] == bytes([0, 4])


def test_bad_magic(store):
    with pytest.raises(WeightsFormatError, match="magic"):
        decode(b"XXXX" + encode(store)[4:])


def test_version_mismatch(store):
    buf = bytearray(encode(store))
    buf[4:8] = struct.pack("<I", 2)
    with pytest.raises(WeightsFormatError, match="version"):
        decode(bytes(buf))


@pytest.mark.parametrize("cut", [3, 10, 20, -1])
def test_truncation(store, cut):
    with pytest.raises(WeightsFormatError, match="truncated"):
        decode(encode(store)[:cut])


def test_trailing_bytes(store):
    with pytest.raises(WeightsFormatError, match="trailing"):
        decode(encode(store) + b"\0")


def test_duplicate_names(store):
    with pytest.raises(WeightsFormatError, match="duplicate"):
        store["a/bias"] = np.ones(3)
    one = WeightStore()
    one["x"] = np.ones(2)
    body = encode(one)[12:]
    with pytest.raises(WeightsFormatError, match="duplicate"):
        decode(MAGIC + struct.pack("<II", 1, 2) + body + body)


def test_unsupported_dtype():
    s = WeightStore()
    s["i"] = np.arange(3)
    with pytest.raises(WeightsFormatError, match="dtype"):
        encode(s)
