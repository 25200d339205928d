import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from vaeinfocgan import io


def test_btns_bytes_by_hand():
    a = np.array([[1, 2, 3], [4, 5, 6]], dtype=np.uint32)
    expect = b"BTNS" + bytes([1, 2, 2]) + struct.pack("<II", 2, 3) + struct.pack("<6I", 1, 2, 3, 4, 5, 6)
    assert io.encode_tensor(a) == expect


def test_btns_float_and_uint8_codes():
    assert io.encode_tensor(np.zeros(1, np.float32))[5] == 1
    assert io.encode_tensor(np.zeros(1, np.uint8))[5] == 3


def test_btns_big_endian_input_is_normalized():
    a = np.arange(4, dtype=">f4")
    assert io.encode_tensor(a) == io.encode_tensor(a.astype("<f4"))


def test_btns_scalar_roundtrip():
    out = io.decode_tensor(io.encode_tensor(np.float32(2.5)))
    assert out.shape == () and out == 2.5


@pytest.mark.parametrize("dtype", [np.float64, np.int32, np.int64])
def test_btns_rejects_other_dtypes(dtype):
    with pytest.raises(io.FormatError):
        io.encode_tensor(np.zeros(2, dtype))


@pytest.mark.parametrize("mutate", [
    lambda b: b"XTNS" + b[4:],
    lambda b: b[:4] + bytes([2]) + b[5:],
    lambda b: b[:5] + bytes([9]) + b[6:],
    lambda b: b[:-1],
    lambda b: b + b"\0",
    lambda b: b[:8],
])
def test_btns_corruption_detected(mutate):
    good = io.encode_tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    with pytest.raises(io.FormatError):
        io.decode_tensor(mutate(good))


@settings(max_examples=60, deadline=None)
@given(arrays(st.sampled_from([np.float32, np.uint32, np.uint8]),
              array_shapes(min_dims=0, max_dims=4, min_side=0, max_side=5)))
def test_btns_roundtrip_property(a):
    b = io.decode_tensor(io.encode_tensor(a))
    assert b.shape == a.shape and b.dtype == a.dtype.newbyteorder("<")
    assert b.tobytes() == np.ascontiguousarray(a).tobytes()


def test_write_tensor_returns_file_hash(tmp_path):
    digest = io.write_tensor(tmp_path / "a.btns", np.ones((2, 2), np.uint8))
    assert digest == io.file_sha256(tmp_path / "a.btns")
    assert np.array_equal(io.read_tensor(tmp_path / "a.btns"), np.ones((2, 2)))


def test_json_helpers(tmp_path):
    io.write_json(tmp_path / "a.json", {"b": 1, "a": [1, 2]})
    assert (tmp_path / "a.json").read_text().index('"a"') < (tmp_path / "a.json").read_text().index('"b"')
    assert io.read_json(tmp_path / "a.json") == {"a": [1, 2], "b": 1}
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(io.FormatError):
        io.read_json(tmp_path / "bad.json")


def test_jsonl_roundtrips(tmp_path):
    rows = [{"x": i, "y": [i, i]} for i in range(3)]
    for r in rows:
        io.append_jsonl(tmp_path / "t.jsonl", r)
    assert io.read_jsonl(tmp_path / "t.jsonl") == rows
    io.write_jsonl_gz(tmp_path / "a.gz", rows)
    io.write_jsonl_gz(tmp_path / "b.gz", rows)
    assert io.read_jsonl_gz(tmp_path / "a.gz") == rows
    assert (tmp_path / "a.gz").read_bytes() == (tmp_path / "b.gz").read_bytes()


def test_png_is_byte_stable(tmp_path):
    img = (np.arange(64).reshape(8, 8) * 4).astype(np.uint8)
    io.write_png(tmp_path / "a.png", img)
    io.write_png(tmp_path / "b.png", img)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    from PIL import Image
    assert np.array_equal(np.asarray(Image.open(tmp_path / "a.png")), img)


def test_ensure_fresh_dir(tmp_path):
    p = io.ensure_fresh_dir(tmp_path / "new")
    assert p.is_dir()
    (p / "f").write_text("x")
    with pytest.raises(FileExistsError):
        io.ensure_fresh_dir(p)


def test_tree_hashes(tmp_path):
    (tmp_path / "d").mkdir()
    (tmp_path / "d" / "f").write_bytes(b"abc")
    h = io.tree_hashes(tmp_path)
    assert h == {"d/f": "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"}
