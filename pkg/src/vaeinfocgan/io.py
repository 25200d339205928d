"""Persistence: the BTNS tensor container, JSON documents, hashing, PNG output.

BTNS layout: ``b"BTNS"``, version byte, dtype byte (1=float32, 2=uint32,
3=uint8), ndim byte, ``ndim`` little-endian uint32 dims, row-major payload.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BTNS"
VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<u4"): 2, np.dtype("u1"): 3}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}


class FormatError(ValueError):
    """Raised for malformed or corrupt artifacts."""


def encode_tensor(arr) -> bytes:
    a = np.asarray(arr)
    dt = a.dtype.newbyteorder("<") if a.dtype.byteorder == ">" else a.dtype
    code = DTYPE_CODES.get(np.dtype(dt))
    if code is None:
        raise FormatError(f"dtype {a.dtype} not representable in BTNS")
    if a.ndim > 255:
        raise FormatError("too many dimensions")
    head = MAGIC + bytes([VERSION, code, a.ndim]) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + np.ascontiguousarray(a, dtype=CODE_DTYPES[code]).tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 7 or buf[:4] != MAGIC:
        raise FormatError("not a BTNS tensor")
    version, code, ndim = buf[4], buf[5], buf[6]
    if version != VERSION:
        raise FormatError(f"unsupported BTNS version {version}")
    if code not in CODE_DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    off = 7 + 4 * ndim
    if len(buf) < off:
        raise FormatError("truncated header")
    shape = struct.unpack(f"<{ndim}I", buf[7:off])
    dt = CODE_DTYPES[code]
    expect = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(buf) - off != expect:
        raise FormatError(f"payload is {len(buf) - off} bytes, expected {expect}")
    return np.frombuffer(buf, dtype=dt, offset=off).reshape(shape).copy()


def write_tensor(path, arr) -> str:
    """Write ``arr`` and return the sha256 of the file contents."""
    data = encode_tensor(arr)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from None


def dumps_row(row: dict) -> str:
    return json.dumps(row, sort_keys=True) + "\n"


def append_jsonl(path, row: dict) -> None:
    with open(path, "a") as fh:
        fh.write(dumps_row(row))


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_jsonl_gz(path, rows) -> None:
    # no mtime or file name in the header keeps the archive byte-stable
    with open(path, "wb") as raw, gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as fh:
        for row in rows:
            fh.write((json.dumps(row, sort_keys=True) + "\n").encode())


def read_jsonl_gz(path) -> list[dict]:
    with gzip.open(path, "rt") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_png(path, img: np.ndarray) -> None:
    from PIL import Image

    # no timestamps or text chunks, so output is byte-stable
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path, format="PNG", optimize=False)


def ensure_fresh_dir(path) -> Path:
    p = Path(path)
    if p.exists() and any(p.iterdir()):
        raise FileExistsError(f"output directory {p} is not empty")
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise PermissionError(f"output directory {p} is not writable")
    return p


def tree_hashes(root) -> dict[str, str]:
    """sha256 of every file under ``root``, keyed by relative posix path."""
    root = Path(root)
    return {p.relative_to(root).as_posix(): file_sha256(p)
            for p in sorted(root.rglob("*")) if p.is_file()}
