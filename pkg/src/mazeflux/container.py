"""Versioned binary container for datasets and checkpoints.

Layout (all integers little-endian):

    8 bytes   magic  b"MZFXBIN\\n"
    4 bytes   u32 format version
    16 bytes  kind tag, ascii, NUL-padded ("dataset", "checkpoint", ...)
    8 bytes   u64 header length
    N bytes   header JSON (canonical: sorted keys, compact separators)
    ...       array payload, concatenated in manifest order
    32 bytes  sha256 over everything above

The header carries arbitrary JSON metadata plus an array manifest
(name/dtype/shape).  Arrays are stored little-endian, so files are
platform-independent, and the canonical JSON makes re-serialization of an
unmodified container byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np

from .errors import (
    DatasetChecksumError,
    DatasetError,
    DatasetTruncatedError,
    DatasetVersionError,
)

MAGIC = b"MZFXBIN\n"
FORMAT_VERSION = 1
_KIND_BYTES = 16
_HASH_BYTES = 32

_ALLOWED_DTYPES = {"<f8", "<i8"}


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def atomic_write_bytes(path, blob: bytes) -> None:
    """Write a file via temp-and-rename so readers never see partial output."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_container(path, kind: str, meta: dict, arrays: dict) -> None:
    """Serialize metadata plus named arrays to `path` atomically."""
    manifest = []
    payload = bytearray()
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
        if dtype not in _ALLOWED_DTYPES:
            raise DatasetError(f"unsupported array dtype for {name!r}: {arr.dtype}")
        data = np.ascontiguousarray(arr, dtype=dtype)
        manifest.append({"name": name, "dtype": dtype, "shape": list(arr.shape)})
        payload += data.tobytes()

    header = _canonical_json({"meta": meta, "arrays": manifest})
    kind_tag = kind.encode("ascii")
    if len(kind_tag) > _KIND_BYTES:
        raise DatasetError(f"kind tag too long: {kind!r}")
    blob = bytearray()
    blob += MAGIC
    blob += FORMAT_VERSION.to_bytes(4, "little")
    blob += kind_tag.ljust(_KIND_BYTES, b"\0")
    blob += len(header).to_bytes(8, "little")
    blob += header
    blob += payload
    blob += hashlib.sha256(blob).digest()
    atomic_write_bytes(path, bytes(blob))


def read_container(path, expected_kind: str | None = None):
    """Read a container; returns (kind, meta, arrays) with arrays writable.

    Raises DatasetVersionError / DatasetTruncatedError / DatasetChecksumError
    for the corresponding corruption modes, DatasetError otherwise.
    """
    with open(path, "rb") as fh:
        blob = fh.read()

    fixed = len(MAGIC) + 4 + _KIND_BYTES + 8
    if len(blob) < fixed + _HASH_BYTES:
        raise DatasetTruncatedError(f"{path}: file shorter than fixed header")
    if blob[: len(MAGIC)] != MAGIC:
        raise DatasetError(f"{path}: not a mazeflux container (bad magic)")
    version = int.from_bytes(blob[len(MAGIC): len(MAGIC) + 4], "little")
    if version != FORMAT_VERSION:
        raise DatasetVersionError(
            f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    off = len(MAGIC) + 4
    kind = blob[off: off + _KIND_BYTES].rstrip(b"\0").decode("ascii")
    off += _KIND_BYTES
    header_len = int.from_bytes(blob[off: off + 8], "little")
    off += 8
    if len(blob) < off + header_len + _HASH_BYTES:
        raise DatasetTruncatedError(f"{path}: header extends past end of file")

    stored_hash = blob[-_HASH_BYTES:]
    actual_hash = hashlib.sha256(blob[:-_HASH_BYTES]).digest()

    try:
        header = json.loads(blob[off: off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        if stored_hash != actual_hash:
            raise DatasetChecksumError(f"{path}: checksum mismatch") from exc
        raise DatasetError(f"{path}: malformed header JSON") from exc
    off += header_len

    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * dtype.itemsize
        if off + nbytes > len(blob) - _HASH_BYTES:
            raise DatasetTruncatedError(f"{path}: array {entry['name']!r} truncated")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off).reshape(shape)
        arrays[entry["name"]] = arr.copy()
        off += nbytes

    if off != len(blob) - _HASH_BYTES:
        raise DatasetChecksumError(f"{path}: trailing bytes after payload")
    if stored_hash != actual_hash:
        raise DatasetChecksumError(f"{path}: checksum mismatch")
    if expected_kind is not None and kind != expected_kind:
        raise DatasetError(f"{path}: expected kind {expected_kind!r}, found {kind!r}")
    return kind, header["meta"], arrays
