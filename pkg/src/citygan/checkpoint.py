"""Versioned binary container used for checkpoints.

Layout: 8-byte magic, u32 format version, u64 header length, JSON header,
raw tensor payload (little-endian), trailing sha256 digest of everything
before it. The header carries arbitrary metadata plus a tensor table of
(name, dtype, shape, offset) entries pointing into the payload.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CGANCKPT"
FORMAT_VERSION = 1
DIGEST_BYTES = 32

_DTYPE_TAGS = {"f32": "<f4", "f64": "<f8", "i64": "<i8", "u8": "|u1"}
_TAG_FOR_KIND = {np.dtype("<f4"): "f32", np.dtype("<f8"): "f64",
                 np.dtype("<i8"): "i64", np.dtype("|u1"): "u8"}


class CheckpointError(Exception):
    pass


class CheckpointCorruptError(CheckpointError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class CheckpointVersionError(CheckpointError):
    def __init__(self, found, supported):
        super().__init__(
            f"checkpoint format version {found} is not supported (this build reads version {supported})"
        )
        self.found = found
        self.supported = supported


def write_container(path, meta, tensors):
    """Write metadata plus named arrays; returns the hex integrity digest.

    Arrays are stored little-endian; supported dtypes are float32, float64,
    int64 and uint8.
    """
    table = []
    payload = bytearray()
    for name in sorted(tensors):
        # not ascontiguousarray: that would promote 0-dim arrays to shape (1,)
        arr = np.asarray(tensors[name])
        if not arr.flags["C_CONTIGUOUS"]:
            arr = arr.copy(order="C")
        tag = _TAG_FOR_KIND.get(arr.dtype.newbyteorder("<"))
        if tag is None:
            raise CheckpointError(f"unsupported tensor dtype {arr.dtype} for {name!r}")
        arr = arr.astype(_DTYPE_TAGS[tag], copy=False)
        table.append({"name": name, "dtype": tag, "shape": list(arr.shape),
                      "offset": len(payload)})
        payload += arr.tobytes()

    header = dict(meta)
    header["tensors"] = table
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    blob += struct.pack("<Q", len(header_bytes))
    blob += header_bytes
    blob += payload
    digest = hashlib.sha256(bytes(blob)).digest()
    blob += digest
    Path(path).write_bytes(bytes(blob))
    return digest.hex()


def read_container(path):
    """Read a container back as (meta, {name: array}, hex digest).

    Raises CheckpointCorruptError (with the failing byte offset) on
    truncation or digest mismatch, CheckpointVersionError on a version this
    build does not read.
    """
    data = Path(path).read_bytes()
    fixed = len(MAGIC) + 4 + 8
    if len(data) < fixed + DIGEST_BYTES:
        raise CheckpointCorruptError("checkpoint truncated", len(data))
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointCorruptError("bad magic header", 0)
    version = struct.unpack_from("<I", data, len(MAGIC))[0]
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(version, FORMAT_VERSION)
    header_len = struct.unpack_from("<Q", data, len(MAGIC) + 4)[0]
    body_end = fixed + header_len
    if body_end + DIGEST_BYTES > len(data):
        raise CheckpointCorruptError("checkpoint header truncated", len(data))

    stored = data[-DIGEST_BYTES:]
    computed = hashlib.sha256(data[:-DIGEST_BYTES]).digest()
    if stored != computed:
        raise CheckpointCorruptError(
            "integrity digest mismatch", len(data) - DIGEST_BYTES
        )

    try:
        meta = json.loads(data[fixed:body_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"unparseable header: {exc}", fixed) from exc
    payload = data[body_end:-DIGEST_BYTES]

    tensors = {}
    for entry in meta.pop("tensors", []):
        dtype = np.dtype(_DTYPE_TAGS[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        start = entry["offset"]
        end = start + count * dtype.itemsize
        if end > len(payload):
            raise CheckpointCorruptError(
                f"tensor {entry['name']!r} overruns payload", body_end + start
            )
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return meta, tensors, computed.hex()
