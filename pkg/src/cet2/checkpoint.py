"""Deterministic checkpoint container: named tensors plus a JSON manifest.

Layout: 8-byte magic, u32 format version, u64 header length, UTF-8 JSON
header (sorted keys), raw little-endian tensor data in name order. Writing
the same tensors and manifest twice yields byte-identical files, which the
reproducibility guarantees depend on.
"""

import json
import struct

import numpy as np

MAGIC = b"CET2CKPT"
FORMAT_VERSION = 1

_DTYPES = {"f32": np.float32, "f64": np.float64, "i64": np.int64}
_DTYPE_NAMES = {np.dtype(v): k for k, v in _DTYPES.items()}


class CheckpointError(IOError):
    pass


def save_checkpoint(path, tensors, manifest):
    """Write named arrays and a manifest dict.

    ``tensors`` maps name -> numpy array (float32/float64/int64).
    """
    entries = {}
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype not in _DTYPE_NAMES:
            arr = arr.astype(np.float32)
        data = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        entries[name] = {
            "dtype": _DTYPE_NAMES[arr.dtype],
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(data),
        }
        blobs.append(data)
        offset += len(data)
    header = json.dumps(
        {"version": FORMAT_VERSION, "manifest": manifest, "tensors": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path):
    """Read a checkpoint; returns (tensors dict, manifest dict)."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (header_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(header_len).decode("utf-8"))
        data = f.read()
    tensors = {}
    for name, entry in header["tensors"].items():
        dtype = np.dtype(_DTYPES[entry["dtype"]]).newbyteorder("<")
        start, n = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(data[start:start + n], dtype=dtype)
        tensors[name] = arr.reshape(entry["shape"]).astype(dtype.newbyteorder("="))
    return tensors, header["manifest"]
