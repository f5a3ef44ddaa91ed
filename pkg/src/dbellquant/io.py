"""On-disk formats.

Tensor file (little-endian throughout)::

    b"DBQT" | u32 version=1 | u32 dtype (1=float64, 2=float32) | u32 ndim
    | ndim x u64 dims | row-major payload

Artifact file::

    b"DBQA" | u32 version=1 | u64 header length | UTF-8 JSON header
    | u64 sign-section length | packed sign bytes of every block, in order

The JSON header holds the layout, shapes, per-block ``alpha``/``beta`` and
sign byte counts, the transform, both configs and the loss trace. Floats
are written with ``repr`` precision so the round trip is exact.
"""
from __future__ import annotations

import json
import math
import os
import struct

import numpy as np

from .actquant import ActQuantConfig
from .binarizer import BinarizedBlock, BinarizedWeights, QuantLayout, packed_size
from .ltdb import LossTrace, LTDBConfig

TENSOR_MAGIC = b"DBQT"
ARTIFACT_MAGIC = b"DBQA"
VERSION = 1

_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4")}
_CODES = {np.dtype("float64"): 1, np.dtype("float32"): 2}


class FormatError(ValueError):
    """Malformed file. ``code`` distinguishes the failure kind."""

    code = "format"


class BadMagicError(FormatError):
    code = "bad_magic"


class UnsupportedVersionError(FormatError):
    code = "unsupported_version"


class UnsupportedDtypeError(FormatError):
    code = "unsupported_dtype"


class TruncatedError(FormatError):
    code = "truncated"


class EmptyDimsError(FormatError):
    code = "empty_dims"


class CorruptArtifactError(FormatError):
    code = "corrupt_artifact"


def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _CODES:
        arr = arr.astype(np.float64)
    if arr.ndim == 0 or arr.size == 0:
        raise EmptyDimsError("tensor must have at least one dimension and one element")
    code = _CODES[arr.dtype]
    head = TENSOR_MAGIC + struct.pack("<III", VERSION, code, arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 16:
        raise TruncatedError("truncated header")
    if buf[:4] != TENSOR_MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}")
    version, code, ndim = struct.unpack_from("<III", buf, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    if code not in _DTYPES:
        raise UnsupportedDtypeError(f"unsupported dtype code {code}")
    if ndim == 0:
        raise EmptyDimsError("empty dims")
    off = 16 + 8 * ndim
    if len(buf) < off:
        raise TruncatedError("truncated dims")
    dims = struct.unpack_from(f"<{ndim}Q", buf, 16)
    if any(d == 0 for d in dims):
        raise EmptyDimsError("zero-length dimension")
    dtype = _DTYPES[code]
    need = math.prod(dims) * dtype.itemsize
    if len(buf) - off < need:
        raise TruncatedError(f"payload has {len(buf) - off} bytes, expected {need}")
    if len(buf) - off > need:
        raise FormatError("trailing bytes after payload")
    return np.frombuffer(buf, dtype=dtype, count=math.prod(dims), offset=off).reshape(dims).astype(dtype.newbyteorder("="))


def write_tensor(path, arr) -> None:
    data = encode_tensor(arr)
    with open(path, "wb") as f:
        f.write(data)


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_tensor(f.read())


def _artifact_header(artifact) -> dict:
    bw = artifact.binarized
    return {
        "format": "dbellquant-artifact",
        "rows": bw.rows,
        "cols": bw.cols,
        "layout": {"block_size": bw.layout.block_size},
        "blocks": [
            {"rows": b.rows, "nbytes": int(b.packed.size),
             "beta": b.beta.tolist(), "alpha": b.alpha.tolist()}
            for b in bw.blocks
        ],
        "transform": np.asarray(artifact.transform).tolist(),
        "ltdb": artifact.ltdb.to_dict(),
        "act": artifact.act.to_dict() if artifact.act is not None else None,
        "trace": artifact.trace.to_dict(),
    }


def encode_artifact(artifact) -> bytes:
    header = json.dumps(_artifact_header(artifact), sort_keys=True).encode("utf-8")
    signs = b"".join(b.packed.tobytes() for b in artifact.binarized.blocks)
    return (ARTIFACT_MAGIC + struct.pack("<IQ", VERSION, len(header)) + header
            + struct.pack("<Q", len(signs)) + signs)


def decode_artifact(buf: bytes):
    from .pipeline import QuantizedLayerArtifact

    if len(buf) < 16:
        raise TruncatedError("truncated header")
    if buf[:4] != ARTIFACT_MAGIC:
        raise BadMagicError(f"bad magic {buf[:4]!r}")
    version, hlen = struct.unpack_from("<IQ", buf, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    off = 16
    if len(buf) < off + hlen + 8:
        raise TruncatedError("truncated artifact")
    try:
        header = json.loads(buf[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptArtifactError("corrupt artifact") from exc
    off += hlen
    (slen,) = struct.unpack_from("<Q", buf, off)
    off += 8
    signs = buf[off:]
    if len(signs) != slen:
        raise CorruptArtifactError("corrupt artifact")
    try:
        rows, cols = header["rows"], header["cols"]
        layout = QuantLayout(header["layout"]["block_size"])
        blocks = []
        pos = 0
        for b in header["blocks"]:
            nbytes = b["nbytes"]
            if nbytes != packed_size(b["rows"] * cols):
                raise CorruptArtifactError("corrupt artifact")
            packed = np.frombuffer(signs, dtype=np.uint8, count=nbytes, offset=pos).copy()
            pos += nbytes
            blocks.append(BinarizedBlock(packed, b["rows"], cols, b["beta"], b["alpha"]))
        if pos != slen or sum(b.rows for b in blocks) != rows:
            raise CorruptArtifactError("corrupt artifact")
        expected = [e - s for s, e in layout.blocks(rows)]
        if [b.rows for b in blocks] != expected:
            raise CorruptArtifactError("corrupt artifact")
        binarized = BinarizedWeights(layout, blocks, rows, cols)
        act = ActQuantConfig(**header["act"]) if header["act"] is not None else None
        return QuantizedLayerArtifact(
            binarized=binarized,
            transform=np.array(header["transform"], dtype=np.float64),
            trace=LossTrace.from_dict(header["trace"]),
            ltdb=LTDBConfig.from_dict(header["ltdb"]),
            act=act,
        )
    except CorruptArtifactError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptArtifactError("corrupt artifact") from exc


def write_artifact(path, artifact) -> None:
    data = encode_artifact(artifact)
    with open(path, "wb") as f:
        f.write(data)


def read_artifact(path):
    with open(path, "rb") as f:
        return decode_artifact(f.read())


def sniff(path) -> str:
    """Return "tensor", "artifact" or "unknown" from the file's magic."""
    with open(path, "rb") as f:
        magic = f.read(4)
    return {TENSOR_MAGIC: "tensor", ARTIFACT_MAGIC: "artifact"}.get(magic, "unknown")


def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text + "\n")
    os.replace(tmp, path)
