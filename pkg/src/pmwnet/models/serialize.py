"""Weight file format.

Layout (all integers little-endian)::

    magic      6 bytes   b"PMWW1\\0"
    record*    name_len u32 | name utf-8 | rank u32 | dims u64*rank |
               dtype u8 (1 = float32, 2 = float64) | raw little-endian values
    checksum   8 bytes   BLAKE2b-64 digest of everything before it

Records run until the trailing checksum.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .graph import ModelGraph

MAGIC = b"PMWW1\0"
_DTYPE_TAGS = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


class WeightFormatError(ValueError):
    pass


class WeightShapeError(ValueError):
    pass


def checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def tensors_checksum(tensors: Mapping[str, np.ndarray]) -> str:
    """Hex digest over names, shapes, dtypes and bytes, in sorted-name order."""
    h = hashlib.blake2b(digest_size=8)
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.dtype.str.encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def encode(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        le = arr.dtype.newbyteorder("<")
        if le not in _DTYPE_TAGS:
            raise TypeError(f"{name}: unsupported dtype {arr.dtype}")
        raw = np.ascontiguousarray(arr, dtype=le).tobytes()
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(struct.pack("<B", _DTYPE_TAGS[le]))
        parts.append(raw)
    body = b"".join(parts)
    return body + checksum(body)


def decode(data: bytes) -> dict[str, np.ndarray]:
    if len(data) < len(MAGIC) + 8 or not data.startswith(MAGIC):
        raise WeightFormatError("not a weight file: bad magic bytes")
    body, digest = data[:-8], data[-8:]
    if checksum(body) != digest:
        raise WeightFormatError("weight file checksum mismatch (corrupt or truncated)")
    out: dict[str, np.ndarray] = {}
    pos = len(MAGIC)
    try:
        while pos < len(body):
            (n,) = struct.unpack_from("<I", body, pos)
            pos += 4
            name = body[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", body, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", body, pos)
            pos += 8 * rank
            (tag,) = struct.unpack_from("<B", body, pos)
            pos += 1
            dtype = _TAG_DTYPES[tag]
            nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            if pos + nbytes > len(body):
                raise WeightFormatError(f"record {name!r} runs past end of file")
            arr = np.frombuffer(body, dtype=dtype, count=nbytes // dtype.itemsize, offset=pos)
            out[name] = arr.reshape(dims).astype(dtype.newbyteorder("="))
            pos += nbytes
    except (struct.error, KeyError, UnicodeDecodeError) as exc:
        raise WeightFormatError(f"malformed weight record at byte {pos}: {exc}") from exc
    return out


def write_tensors(path, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(tensors))


def read_tensors(path) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())


def save_weights(model: ModelGraph, path, names=None) -> None:
    """Write all parameters and buffers (or only ``names``) of ``model``."""
    state = model.state()
    if names is not None:
        state = {k: state[k] for k in names}
    write_tensors(path, state)


@dataclass
class LoadReport:
    loaded: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)  # in the file, not in the model
    missing: list[str] = field(default_factory=list)  # in the model, not in the file

    def as_dict(self):
        return {"loaded": self.loaded, "skipped": self.skipped, "missing": self.missing}


def load_state(model: ModelGraph, tensors: Mapping[str, np.ndarray], allow_partial: bool = False) -> LoadReport:
    state = model.state()
    report = LoadReport()
    for name, arr in tensors.items():
        if name not in state:
            report.skipped.append(name)
            continue
        if tuple(arr.shape) != tuple(state[name].shape):
            raise WeightShapeError(
                f"parameter {name!r}: file shape {tuple(arr.shape)} != model shape {tuple(state[name].shape)}"
            )
        report.loaded.append(name)
    report.missing = [n for n in state if n not in tensors]
    if not allow_partial and (report.skipped or report.missing):
        raise WeightShapeError(
            f"weight file does not match model: {len(report.missing)} missing "
            f"({', '.join(report.missing[:3])}...), {len(report.skipped)} unexpected; pass allow_partial to load anyway"
        )
    for name in report.loaded:
        model.set_tensor(name, np.array(tensors[name], dtype=state[name].dtype))
    return report


def load_weights(path, model: ModelGraph, allow_partial: bool = False) -> LoadReport:
    return load_state(model, read_tensors(path), allow_partial)
