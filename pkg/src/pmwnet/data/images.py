"""Image decoding, encoding and resizing.

Native decoders cover binary PPM (P6) and the raw tensor dump below; other
formats go through Pillow when it is installed.

Raw tensor dump layout: magic ``b"PMWT1\\0"``, then little-endian u32
channels, height, width, a u8 dtype tag (0 = uint8, 1 = float32), then the
values in CHW order.  uint8 data is scaled by 1/255; float32 data is taken
as already in [0, 1].
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

RAW_MAGIC = b"PMWT1\0"
NATIVE_SUFFIXES = (".ppm", ".pnm", ".pmwt")
CODEC_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")
IMAGE_SUFFIXES = NATIVE_SUFFIXES + CODEC_SUFFIXES


class ImageDecodeError(ValueError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)


def _ppm_tokens(data: bytes, count: int, pos: int):
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PPM header")
        tokens.append(data[start:pos])
    return tokens, pos


def decode_ppm(data: bytes) -> np.ndarray:
    """Binary PPM (P6) to an HxWx3 uint8 array."""
    if not data.startswith(b"P6"):
        raise ValueError("not a binary PPM (P6) file")
    (w, h, maxval), pos = _ppm_tokens(data, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ValueError(f"bad PPM header {w}x{h} maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * 3 * dtype.itemsize
    if len(data) - pos < need:
        raise ValueError(f"PPM pixel data truncated: need {need} bytes, have {len(data) - pos}")
    px = np.frombuffer(data, dtype=dtype, count=w * h * 3, offset=pos).reshape(h, w, 3)
    if maxval != 255:
        px = np.round(px.astype(np.float64) * 255.0 / maxval).astype(np.uint8)
    return px.copy()


def encode_ppm(rgb: np.ndarray) -> bytes:
    """HxWx3 uint8 array to binary PPM bytes."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected HxWx3 array, got shape {rgb.shape}")
    h, w, _ = rgb.shape
    return b"P6\n%d %d\n255\n" % (w, h) + rgb.tobytes()


def encode_raw(chw: np.ndarray) -> bytes:
    arr = np.asarray(chw)
    if arr.ndim != 3:
        raise ValueError(f"expected CxHxW array, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        tag, raw = 0, arr.tobytes()
    else:
        tag, raw = 1, np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return RAW_MAGIC + struct.pack("<IIIB", *arr.shape, tag) + raw


def decode_raw(data: bytes) -> np.ndarray:
    """Raw tensor dump to a float32 CxHxW array in [0, 1]."""
    if not data.startswith(RAW_MAGIC):
        raise ValueError("not a raw tensor dump")
    c, h, w, tag = struct.unpack_from("<IIIB", data, len(RAW_MAGIC))
    off = len(RAW_MAGIC) + 13
    if tag == 0:
        arr = np.frombuffer(data, np.uint8, c * h * w, off).astype(np.float32) / 255.0
    elif tag == 1:
        arr = np.frombuffer(data, "<f4", c * h * w, off).astype(np.float32)
    else:
        raise ValueError(f"unknown raw dtype tag {tag}")
    return arr.reshape(c, h, w)


def _decode_with_codec(path: Path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise ValueError("Pillow is required for compressed image formats") from exc
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def decode_image(path) -> np.ndarray:
    """Decode any supported file to a float32 3xHxW array in [0, 1]."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageDecodeError(path, f"cannot read file: {exc}") from exc
    try:
        if data.startswith(RAW_MAGIC):
            chw = decode_raw(data)
            if chw.shape[0] == 1:
                chw = np.repeat(chw, 3, axis=0)
            if chw.shape[0] != 3:
                raise ValueError(f"raw dump has {chw.shape[0]} channels, expected 1 or 3")
            return chw
        if data.startswith(b"P6"):
            rgb = decode_ppm(data)
        else:
            rgb = _decode_with_codec(path)
    except Exception as exc:
        raise ImageDecodeError(path, f"undecodable image ({exc})") from exc
    return rgb.transpose(2, 0, 1).astype(np.float32) / 255.0


def _axis_weights(n_in: int, n_out: int):
    """Source indices and weights for half-pixel (non-align-corners) bilinear sampling."""
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(chw: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    h_out, w_out = size
    _, h, w = chw.shape
    if (h, w) == (h_out, w_out):
        return chw.copy()
    y0, y1, wy = _axis_weights(h, h_out)
    x0, x1, wx = _axis_weights(w, w_out)
    x = chw.astype(np.float64)
    top = x[:, y0, :] * (1 - wy)[None, :, None] + x[:, y1, :] * wy[None, :, None]
    out = top[:, :, x0] * (1 - wx) + top[:, :, x1] * wx
    return out.astype(chw.dtype)


def load_image(path, target: tuple[int, int] = (224, 224)) -> np.ndarray:
    """Decode, bilinearly resize to ``target`` (H, W) and return float32 3xHxW in [0, 1]."""
    return resize_bilinear(decode_image(path), tuple(target))
