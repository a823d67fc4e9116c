"""8-bit image files: binary PPM/PGM (P6/P5) natively, PNG through Pillow."""

from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np


class ImageDecodeError(ValueError):
    pass


def _ppm_header(data: bytes, path):
    """Parse 'P6 W H MAXVAL' (comments allowed); return (magic, w, h, maxval, offset)."""
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ImageDecodeError(f"{path}: truncated PPM header")
        tokens.append(data[i:j])
        i = j
    if i >= len(data):
        raise ImageDecodeError(f"{path}: truncated PPM header")
    magic = tokens[0]
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageDecodeError(f"{path}: malformed PPM header") from None
    if w < 1 or h < 1 or not 0 < maxval <= 255:
        raise ImageDecodeError(f"{path}: unsupported PPM dimensions or maxval")
    return magic, w, h, maxval, i + 1


def decode_pnm(data: bytes, path="<bytes>") -> np.ndarray:
    magic, w, h, maxval, off = _ppm_header(data, path)
    if magic not in (b"P6", b"P5"):
        raise ImageDecodeError(f"{path}: unsupported PNM type {magic!r}")
    ch = 3 if magic == b"P6" else 1
    need = w * h * ch
    if len(data) - off < need:
        raise ImageDecodeError(f"{path}: truncated pixel data ({len(data) - off} of {need} bytes)")
    px = np.frombuffer(data, dtype=np.uint8, count=need, offset=off).reshape(h, w, ch)
    return px.astype(np.float64) / maxval


def _to_u8(img):
    img = np.asarray(img, dtype=np.float64)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def encode_pnm(img) -> bytes:
    px = _to_u8(img)
    if px.ndim == 2:
        px = px[..., None]
    h, w, ch = px.shape
    if ch not in (1, 3):
        raise ValueError(f"PNM needs 1 or 3 channels, got {ch}")
    magic = b"P6" if ch == 3 else b"P5"
    return magic + f"\n{w} {h}\n255\n".encode() + px.tobytes()


def read_image(path) -> np.ndarray:
    """Read PPM/PGM/PNG into float64 H x W x C with values v / 255."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ImageDecodeError(f"{path}: {e.strerror}") from None
    if data[:2] in (b"P6", b"P5"):
        return decode_pnm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        try:
            with Image.open(io.BytesIO(data)) as im:
                im.load()
                im = im.convert("RGB") if im.mode not in ("RGB", "L") else im
                arr = np.asarray(im, dtype=np.float64) / 255.0
        except OSError as e:
            raise ImageDecodeError(f"{path}: {e}") from None
        return arr[..., None] if arr.ndim == 2 else arr
    raise ImageDecodeError(f"{path}: unrecognized image format")


def write_image(img, path):
    """Write by extension: .ppm/.pgm natively, .png via Pillow with fixed settings."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext in (".ppm", ".pgm", ".pnm"):
        data = encode_pnm(img)
    elif ext == ".png":
        from PIL import Image

        px = _to_u8(img)
        if px.ndim == 3 and px.shape[2] == 1:
            px = px[..., 0]
        buf = io.BytesIO()
        Image.fromarray(px).save(buf, format="PNG", compress_level=6, optimize=False)
        data = buf.getvalue()
    else:
        raise ValueError(f"unsupported image extension {ext!r}")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
