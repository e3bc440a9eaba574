"""Binary PPM (P6) / PGM (P5) readers and writers, maxval 255."""

from __future__ import annotations

import numpy as np

from .blockdct import Colorspace, PixelImage, to_uint8
from .errors import FormatError


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # Skip whitespace and '#' comments between header tokens.
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError("truncated netpbm header")
    return data[start:pos], pos


def read_image(path: str) -> PixelImage:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported netpbm magic {magic!r}")
    width, pos = _read_token(data, pos)
    height, pos = _read_token(data, pos)
    maxval, pos = _read_token(data, pos)
    if int(maxval) != 255:
        raise FormatError("only maxval 255 supported")
    pos += 1  # single whitespace after maxval
    w, h = int(width), int(height)
    channels = 3 if magic == b"P6" else 1
    need = w * h * channels
    raw = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos) if len(data) - pos >= need else None
    if raw is None:
        raise FormatError(f"netpbm payload truncated in {path}")
    if channels == 3:
        planes = raw.reshape(h, w, 3).transpose(2, 0, 1)
        return PixelImage(planes.astype(np.float64), Colorspace.RGB)
    return PixelImage(raw.reshape(h, w).astype(np.float64), Colorspace.GRAY)


def write_image(path: str, img: PixelImage) -> None:
    data = to_uint8(img)
    h, w = img.dims
    with open(path, "wb") as fh:
        if img.colorspace is Colorspace.GRAY:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(data[0].tobytes())
        else:
            rgb = data if img.colorspace is Colorspace.RGB else None
            if rgb is None:
                raise FormatError("write_image expects RGB or Gray")
            fh.write(b"P6\n%d %d\n255\n" % (w, h))
            fh.write(rgb.transpose(1, 2, 0).tobytes())


def write_pgm_normalized(path: str, plane: np.ndarray) -> None:
    """Affine-normalize an arbitrary real plane into [0, 255] and save as PGM."""
    plane = np.asarray(plane, dtype=np.float64)
    lo, hi = float(plane.min()), float(plane.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    out = (plane - lo) * scale
    write_image(path, PixelImage(out, Colorspace.GRAY))
