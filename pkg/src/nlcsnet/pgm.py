"""Binary PGM (P5) reading and writing for 8-bit grayscale images."""

from pathlib import Path

import numpy as np


class PGMError(ValueError):
    pass


def _tokens(buf):
    """Yield (token, end_offset) for the whitespace-separated header fields."""
    i, n = 0, len(buf)
    while i < n:
        c = buf[i : i + 1]
        if c == b"#":
            while i < n and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            start = i
            while i < n and not buf[i : i + 1].isspace() and buf[i : i + 1] != b"#":
                i += 1
            yield buf[start:i], i


def read_pgm(path):
    """Read a P5 file and return a float64 array scaled to [0, 1]."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise PGMError(f"cannot read {path}: {exc}") from exc
    header = []
    end = 0
    for tok, end in _tokens(buf):
        header.append(tok)
        if len(header) == 4:
            break
    if len(header) < 4 or header[0] != b"P5":
        raise PGMError(f"{path}: not a binary PGM (P5) file")
    try:
        width, height, maxval = (int(t) for t in header[1:])
    except ValueError:
        raise PGMError(f"{path}: malformed PGM header")
    if not 0 < maxval < 256:
        raise PGMError(f"{path}: only 8-bit PGM is supported (maxval={maxval})")
    data = buf[end + 1 : end + 1 + width * height]
    if len(data) != width * height:
        raise PGMError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
    return pixels.astype(np.float64) / maxval


def to_uint8(image):
    return np.clip(np.rint(np.asarray(image, np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, image):
    """Write a [0, 1] image (or a uint8 array) as 8-bit P5."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise PGMError(f"write_pgm expects a 2-D image, got shape {image.shape}")
    pixels = image if image.dtype == np.uint8 else to_uint8(image)
    h, w = pixels.shape
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(np.ascontiguousarray(pixels).tobytes())
    except OSError as exc:
        raise PGMError(f"cannot write {path}: {exc}") from exc
