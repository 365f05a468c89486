"""8-bit grayscale image I/O: binary PGM (P5) read/write, grayscale PNG read."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

MIN_SIDE = 16

_PGM_HEADER = re.compile(rb"\AP5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


class ImageFormatError(ValueError):
    pass


def validate_image(img: np.ndarray) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 2:
        raise ImageFormatError("expected a single-channel image")
    if min(a.shape) < MIN_SIDE:
        raise ImageFormatError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {a.shape[1]}x{a.shape[0]}")
    if a.dtype != np.uint8:
        if np.any((a < 0) | (a > 255)) or np.any(a != np.rint(a)):
            raise ImageFormatError("pixel values must be integers in [0, 255]")
        a = a.astype(np.uint8)
    return a


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if not m:
        raise ImageFormatError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    body = data[m.end():]
    if len(body) < w * h:
        raise ImageFormatError(f"{path}: truncated pixel data")
    return np.frombuffer(body[: w * h], dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    a = validate_image(img)
    h, w = a.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(a).tobytes())


def read_image(path: str | Path) -> np.ndarray:
    """Load a cover: PGM (P5) or 8-bit grayscale PNG."""
    p = Path(path)
    try:
        head = p.read_bytes()[:8]
    except OSError as exc:
        raise ImageFormatError(f"{path}: cannot read ({exc.strerror})") from exc
    if head.startswith(b"\x89PNG"):
        from PIL import Image

        with Image.open(p) as im:
            if im.mode != "L":
                raise ImageFormatError(f"{path}: PNG must be 8-bit grayscale, got mode {im.mode}")
            img = np.asarray(im, dtype=np.uint8)
    else:
        img = read_pgm(p)
    return validate_image(img)
