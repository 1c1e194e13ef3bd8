"""Minimal PGM (P2 ASCII / P5 binary) reader and writer, 8-bit only."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .field import FieldParameter


class PGMError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


_WS = b" \t\r\n\x0b\x0c"


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_space(self):
        d = self.data
        while self.pos < len(d):
            c = d[self.pos:self.pos + 1]
            if c == b"#":
                end = d.find(b"\n", self.pos)
                self.pos = len(d) if end < 0 else end + 1
            elif c in _WS:
                self.pos += 1
            else:
                break

    def token(self, what: str) -> bytes:
        self.skip_space()
        start = self.pos
        d = self.data
        while self.pos < len(d) and d[self.pos:self.pos + 1] not in _WS and d[self.pos:self.pos + 1] != b"#":
            self.pos += 1
        if self.pos == start:
            raise PGMError(f"expected {what}, found end of file", start)
        return d[start:self.pos]

    def integer(self, what: str) -> int:
        self.skip_space()
        start = self.pos
        tok = self.token(what)
        if not tok.isdigit():
            raise PGMError(f"expected {what}, found {tok[:16]!r}", start)
        return int(tok)


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode PGM bytes into a (height, width) uint8 array."""
    cur = _Cursor(data)
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMError(f"bad magic {magic!r}; expected P2 or P5", 0)
    cur.pos = 2
    width = cur.integer("width")
    height = cur.integer("height")
    cur.skip_space()
    maxval_at = cur.pos
    maxval = cur.integer("maxval")
    if width < 1 or height < 1:
        raise PGMError("image dimensions must be positive", maxval_at)
    if not 0 < maxval <= 255:
        raise PGMError(f"maxval {maxval} unsupported (need 1..255)", maxval_at)
    n = width * height
    if magic == b"P5":
        if cur.pos >= len(data) or data[cur.pos:cur.pos + 1] not in _WS:
            raise PGMError("missing whitespace after maxval", cur.pos)
        start = cur.pos + 1
        body = data[start:start + n]
        if len(body) < n:
            raise PGMError(f"raster truncated: {len(body)} of {n} bytes", start + len(body))
        pixels = np.frombuffer(body, dtype=np.uint8).copy()
        over = np.flatnonzero(pixels > maxval)
        if over.size:
            raise PGMError(f"pixel value {pixels[over[0]]} exceeds maxval {maxval}", start + int(over[0]))
    else:
        pixels = np.empty(n, dtype=np.int64)
        for k in range(n):
            cur.skip_space()
            start = cur.pos
            pixels[k] = cur.integer(f"pixel {k}")
            if pixels[k] > maxval:
                raise PGMError(f"pixel value {pixels[k]} exceeds maxval {maxval}", start)
        pixels = pixels.astype(np.uint8)
    return pixels.reshape(height, width)


def read_pgm(path: str | Path) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def encode_pgm(image, binary: bool = True) -> bytes:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = img.shape
    if binary:
        return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()
    lines = [" ".join(str(v) for v in row) for row in img]
    return (f"P2\n{w} {h}\n255\n" + "\n".join(lines) + "\n").encode()


def write_pgm(path: str | Path, image, binary: bool = True) -> None:
    Path(path).write_bytes(encode_pgm(image, binary))


def load_field_pgm(path: str | Path) -> FieldParameter:
    """Field whose component width*i + j is pixel (i, j)."""
    img = read_pgm(path)
    return FieldParameter(img.astype(np.float64).ravel(), img.shape)
