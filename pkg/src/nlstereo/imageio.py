"""PFM disparity maps and binary PGM/PPM images.

PFM: header ``Pf`` (grayscale) or ``PF`` (3-channel), ASCII width/height,
a scale whose sign encodes endianness (negative = little-endian), then
32-bit float rows stored bottom row first.  PGM/PPM: binary P5/P6 with
maxval 255, mapped to [0, 1].

Every malformed input raises :class:`FormatError` with a positioned
diagnostic; arbitrary byte streams never crash the readers.
"""

from __future__ import annotations

import io

import numpy as np


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def write_pfm(path, disparity: np.ndarray) -> None:
    """Write an (h, w) map as a little-endian grayscale PFM."""
    arr = np.asarray(disparity, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"write_pfm expects an (h, w) map, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("write_pfm: non-finite values")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(arr[::-1].astype("<f4").tobytes())


def _read_token(fh, what: str) -> bytes:
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise FormatError(f"unexpected end of file at byte {fh.tell()} reading {what}")
        if ch.isspace():
            if tok:
                return tok
            continue
        if ch == b"#":  # comment until end of line
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        tok += ch
        if len(tok) > 32:
            raise FormatError(f"oversized token at byte {fh.tell()} reading {what}")


def _int_token(fh, what: str, limit: int = 1 << 20) -> int:
    tok = _read_token(fh, what)
    try:
        val = int(tok)
    except ValueError:
        raise FormatError(f"bad {what} {tok!r} at byte {fh.tell()}") from None
    if not 0 < val <= limit:
        raise FormatError(f"{what} {val} out of range at byte {fh.tell()}")
    return val


def read_pfm(path, allow_color: bool = False) -> np.ndarray:
    """Read a PFM file; returns (h, w) float64, or (3, h, w) if color allowed."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic == b"PF":
            color = True
            if not allow_color:
                raise FormatError("color PFM ('PF') not accepted here; expected 'Pf'")
        elif magic == b"Pf":
            color = False
        else:
            raise FormatError(f"bad PFM magic {magic!r}")
        w = _int_token(fh, "width")
        h = _int_token(fh, "height")
        scale_tok = _read_token(fh, "scale")
        try:
            scale = float(scale_tok)
        except ValueError:
            raise FormatError(f"bad scale {scale_tok!r} at byte {fh.tell()}") from None
        if scale == 0.0:
            raise FormatError("scale must be nonzero")
        dtype = "<f4" if scale < 0 else ">f4"
        channels = 3 if color else 1
        count = w * h * channels
        payload = fh.read(4 * count)
        if len(payload) != 4 * count:
            raise FormatError(
                f"truncated payload: expected {4 * count} bytes, got {len(payload)}"
            )
        data = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if color:
        return data.reshape(h, w, 3)[::-1].transpose(2, 0, 1).copy()
    return data.reshape(h, w)[::-1].copy()


# ---------------------------------------------------------------------------
# Binary PGM / PPM
# ---------------------------------------------------------------------------

def write_pnm(path, image: np.ndarray) -> None:
    """Write a (c, h, w) or (1, c, h, w) image in [0, 1] as binary PGM/PPM."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 4 and img.shape[0] == 1:
        img = img[0]
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"write_pnm expects (c, h, w) with c in {{1, 3}}, got {img.shape}")
    c, h, w = img.shape
    quant = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"{'P5' if c == 1 else 'P6'}\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quant.transpose(1, 2, 0).tobytes())


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM/PPM; returns (1, c, h, w) float64 in [0, 1]."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic == b"P5":
            channels = 1
        elif magic == b"P6":
            channels = 3
        else:
            raise FormatError(f"bad PNM magic {magic!r} (binary P5/P6 only)")
        w = _int_token(fh, "width")
        h = _int_token(fh, "height")
        maxval = _int_token(fh, "maxval", limit=65535)
        if maxval != 255:
            raise FormatError(f"unsupported maxval {maxval}, expected 255")
        count = w * h * channels
        payload = fh.read(count)
        if len(payload) != count:
            raise FormatError(
                f"truncated payload: expected {count} bytes, got {len(payload)}"
            )
    data = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, channels)
    return (data.transpose(2, 0, 1).astype(np.float64) / 255.0)[None]
