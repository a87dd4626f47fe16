"""Minimal PNG codec for 8/16-bit RGB and RGBA images.

Only what the toolkit needs: truecolor images, non-interlaced, written with
filter type 0 so output bytes are a pure function of the pixel data.  The
reader handles all five scanline filters, so atlases produced by other
encoders can be ingested too.  16-bit samples are big-endian per the PNG
standard.
"""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from .errors import VoxkitError

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_COLOR_TYPES = {3: 2, 4: 6}  # channel count -> PNG color type


class PngError(VoxkitError):
    """File is not a PNG this codec can handle."""


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def write_png(path: str | os.PathLike, pixels: np.ndarray) -> None:
    """Write an (H, W, 3|4) uint8 or uint16 array as a PNG file."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[2] not in _COLOR_TYPES:
        raise ValueError(f"pixels must be (H, W, 3|4), got shape {arr.shape}")
    if arr.dtype == np.uint8:
        depth, raw_dtype = 8, np.dtype(">u1")
    elif arr.dtype == np.uint16:
        depth, raw_dtype = 16, np.dtype(">u2")
    else:
        raise ValueError(f"pixels must be uint8 or uint16, got {arr.dtype}")
    height, width, channels = arr.shape

    row_bytes = arr.astype(raw_dtype).reshape(height, -1).view(np.uint8)
    raw = np.empty((height, row_bytes.shape[1] + 1), dtype=np.uint8)
    raw[:, 0] = 0  # filter type None on every scanline
    raw[:, 1:] = row_bytes

    ihdr = struct.pack(">IIBBBBB", width, height, depth,
                       _COLOR_TYPES[channels], 0, 0, 0)
    blob = (_SIGNATURE + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(raw.tobytes(), 6))
            + _chunk(b"IEND", b""))
    with open(path, "wb") as fh:
        fh.write(blob)


def _unfilter(data: np.ndarray, height: int, stride: int, bpp: int) -> np.ndarray:
    """Undo per-scanline filtering; returns (height, stride) uint8."""
    rows = data.reshape(height, stride + 1)
    out = np.zeros((height, stride), dtype=np.uint8)
    for y in range(height):
        ftype = rows[y, 0]
        cur = rows[y, 1:].astype(np.int32)
        prev = out[y - 1].astype(np.int32) if y > 0 else np.zeros(stride, np.int32)
        if ftype == 0:
            line = cur
        elif ftype == 2:  # Up
            line = cur + prev
        elif ftype in (1, 3, 4):  # Sub / Average / Paeth need a left-to-right scan
            line = np.zeros(stride, dtype=np.int32)
            for x in range(stride):
                # predictors read reconstructed bytes, so mask as we go
                a = line[x - bpp] if x >= bpp else 0
                b = prev[x]
                if ftype == 1:
                    line[x] = (cur[x] + a) & 0xFF
                elif ftype == 3:
                    line[x] = (cur[x] + (a + b) // 2) & 0xFF
                else:
                    c = prev[x - bpp] if x >= bpp else 0
                    p = a + b - c
                    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                    pr = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                    line[x] = (cur[x] + pr) & 0xFF
        else:
            raise PngError(f"unsupported filter type {ftype}")
        out[y] = line & 0xFF
    return out


def read_png(path: str | os.PathLike) -> np.ndarray:
    """Read an RGB/RGBA PNG into an (H, W, C) uint8 or uint16 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _SIGNATURE:
        raise PngError(f"{path}: not a PNG file")

    pos = 8
    ihdr = None
    idat = bytearray()
    while pos + 8 <= len(blob):
        length, tag = struct.unpack(">I4s", blob[pos:pos + 8])
        payload = blob[pos + 8:pos + 8 + length]
        crc = struct.unpack(">I", blob[pos + 8 + length:pos + 12 + length])[0]
        if zlib.crc32(tag + payload) & 0xFFFFFFFF != crc:
            raise PngError(f"{path}: CRC mismatch in {tag!r} chunk")
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break
        pos += 12 + length
    if ihdr is None:
        raise PngError(f"{path}: missing IHDR")
    width, height, depth, color_type, compression, filt, interlace = ihdr
    if depth not in (8, 16) or color_type not in (2, 6):
        raise PngError(f"{path}: unsupported depth/color type {depth}/{color_type}")
    if compression != 0 or filt != 0 or interlace != 0:
        raise PngError(f"{path}: unsupported compression/filter/interlace")
    channels = 3 if color_type == 2 else 4
    bpp = channels * depth // 8
    stride = width * bpp

    data = np.frombuffer(zlib.decompress(bytes(idat)), dtype=np.uint8)
    if data.size != height * (stride + 1):
        raise PngError(f"{path}: decompressed size {data.size} != expected "
                       f"{height * (stride + 1)}")
    flat = _unfilter(data, height, stride, bpp)
    if depth == 8:
        return flat.reshape(height, width, channels).copy()
    wide = flat.reshape(height, -1).view(">u2").astype(np.uint16)
    return wide.reshape(height, width, channels)
