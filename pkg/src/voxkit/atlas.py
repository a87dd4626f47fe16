"""Channel-packed texture atlases: data-cube slices tiled into one 2D image.

A volume is sliced along one axis and the slices are laid out on a
square-ish tile grid (cols = ceil(sqrt(n_slices))), so a 512-slice cube
becomes a 23x23 tile sheet.  Up to four normalized fields ride in the R, G,
B and A channels of a single 8- or 16-bit PNG; a JSON sidecar records the
layout and per-channel normalization so the packing is invertible up to
quantization.  The alpha channel carries data like any other channel: the
PNG is written without premultiplication and consumers must not interpret
A as opacity.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import pngio
from .errors import AtlasError
from .field import ScalarField, check_same_grid

CHANNELS = "RGBA"
_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class NormalizationSpec:
    """Maps physical values to [0, 1]; out-of-range input clamps."""

    mode: str  # "linear" or "log10"
    lo: float
    hi: float

    def __post_init__(self):
        if self.mode not in ("linear", "log10"):
            raise ValueError(f"mode must be linear or log10, got {self.mode!r}")
        if not (self.lo < self.hi):
            raise ValueError(f"need lo < hi, got lo={self.lo}, hi={self.hi}")
        if self.mode == "log10" and self.lo <= 0:
            raise ValueError(f"log10 mode needs lo > 0, got lo={self.lo}")

    def normalize(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64)
        if self.mode == "linear":
            u = (v - self.lo) / (self.hi - self.lo)
        else:
            lo_l, hi_l = math.log10(self.lo), math.log10(self.hi)
            positive = v > 0
            logv = np.log10(v, out=np.zeros_like(v, dtype=np.float64), where=positive)
            u = np.where(positive, (logv - lo_l) / (hi_l - lo_l), 0.0)
        return np.clip(u, 0.0, 1.0)

    def denormalize(self, u) -> float:
        """Exact inverse of the unclamped mapping."""
        u = np.asarray(u, dtype=np.float64)
        if self.mode == "linear":
            out = self.lo + u * (self.hi - self.lo)
        else:
            lo_l, hi_l = math.log10(self.lo), math.log10(self.hi)
            out = 10.0 ** (lo_l + u * (hi_l - lo_l))
        return float(out) if out.ndim == 0 else out


def default_normalization(field: ScalarField, mode: str = "log10") -> NormalizationSpec:
    """Bounds from field statistics: log10 over [positive_min, max] when
    possible (densities span decades), else linear over [min, max]."""
    from .field import field_stats
    st = field_stats(field)
    if mode == "log10" and st.positive_min is not None and st.positive_min < st.max:
        return NormalizationSpec("log10", st.positive_min, st.max)
    lo, hi = st.min, st.max
    if lo == hi:
        hi = lo + 1.0
    return NormalizationSpec("linear", lo, hi)


def normalize_field(field: ScalarField, spec: NormalizationSpec) -> ScalarField:
    """Field with values mapped into [0, 1] by the given spec."""
    return field.with_values(spec.normalize(field.values), units="")


def denormalize_value(u: float, spec: NormalizationSpec) -> float:
    return spec.denormalize(u)


@dataclass(frozen=True)
class ChannelSpec:
    channel: str  # one of R G B A
    field: str
    spec: NormalizationSpec
    units: str = ""

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"channel must be one of {CHANNELS!r}, got {self.channel!r}")


def _check_assignment(assignment) -> tuple[ChannelSpec, ...]:
    entries = tuple(assignment)
    if not 1 <= len(entries) <= 4:
        raise ValueError(f"assignment needs 1-4 entries, got {len(entries)}")
    seen = set()
    for e in entries:
        if e.channel in seen:
            raise ValueError(f"channel {e.channel} assigned twice")
        seen.add(e.channel)
    return entries


@dataclass(frozen=True)
class AtlasImage:
    pixels: np.ndarray  # (height, width, 4) uint8 or uint16

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 4 or arr.dtype not in (np.uint8, np.uint16):
            raise ValueError(f"atlas pixels must be (H, W, 4) uint8/uint16, got "
                             f"{arr.shape} {arr.dtype}")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def bit_depth(self) -> int:
        return 8 if self.pixels.dtype == np.uint8 else 16


@dataclass(frozen=True)
class AtlasMeta:
    dims: tuple[int, int, int]
    slice_axis: str
    n_slices: int
    cols: int
    rows: int
    tile_w: int
    tile_h: int
    bit_depth: int
    channels: tuple[ChannelSpec, ...]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]

    def channel_for(self, channel: str) -> ChannelSpec:
        for c in self.channels:
            if c.channel == channel:
                return c
        raise AtlasError(f"channel {channel!r} is not assigned in this atlas")

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims), "slice_axis": self.slice_axis,
            "n_slices": self.n_slices, "cols": self.cols, "rows": self.rows,
            "tile_w": self.tile_w, "tile_h": self.tile_h,
            "bit_depth": self.bit_depth,
            "channels": [{"channel": c.channel, "field": c.field, "units": c.units,
                          "mode": c.spec.mode, "lo": c.spec.lo, "hi": c.spec.hi}
                         for c in self.channels],
            "spacing": list(self.spacing), "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AtlasMeta":
        channels = tuple(
            ChannelSpec(channel=c["channel"], field=c["field"], units=c.get("units", ""),
                        spec=NormalizationSpec(c["mode"], float(c["lo"]), float(c["hi"])))
            for c in d["channels"])
        return cls(dims=tuple(int(v) for v in d["dims"]), slice_axis=d["slice_axis"],
                   n_slices=int(d["n_slices"]), cols=int(d["cols"]), rows=int(d["rows"]),
                   tile_w=int(d["tile_w"]), tile_h=int(d["tile_h"]),
                   bit_depth=int(d["bit_depth"]), channels=channels,
                   spacing=tuple(float(v) for v in d["spacing"]),
                   origin=tuple(float(v) for v in d["origin"]))


def plan_tiles(n_slices: int) -> tuple[int, int]:
    """Square-ish layout: cols = ceil(sqrt(n)), rows = ceil(n / cols)."""
    if n_slices < 1:
        raise ValueError("need at least one slice")
    cols = math.isqrt(n_slices)
    if cols * cols < n_slices:
        cols += 1
    rows = -(-n_slices // cols)
    return cols, rows


def _slice_plane_axes(axis: int) -> tuple[int, int]:
    """In-slice axes in ascending order; first maps to tile-x, second to tile-y."""
    return tuple(a for a in (0, 1, 2) if a != axis)


def pack_atlas(fields: Mapping[str, ScalarField], assignment,
               slice_axis: str = "z", bit_depth: int = 16) -> tuple[AtlasImage, AtlasMeta]:
    """Tile up to four normalized fields into one channel-packed image.

    Slice k occupies tile (k mod cols, k // cols); within a tile the two
    in-slice axes map to (tile-x, tile-y) in ascending axis order.  Values
    quantize to round(u * (2^bit_depth - 1)).  Unassigned channels and
    tiles beyond n_slices are zero.
    """
    entries = _check_assignment(assignment)
    if slice_axis not in _AXES:
        raise ValueError(f"slice_axis must be x, y or z, got {slice_axis!r}")
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    used = {}
    for e in entries:
        if e.field not in fields:
            raise ValueError(f"assignment references unknown field {e.field!r}")
        used[e.field] = fields[e.field]
    check_same_grid(used)

    proto = next(iter(used.values()))
    axis = _AXES[slice_axis]
    a1, a2 = _slice_plane_axes(axis)
    dims = proto.dims
    n_slices = dims[axis]
    tile_w, tile_h = dims[a1], dims[a2]
    cols, rows = plan_tiles(n_slices)
    width, height = cols * tile_w, rows * tile_h

    dtype = np.uint8 if bit_depth == 8 else np.uint16
    max_q = (1 << bit_depth) - 1
    pixels = np.zeros((height, width, 4), dtype=dtype)

    resolved = []
    for e in entries:
        f = fields[e.field]
        u = e.spec.normalize(f.values)
        q = np.floor(u * max_q + 0.5).astype(dtype)
        resolved.append((CHANNELS.index(e.channel), q,
                         ChannelSpec(e.channel, e.field, e.spec, units=f.units)))

    for k in range(n_slices):
        tx, ty = k % cols, k // cols
        x0, y0 = tx * tile_w, ty * tile_h
        for ci, q, _ in resolved:
            plane = np.take(q, k, axis=axis)  # indexed [a1, a2]
            pixels[y0:y0 + tile_h, x0:x0 + tile_w, ci] = plane.T

    meta = AtlasMeta(dims=dims, slice_axis=slice_axis, n_slices=n_slices,
                     cols=cols, rows=rows, tile_w=tile_w, tile_h=tile_h,
                     bit_depth=bit_depth,
                     channels=tuple(spec for _, _, spec in resolved),
                     spacing=proto.spacing, origin=proto.origin)
    return AtlasImage(pixels), meta


def unpack_atlas(image: AtlasImage, meta: AtlasMeta, channel: str) -> ScalarField:
    """Rebuild one channel as a normalized field (values in [0, 1]).

    Per-voxel error vs. the pre-pack normalized field is bounded by
    0.5 / (2^bit_depth - 1).
    """
    cspec = meta.channel_for(channel)
    if image.width != meta.cols * meta.tile_w or image.height != meta.rows * meta.tile_h:
        raise AtlasError(
            f"image is {image.width}x{image.height} but meta declares "
            f"{meta.cols}x{meta.tile_w} x {meta.rows}x{meta.tile_h}")
    if image.bit_depth != meta.bit_depth:
        raise AtlasError(f"image depth {image.bit_depth} != meta depth {meta.bit_depth}")
    axis = _AXES[meta.slice_axis]
    a1, a2 = _slice_plane_axes(axis)
    dims = meta.dims
    if (dims[axis] != meta.n_slices or dims[a1] != meta.tile_w
            or dims[a2] != meta.tile_h):
        raise AtlasError(f"meta dims {dims} inconsistent with tile layout")

    ci = CHANNELS.index(cspec.channel)
    max_q = (1 << meta.bit_depth) - 1
    out = np.empty(dims, dtype=np.float64)
    mover = np.empty((dims[a1], dims[a2]), dtype=np.float64)
    index: list = [slice(None)] * 3
    for k in range(meta.n_slices):
        tx, ty = k % meta.cols, k // meta.cols
        x0, y0 = tx * meta.tile_w, ty * meta.tile_h
        mover[:, :] = image.pixels[y0:y0 + meta.tile_h, x0:x0 + meta.tile_w, ci].T
        index[axis] = k
        out[tuple(index)] = mover
    out /= max_q
    return ScalarField(name=cspec.field, values=out, spacing=meta.spacing,
                       origin=meta.origin, units="")


def write_atlas(image: AtlasImage, meta: AtlasMeta, path_prefix: str | os.PathLike) -> None:
    """Store as <prefix>.png plus a <prefix>.json metadata sidecar."""
    prefix = os.fspath(path_prefix)
    pngio.write_png(prefix + ".png", image.pixels)
    with open(prefix + ".json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta.to_dict(), indent=2) + "\n")


def read_atlas(path_prefix: str | os.PathLike) -> tuple[AtlasImage, AtlasMeta]:
    prefix = os.fspath(path_prefix)
    try:
        with open(prefix + ".json", "r", encoding="utf-8") as fh:
            meta = AtlasMeta.from_dict(json.load(fh))
    except FileNotFoundError as exc:
        raise AtlasError(f"missing atlas sidecar {prefix}.json") from exc
    pixels = pngio.read_png(prefix + ".png")
    if pixels.ndim != 3 or pixels.shape[2] != 4:
        raise AtlasError(f"{prefix}.png is not a 4-channel image")
    image = AtlasImage(pixels)
    if image.width != meta.cols * meta.tile_w or image.height != meta.rows * meta.tile_h:
        raise AtlasError(f"{prefix}.png dimensions {image.width}x{image.height} "
                         f"disagree with sidecar layout")
    if image.bit_depth != meta.bit_depth:
        raise AtlasError(f"{prefix}.png depth {image.bit_depth} != sidecar "
                         f"depth {meta.bit_depth}")
    return image, meta
