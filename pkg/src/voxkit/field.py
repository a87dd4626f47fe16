"""Scalar fields on uniform 3D grids: load/save, stats, downsampling, sampling.

A field's values live on an (nx, ny, nz) grid of voxel centers: voxel
(i, j, k) is centered at ``origin + (i + 0.5, j + 0.5, k + 0.5) * spacing``
and the field's physical bounding box is ``[origin, origin + dims * spacing)``.

On disk a field is a "cube": a small JSON header next to a headerless raw
binary file.  The header declares dims, spacing, origin, element type,
endianness, linearization order and the NaN policy, so cubes written by
other tools can be ingested by declaring their conventions.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import CubeFormatError, OutsideDomainError

HEADER_KEYS = ("name", "dims", "spacing", "origin", "units", "dtype",
               "endianness", "order", "nan_policy", "data")

_DTYPES = {"f32": 4, "f64": 8}
HISTOGRAM_BINS = 64


@dataclass(frozen=True)
class ScalarField:
    """A scalar quantity sampled at the voxel centers of a uniform grid.

    ``values`` is indexed ``[x, y, z]`` and stored as float64 regardless of
    the on-disk element width.  Instances are immutable; the constructor
    freezes the array (taking ownership of it, copying only when the input
    is not already a C-contiguous float64 array).
    """

    name: str
    values: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    units: str = ""
    spacing_units: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"field values must be 3D, got shape {arr.shape}")
        if min(arr.shape) < 2:
            raise ValueError(f"every grid extent must be >= 2, got {arr.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or len(origin) != 3:
            raise ValueError("spacing and origin must have 3 components")
        if any(s <= 0 or not np.isfinite(s) for s in spacing):
            raise ValueError(f"spacing must be positive and finite, got {spacing}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical bounding box (lo, hi) with hi exclusive."""
        lo = np.array(self.origin)
        hi = lo + np.array(self.dims) * np.array(self.spacing)
        return lo, hi

    def same_grid(self, other: "ScalarField") -> bool:
        return (self.dims == other.dims and self.spacing == other.spacing
                and self.origin == other.origin)

    def with_values(self, values: np.ndarray, name: str | None = None,
                    units: str | None = None) -> "ScalarField":
        """A field on the same grid carrying different values."""
        return ScalarField(
            name=self.name if name is None else name,
            values=values, spacing=self.spacing, origin=self.origin,
            units=self.units if units is None else units,
            spacing_units=self.spacing_units)

    def voxel_centers_1d(self, axis: int) -> np.ndarray:
        n = self.dims[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.spacing[axis]


@dataclass(frozen=True)
class FieldStats:
    min: float
    max: float
    mean: float
    positive_min: float | None
    histogram: tuple[int, ...]  # HISTOGRAM_BINS equal-width bins over [min, max]

    def to_dict(self) -> dict:
        return {"min": self.min, "max": self.max, "mean": self.mean,
                "positive_min": self.positive_min,
                "histogram": list(self.histogram)}


def _resolve_numpy_dtype(dtype: str, endianness: str) -> np.dtype:
    if dtype not in _DTYPES:
        raise CubeFormatError(f"unsupported dtype {dtype!r}, expected one of {sorted(_DTYPES)}")
    if endianness not in ("little", "big"):
        raise CubeFormatError(f"unsupported endianness {endianness!r}")
    return np.dtype(("<" if endianness == "little" else ">") + "f" + str(_DTYPES[dtype]))


def load_cube(meta_path: str | os.PathLike) -> ScalarField:
    """Load a scalar field from a cube header file.

    Raises CubeFormatError for a malformed header, a data file whose length
    disagrees with the declared dims, or non-finite values under the
    ``reject`` NaN policy (``clamp_zero`` instead repairs them to 0.0).
    """
    meta_path = os.fspath(meta_path)
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            header = json.load(fh)
    except OSError as exc:
        raise CubeFormatError(f"cannot read cube header {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CubeFormatError(f"cube header {meta_path} is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise CubeFormatError(f"cube header {meta_path} must be a JSON object")

    for key in ("name", "dims", "spacing", "origin", "dtype", "data"):
        if key not in header:
            raise CubeFormatError(f"cube header {meta_path} missing required key {key!r}")

    dims = header["dims"]
    if (not isinstance(dims, list) or len(dims) != 3
            or any(not isinstance(d, int) or d < 2 for d in dims)):
        raise CubeFormatError(f"dims must be 3 integers >= 2, got {dims!r}")
    nx, ny, nz = dims
    spacing = header["spacing"]
    if (not isinstance(spacing, list) or len(spacing) != 3
            or any(not isinstance(s, (int, float)) or s <= 0 for s in spacing)):
        raise CubeFormatError(f"spacing must be 3 positive reals, got {spacing!r}")
    origin = header["origin"]
    if not isinstance(origin, list) or len(origin) != 3:
        raise CubeFormatError(f"origin must be 3 reals, got {origin!r}")

    endianness = header.get("endianness", "little")
    order = header.get("order", "x-fastest")
    if order not in ("x-fastest", "z-fastest"):
        raise CubeFormatError(f"unsupported order {order!r}")
    nan_policy = header.get("nan_policy", "reject")
    if nan_policy not in ("reject", "clamp_zero"):
        raise CubeFormatError(f"unsupported nan_policy {nan_policy!r}")
    np_dtype = _resolve_numpy_dtype(header["dtype"], endianness)

    data_path = os.path.join(os.path.dirname(meta_path), header["data"])
    try:
        raw = np.fromfile(data_path, dtype=np_dtype)
    except OSError as exc:
        raise CubeFormatError(f"cannot read cube data {data_path}: {exc}") from exc
    expected = nx * ny * nz
    if raw.size != expected:
        raise CubeFormatError(
            f"cube data {data_path} holds {raw.size} elements, "
            f"header declares {nx}x{ny}x{nz} = {expected}")

    # x-fastest linearization means Fortran order for an [x, y, z] array.
    values = raw.astype(np.float64).reshape((nx, ny, nz),
                                            order="F" if order == "x-fastest" else "C")
    bad = ~np.isfinite(values)
    if bad.any():
        if nan_policy == "reject":
            raise CubeFormatError(
                f"cube {meta_path} contains {int(bad.sum())} non-finite values "
                f"(nan_policy=reject)")
        values = np.where(bad, 0.0, values)

    return ScalarField(
        name=str(header["name"]), values=values,
        spacing=tuple(float(s) for s in spacing),
        origin=tuple(float(o) for o in origin),
        units=str(header.get("units", "")),
        spacing_units=str(header.get("spacing_units", "")))


def save_cube(field: ScalarField, meta_path: str | os.PathLike,
              dtype: str = "f64") -> None:
    """Write a field as a cube (JSON header + raw little-endian data file).

    At the default 64-bit width ``load_cube(save_cube(f))`` reproduces the
    values bit-identically.  The data file is written before the header so a
    failed write never leaves a header pointing at missing data.
    """
    meta_path = os.fspath(meta_path)
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    stem = meta_path[:-5] if meta_path.endswith(".json") else meta_path
    data_path = stem + ".raw"

    flat = field.values.ravel(order="F").astype("<f" + str(_DTYPES[dtype]))
    flat.tofile(data_path)

    header = {
        "name": field.name,
        "dims": list(field.dims),
        "spacing": list(field.spacing),
        "origin": list(field.origin),
        "units": field.units,
        "dtype": dtype,
        "endianness": "little",
        "order": "x-fastest",
        "nan_policy": "reject",
        "data": os.path.basename(data_path),
    }
    if field.spacing_units:
        header["spacing_units"] = field.spacing_units
    tmp_path = meta_path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, indent=2) + "\n")
    os.replace(tmp_path, meta_path)


def field_stats(field: ScalarField) -> FieldStats:
    """Exact min/max/mean plus a fixed 64-bin histogram over [min, max]."""
    values = field.values
    vmin = float(values.min())
    vmax = float(values.max())
    mean = float(values.mean())
    positive = values[values > 0]
    positive_min = float(positive.min()) if positive.size else None
    if vmin == vmax:
        hist = np.zeros(HISTOGRAM_BINS, dtype=np.int64)
        hist[0] = values.size
    else:
        hist, _ = np.histogram(values, bins=HISTOGRAM_BINS, range=(vmin, vmax))
    return FieldStats(min=vmin, max=vmax, mean=mean, positive_min=positive_min,
                      histogram=tuple(int(c) for c in hist))


def downsample(field: ScalarField, factor: int) -> ScalarField:
    """Block-average by an integer factor that divides every grid extent.

    Output voxel = arithmetic mean of its factor^3 input block; spacing is
    multiplied by the factor, origin preserved (so block centers coincide
    with the means of the input block centers).
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    nx, ny, nz = field.dims
    if nx % factor or ny % factor or nz % factor:
        raise ValueError(f"factor {factor} does not divide dims {field.dims}")
    ox, oy, oz = nx // factor, ny // factor, nz // factor
    if min(ox, oy, oz) < 2:
        raise ValueError(
            f"downsampling {field.dims} by {factor} gives extent < 2: {(ox, oy, oz)}")
    blocks = field.values.reshape(ox, factor, oy, factor, oz, factor)
    out = blocks.mean(axis=(1, 3, 5))
    return ScalarField(name=field.name, values=out,
                       spacing=tuple(s * factor for s in field.spacing),
                       origin=field.origin, units=field.units,
                       spacing_units=field.spacing_units)


def _trilinear_clamped(values: np.ndarray, spacing, origin,
                       points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of voxel-center samples at (N, 3) points.

    Points are clamped to the voxel-center hull, so queries within half a
    voxel of the domain boundary return edge samples.  No domain check.
    """
    dims = np.asarray(values.shape)
    u = (points - np.asarray(origin)) / np.asarray(spacing) - 0.5
    i0 = np.clip(np.floor(u).astype(np.int64), 0, dims - 2)
    f = np.clip(u - i0, 0.0, 1.0)
    ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    c000 = values[ix, iy, iz]
    c100 = values[ix + 1, iy, iz]
    c010 = values[ix, iy + 1, iz]
    c110 = values[ix + 1, iy + 1, iz]
    c001 = values[ix, iy, iz + 1]
    c101 = values[ix + 1, iy, iz + 1]
    c011 = values[ix, iy + 1, iz + 1]
    c111 = values[ix + 1, iy + 1, iz + 1]
    c00 = c000 + (c100 - c000) * fx
    c10 = c010 + (c110 - c010) * fx
    c01 = c001 + (c101 - c001) * fx
    c11 = c011 + (c111 - c011) * fx
    c0 = c00 + (c10 - c00) * fy
    c1 = c01 + (c11 - c01) * fy
    return c0 + (c1 - c0) * fz


def sample_trilinear_many(field: ScalarField, points: np.ndarray) -> np.ndarray:
    """Vectorized trilinear sampling with boundary clamping, (N, 3) -> (N,).

    Callers are responsible for keeping points inside the bounding box;
    outside points are clamped, not rejected.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return _trilinear_clamped(field.values, field.spacing, field.origin, pts)


def sample_trilinear(field: ScalarField, point) -> float:
    """Trilinear interpolation at one physical-space point.

    Raises OutsideDomainError when the point is outside
    ``[origin, origin + dims * spacing)``; the renderer treats that signal
    as vacuum.
    """
    p = np.asarray(point, dtype=np.float64)
    lo, hi = field.bbox
    if not (np.all(p >= lo) and np.all(p < hi)):
        raise OutsideDomainError(f"point {tuple(p)} outside box [{tuple(lo)}, {tuple(hi)})")
    return float(_trilinear_clamped(field.values, field.spacing, field.origin,
                                    p.reshape(1, 3))[0])


def check_same_grid(fields: Mapping[str, ScalarField]) -> None:
    """Raise ValueError unless all fields share dims, spacing and origin."""
    items = list(fields.items())
    ref_name, ref = items[0]
    for name, f in items[1:]:
        if not ref.same_grid(f):
            raise ValueError(
                f"fields {ref_name!r} and {name!r} are on different grids: "
                f"{ref.dims}/{ref.spacing}/{ref.origin} vs {f.dims}/{f.spacing}/{f.origin}")
