"""Deterministic CPU ray-marching renderer (emission-absorption model).

Front-to-back compositing with a fixed physical step: each segment of
length ds contributes ``a = 1 - exp(-k*ds)`` of its source ``emission/k``
and attenuates the transmittance by ``1 - a``.  The absorption coefficient
is floored at 1e-12 (inverse length) so pure-emission media integrate to
``emission * ds`` per segment instead of dividing by zero.  Integration
stops early once transmittance falls below 1e-3; the background is then
added through the remaining transmittance.

Two global controls mirror the live sliders of the target viewer: a
dimensionless emission intensity multiplying all emission, and a balance
in [0, 1] weighting channel 1 against channel 2 (channels past the first
two always get unit weight).

Rendering is deterministic: rays go through pixel centers, and results are
bit-identical regardless of how many workers the pixel rows are split
across.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import pngio
from .atlas import AtlasImage, AtlasMeta, unpack_atlas
from .errors import VoxkitError
from .field import ScalarField, check_same_grid, _trilinear_clamped

KAPPA_FLOOR = 1e-12
EXIT_TRANSMITTANCE = 1e-3


@dataclass(frozen=True)
class TransferFunction:
    """Piecewise-linear map from a normalized sample to emission and absorption.

    ``points`` is a sequence of (u, (r, g, b), kappa) control points with
    strictly increasing u; evaluation clamps below the first and above the
    last point.  Emission is per unit length and non-negative, kappa is an
    absorption coefficient per unit length.
    """

    points: tuple

    def __post_init__(self):
        pts = tuple((float(u), tuple(float(c) for c in rgb), float(k))
                    for u, rgb, k in self.points)
        if len(pts) < 2:
            raise ValueError("transfer function needs at least 2 control points")
        us = [p[0] for p in pts]
        if any(b <= a for a, b in zip(us, us[1:])):
            raise ValueError(f"control point u values must be strictly increasing: {us}")
        for u, rgb, k in pts:
            if len(rgb) != 3:
                raise ValueError("emission color must have 3 components")
            vals = (u, *rgb, k)
            if any(not np.isfinite(v) for v in vals) or any(c < 0 for c in rgb) or k < 0:
                raise ValueError(f"control point {(u, rgb, k)} must be finite and non-negative")
        object.__setattr__(self, "points", pts)

    def sample(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(emission (N, 3), kappa (N,)) at normalized samples u."""
        u = np.asarray(u, dtype=np.float64)
        us = np.array([p[0] for p in self.points])
        emission = np.empty(u.shape + (3,))
        for c in range(3):
            emission[..., c] = np.interp(u, us, [p[1][c] for p in self.points])
        kappa = np.interp(u, us, [p[2] for p in self.points])
        return emission, kappa


def grayscale_tf(kappa: float = 0.0, peak: float = 1.0) -> TransferFunction:
    """A simple ramp: black/transparent at u=0 to white emission at u=1."""
    return TransferFunction(((0.0, (0.0, 0.0, 0.0), 0.0),
                             (1.0, (peak, peak, peak), kappa)))


@dataclass(frozen=True)
class RenderParams:
    """Camera, stepping and the two live controls for a render."""

    eye: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov_deg: float = 45.0
    width: int = 320
    height: int = 240
    step_size: float | None = None  # None: half the smallest voxel spacing
    intensity: float = 1.0
    balance: float = 0.5
    tfs: tuple[TransferFunction, ...] = ()
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        eye = np.asarray(self.eye, dtype=np.float64)
        look = np.asarray(self.look_at, dtype=np.float64)
        up = np.asarray(self.up, dtype=np.float64)
        if np.allclose(eye, look):
            raise ValueError("eye and look_at coincide")
        fwd = look - eye
        if np.linalg.norm(np.cross(fwd, up)) == 0:
            raise ValueError("up vector is parallel to the view direction")
        if not 0 < self.fov_deg < 180:
            raise ValueError(f"fov_deg must be in (0, 180), got {self.fov_deg}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.intensity < 0:
            raise ValueError(f"intensity must be >= 0, got {self.intensity}")
        if not 0.0 <= self.balance <= 1.0:
            raise ValueError(f"balance must be in [0, 1], got {self.balance}")


@dataclass(frozen=True)
class Image:
    """Raw render output: (height, width, 3) float64, unclamped linear RGB.

    Values are clamped to [0, 1] only at 8-bit encoding time, so linearity
    properties survive in the in-memory image.
    """

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image pixels must be (H, W, 3), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def channel_weights(n_channels: int, balance: float) -> np.ndarray:
    """Balance weights the first two channels; any further channels get 1."""
    w = np.ones(n_channels)
    if n_channels >= 1:
        w[0] = balance
    if n_channels >= 2:
        w[1] = 1.0 - balance
    return w


def compose_emission(u1: float, u2: float, params: RenderParams) -> tuple[tuple, float]:
    """Blend two channels' transfer functions at one sample point.

    emission = intensity * (balance*E1(u1) + (1-balance)*E2(u2));
    absorption blends the same way without the intensity factor.
    """
    if len(params.tfs) < 2:
        raise ValueError("compose_emission needs two per-channel transfer functions")
    us = np.array([[u1], [u2]])
    w = channel_weights(2, params.balance)
    e1, k1 = params.tfs[0].sample(us[0])
    e2, k2 = params.tfs[1].sample(us[1])
    emission = params.intensity * (w[0] * e1[0] + w[1] * e2[0])
    kappa = w[0] * k1[0] + w[1] * k2[0]
    return tuple(float(c) for c in emission), float(kappa)


class VolumeSampler:
    """Samples one or more normalized channel fields on a shared grid."""

    def __init__(self, fields: Sequence[ScalarField]):
        if not fields:
            raise ValueError("need at least one channel field")
        named = {f"channel{i}": f for i, f in enumerate(fields)}
        check_same_grid(named)
        self.fields = tuple(fields)
        proto = fields[0]
        self.box_lo, self.box_hi = proto.bbox
        self.spacing = proto.spacing
        self.origin = proto.origin

    @property
    def n_channels(self) -> int:
        return len(self.fields)

    def sample(self, points: np.ndarray) -> np.ndarray:
        """(N, 3) physical points -> (N, n_channels) values clamped to [0, 1]."""
        out = np.empty((points.shape[0], len(self.fields)))
        for i, f in enumerate(self.fields):
            out[:, i] = _trilinear_clamped(f.values, f.spacing, f.origin, points)
        return np.clip(out, 0.0, 1.0)


def _resolve_source(source) -> VolumeSampler:
    if isinstance(source, VolumeSampler):
        return source
    if isinstance(source, tuple) and len(source) == 2 and isinstance(source[0], AtlasImage):
        image, meta = source
        fields = [unpack_atlas(image, meta, c.channel) for c in meta.channels]
        return VolumeSampler(fields)
    if isinstance(source, ScalarField):
        return VolumeSampler([source])
    if isinstance(source, Mapping):
        return VolumeSampler(list(source.values()))
    if isinstance(source, Sequence):
        return VolumeSampler(list(source))
    raise TypeError(f"cannot render from source of type {type(source)!r}")


def _intersect_box(origins, dirs, lo, hi):
    """Slab intersection; returns (t_enter, t_exit) with t_enter >= 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_lo = (lo - origins) * inv
        t_hi = (hi - origins) * inv
    near = np.minimum(t_lo, t_hi)
    far = np.maximum(t_lo, t_hi)
    # rays parallel to a slab pair: inside -> (-inf, inf), outside -> empty;
    # the override must happen after ordering or the empty interval is lost
    parallel = dirs == 0
    if parallel.any():
        inside = (origins >= lo) & (origins < hi)
        near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
        far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
    t_near = np.maximum(near.max(axis=1), 0.0)
    t_far = far.min(axis=1)
    return t_near, t_far


def _march(origins: np.ndarray, dirs: np.ndarray, sampler: VolumeSampler,
           params: RenderParams, step: float) -> np.ndarray:
    """Integrate N rays; returns (N, 3) colors."""
    n = origins.shape[0]
    n_channels = sampler.n_channels
    if len(params.tfs) < n_channels:
        raise ValueError(f"{n_channels} channels but only {len(params.tfs)} "
                         f"transfer functions")
    weights = channel_weights(n_channels, params.balance)
    background = np.asarray(params.background, dtype=np.float64)

    t0, t1 = _intersect_box(origins, dirs, sampler.box_lo, sampler.box_hi)
    span = t1 - t0
    color = np.zeros((n, 3))
    trans = np.ones(n)
    alive = span > 0.0

    k = 0
    while alive.any():
        offset = k * step
        seg = np.minimum(step, span[alive] - offset)
        pos = origins[alive] + dirs[alive] * (t0[alive] + offset)[:, None]
        u = sampler.sample(pos)

        emission = np.zeros((pos.shape[0], 3))
        kappa = np.zeros(pos.shape[0])
        for c in range(n_channels):
            e_c, k_c = params.tfs[c].sample(u[:, c])
            emission += weights[c] * e_c
            kappa += weights[c] * k_c
        emission *= params.intensity

        kappa_eff = np.maximum(kappa, KAPPA_FLOOR)
        a = -np.expm1(-kappa_eff * seg)
        contrib = (trans[alive] * a / kappa_eff)[:, None] * emission
        color[alive] += contrib
        trans[alive] *= 1.0 - a

        k += 1
        still = np.zeros(n, dtype=bool)
        still[alive] = (trans[alive] >= EXIT_TRANSMITTANCE) & (span[alive] - k * step > 0)
        alive = still

    color += trans[:, None] * background
    return color


def integrate_ray(origin, direction, source, params: RenderParams) -> tuple:
    """Integrate a single ray (direction must be unit length)."""
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"direction must be normalized, |d| = {norm}")
    sampler = _resolve_source(source)
    step = params.step_size if params.step_size is not None else min(sampler.spacing) / 2
    rgb = _march(np.asarray(origin, dtype=np.float64).reshape(1, 3),
                 d.reshape(1, 3), sampler, params, step)
    return tuple(rgb[0])


def _camera_rays(params: RenderParams) -> tuple[np.ndarray, np.ndarray]:
    eye = np.asarray(params.eye, dtype=np.float64)
    fwd = np.asarray(params.look_at, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(params.up, dtype=np.float64))
    right /= np.linalg.norm(right)
    up = np.cross(right, fwd)

    half_h = np.tan(np.radians(params.fov_deg) / 2)
    half_w = half_h * params.width / params.height
    xs = (2 * (np.arange(params.width) + 0.5) / params.width - 1) * half_w
    ys = (1 - 2 * (np.arange(params.height) + 0.5) / params.height) * half_h
    dirs = (fwd[None, None, :]
            + xs[None, :, None] * right[None, None, :]
            + ys[:, None, None] * up[None, None, :])
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    origins = np.broadcast_to(eye, dirs.shape)
    return origins.reshape(-1, 3), dirs.reshape(-1, 3)


def render_volume(source, params: RenderParams, workers: int = 1) -> Image:
    """Render a pinhole-camera view of the volume.

    ``source`` is a ScalarField, a mapping/sequence of channel fields
    (values already normalized to [0, 1]), or an (AtlasImage, AtlasMeta)
    pair.  Output is identical for any worker count.
    """
    sampler = _resolve_source(source)
    step = params.step_size if params.step_size is not None else min(sampler.spacing) / 2
    origins, dirs = _camera_rays(params)
    n = origins.shape[0]
    out = np.empty((n, 3))

    chunks = max(1, min(workers, params.height))
    bounds = [(params.width * (params.height * i // chunks),
               params.width * (params.height * (i + 1) // chunks))
              for i in range(chunks)]

    def run(bound):
        lo, hi = bound
        out[lo:hi] = _march(origins[lo:hi], dirs[lo:hi], sampler, params, step)

    if chunks == 1:
        run(bounds[0])
    else:
        with ThreadPoolExecutor(max_workers=chunks) as pool:
            list(pool.map(run, bounds))
    return Image(out.reshape(params.height, params.width, 3))


def write_image(image: Image, path: str | os.PathLike) -> None:
    """Encode as an 8-bit RGB PNG: clamp to [0, 1], then round half up."""
    clamped = np.clip(image.pixels, 0.0, 1.0)
    samples = np.floor(clamped * 255.0 + 0.5).astype(np.uint8)
    pngio.write_png(path, samples)


def load_scene(path: str | os.PathLike) -> RenderParams:
    """Read camera/stepping/transfer-function parameters from a JSON scene file."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        tfs = tuple(
            TransferFunction(tuple((p[0], tuple(p[1]), p[2])
                                   for p in ch["tf"]["points"]))
            for ch in doc.get("channels", []))
        return RenderParams(
            eye=tuple(doc["eye"]), look_at=tuple(doc["look_at"]),
            up=tuple(doc.get("up", (0.0, 0.0, 1.0))),
            fov_deg=float(doc.get("fov_deg", 45.0)),
            width=int(doc.get("width", 320)), height=int(doc.get("height", 240)),
            step_size=(float(doc["step"]) if doc.get("step") is not None else None),
            intensity=float(doc.get("intensity", 1.0)),
            balance=float(doc.get("balance", 0.5)),
            tfs=tfs,
            background=tuple(doc.get("background", (0.0, 0.0, 0.0))))
    except (KeyError, TypeError, IndexError) as exc:
        raise VoxkitError(f"malformed scene file {path}: {exc}") from exc
