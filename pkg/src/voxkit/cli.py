"""Command-line frontend: every pipeline stage as a thin subcommand.

Exit codes: 0 success, 1 usage error (bad flags, inconsistent arguments),
2 runtime error (I/O failures, malformed inputs).  Every output artifact is
named by an explicit flag; artifacts are byte-identical to what the
corresponding library call produces.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import tempfile
import time

from . import __version__
from .atlas import (ChannelSpec, NormalizationSpec, default_normalization,
                    pack_atlas, read_atlas, write_atlas)
from .errors import VoxkitError
from .expr import evaluate_expression, parse_expression
from .field import field_stats, load_cube, save_cube
from .mesh import compute_vertex_normals, marching_cubes, multilayer_surfaces
from .meshio import export_mesh, infer_format
from .render import load_scene, render_volume, write_image
from .service import AnalysisServer, ServerConfig


class UsageError(Exception):
    """Argument-level inconsistency; exits 1 without touching outputs."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; the contract says 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_inputs(specs: list[str]) -> dict:
    """--in entries are 'path' (name from header) or 'name=path'."""
    fields = {}
    for spec in specs:
        name, eq, path = spec.partition("=")
        if not eq:
            f = load_cube(spec)
            fields[f.name] = f
        else:
            fields[name] = load_cube(path)
    return fields


def _parse_channel(spec: str, fields: dict) -> ChannelSpec:
    """R=rho:log10:1e-26:1e-22, with :lo:hi (or both mode and bounds) optional."""
    channel, eq, rest = spec.partition("=")
    if not eq or channel not in "RGBA" or len(channel) != 1:
        raise UsageError(f"bad --channel {spec!r}: expected R=<field>[:mode[:lo:hi]]")
    parts = rest.split(":")
    field_name = parts[0]
    if field_name not in fields:
        raise UsageError(f"--channel {spec!r} references field {field_name!r}, "
                         f"which is not among the loaded inputs {sorted(fields)}")
    if len(parts) == 1:
        norm = default_normalization(fields[field_name])
    elif len(parts) == 2:
        if parts[1] not in ("linear", "log10"):
            raise UsageError(f"bad normalization mode {parts[1]!r}")
        norm = default_normalization(fields[field_name], mode=parts[1])
    elif len(parts) == 4:
        try:
            norm = NormalizationSpec(parts[1], float(parts[2]), float(parts[3]))
        except ValueError as exc:
            raise UsageError(f"bad --channel {spec!r}: {exc}") from exc
    else:
        raise UsageError(f"bad --channel {spec!r}: expected R=<field>[:mode[:lo:hi]]")
    return ChannelSpec(channel=channel, field=field_name, spec=norm)


def _parse_layer(spec: str) -> tuple:
    """iso:RRGGBB:opacity, e.g. 0.3:ff8800:0.5."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise UsageError(f"bad --layer {spec!r}: expected iso:RRGGBB:opacity")
    try:
        iso = float(parts[0])
        rgb = parts[1].lstrip("#")
        color = tuple(int(rgb[i:i + 2], 16) / 255.0 for i in (0, 2, 4))
        opacity = float(parts[2])
    except (ValueError, IndexError) as exc:
        raise UsageError(f"bad --layer {spec!r}: {exc}") from exc
    if not 0.0 < opacity <= 1.0:
        raise UsageError(f"bad --layer {spec!r}: opacity must be in (0, 1]")
    return iso, color, opacity


def cmd_info(args) -> int:
    field = load_cube(args.cube)
    stats = field_stats(field)
    if args.format == "json":
        doc = {"name": field.name, "dims": list(field.dims),
               "spacing": list(field.spacing), "origin": list(field.origin),
               "units": field.units, **stats.to_dict()}
        print(json.dumps(doc, indent=2))
    else:
        print(f"name:     {field.name}")
        print(f"dims:     {field.dims[0]} x {field.dims[1]} x {field.dims[2]}")
        print(f"spacing:  {field.spacing}")
        print(f"origin:   {field.origin}")
        print(f"units:    {field.units or '-'}")
        print(f"min/mean/max: {stats.min:.6g} / {stats.mean:.6g} / {stats.max:.6g}")
        if stats.positive_min is not None:
            print(f"positive min: {stats.positive_min:.6g}")
    return 0


def cmd_eval(args) -> int:
    try:
        expr = parse_expression(args.expr)
    except VoxkitError as exc:  # a malformed expression argument is a usage error
        raise UsageError(str(exc)) from exc
    fields = _load_inputs(args.inputs)
    result, degenerate = evaluate_expression(expr, fields, name=args.name)
    save_cube(result, args.out)
    print(f"wrote {args.out} ({result.dims[0]}x{result.dims[1]}x{result.dims[2]}, "
          f"{degenerate} degenerate voxel substitutions)")
    return 0


def cmd_pack(args) -> int:
    fields = _load_inputs(args.inputs)
    if not fields:
        raise UsageError("pack needs at least one --in cube")
    assignment = [_parse_channel(c, fields) for c in args.channel]
    image, meta = pack_atlas(fields, assignment, slice_axis=args.axis,
                             bit_depth=args.depth)
    write_atlas(image, meta, args.out)
    print(f"wrote {args.out}.png ({image.width}x{image.height}, "
          f"{meta.bit_depth}-bit) and {args.out}.json")
    return 0


def cmd_render(args) -> int:
    params = load_scene(args.scene)
    source = _render_source(args.input)
    image = render_volume(source, params, workers=args.workers)
    write_image(image, args.out)
    print(f"wrote {args.out} ({image.width}x{image.height})")
    return 0


def _render_source(spec: str):
    if os.path.exists(spec + ".png") and os.path.exists(spec + ".json"):
        return read_atlas(spec)
    if spec.endswith(".png"):
        return read_atlas(spec[:-4])
    fields = _load_inputs(spec.split(","))
    return fields


def cmd_iso(args) -> int:
    fmt = args.format or infer_format(args.out)
    field = load_cube(args.cube)
    mesh = marching_cubes(field, args.value)
    if args.normals and not mesh.is_empty():
        mesh = compute_vertex_normals(mesh, field)
    export_mesh(mesh, args.out, fmt=fmt)
    print(f"wrote {args.out} ({mesh.vertex_count} vertices, "
          f"{mesh.triangle_count} triangles)")
    return 0


def cmd_layers(args) -> int:
    fmt = args.format or infer_format(args.out)
    field = load_cube(args.cube)
    layer_specs = [_parse_layer(s) for s in args.layer]
    scene = multilayer_surfaces(field, layer_specs, with_normals=args.normals)
    export_mesh(scene, args.out, fmt=fmt)
    total = sum(l.mesh.triangle_count for l in scene.layers)
    print(f"wrote {args.out} ({len(scene.layers)} layers, {total} triangles)")
    return 0


def cmd_serve(args) -> int:
    config = ServerConfig.from_file(args.config)
    server = AnalysisServer(config)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def cmd_bench(args) -> int:
    if args.repeat < 1:
        raise UsageError("--repeat must be >= 1")
    field = load_cube(args.cube)
    runs_ms = []
    with tempfile.TemporaryDirectory(prefix="voxkit-bench-") as tmp:
        out = os.path.join(tmp, "mesh.obj")
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            mesh = marching_cubes(field, args.value)
            if not mesh.is_empty():
                mesh = compute_vertex_normals(mesh, field)
            export_mesh(mesh, out, fmt="obj")
            runs_ms.append((time.perf_counter() - t0) * 1000.0)
    median = statistics.median(runs_ms)
    if args.format == "json":
        print(json.dumps({"runs_ms": runs_ms, "median_ms": median,
                          "vertices": mesh.vertex_count,
                          "triangles": mesh.triangle_count}))
    else:
        for i, ms in enumerate(runs_ms):
            print(f"run {i + 1}: {ms:.1f} ms")
        print(f"median: {median:.1f} ms")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="voxkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"voxkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("info", help="print cube statistics")
    p.add_argument("cube")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("eval", help="evaluate a field expression over input cubes")
    p.add_argument("expr")
    p.add_argument("--in", dest="inputs", action="append", default=[],
                   metavar="NAME=CUBE", required=True)
    p.add_argument("--out", required=True, metavar="CUBE")
    p.add_argument("--name", default="expr", help="name of the output field")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pack", help="pack fields into a channel-packed texture atlas")
    p.add_argument("--in", dest="inputs", action="append", default=[],
                   metavar="CUBE", required=True)
    p.add_argument("--channel", action="append", default=[], required=True,
                   metavar="C=FIELD[:MODE[:LO:HI]]")
    p.add_argument("--axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--depth", type=int, choices=(8, 16), default=16)
    p.add_argument("--out", required=True, metavar="PREFIX")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("render", help="ray-march a volume to a PNG image")
    p.add_argument("--scene", required=True, metavar="SCENE_JSON")
    p.add_argument("--in", dest="input", required=True,
                   metavar="ATLAS_PREFIX|CUBE[,CUBE...]")
    p.add_argument("--out", required=True, metavar="PNG")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("iso", help="extract an iso-surface mesh")
    p.add_argument("cube")
    p.add_argument("--value", type=float, required=True)
    p.add_argument("--format", choices=("obj", "gltf"))
    p.add_argument("--out", required=True, metavar="MESH")
    p.add_argument("--no-normals", dest="normals", action="store_false")
    p.set_defaults(func=cmd_iso)

    p = sub.add_parser("layers", help="extract multiple iso-surfaces with materials")
    p.add_argument("cube")
    p.add_argument("--layer", action="append", default=[], required=True,
                   metavar="ISO:RRGGBB:OPACITY")
    p.add_argument("--format", choices=("obj", "gltf"))
    p.add_argument("--out", required=True, metavar="MESH")
    p.add_argument("--no-normals", dest="normals", action="store_false")
    p.set_defaults(func=cmd_layers)

    p = sub.add_parser("serve", help="run the HTTP analysis-job service")
    p.add_argument("--config", required=True, metavar="CONFIG_JSON")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="time an analysis pipeline")
    bench_sub = p.add_subparsers(dest="bench_kind", required=True, parser_class=_Parser)
    b = bench_sub.add_parser("iso", help="time iso-surface extraction + export")
    b.add_argument("cube")
    b.add_argument("--value", type=float, required=True)
    b.add_argument("--repeat", type=int, default=5)
    b.add_argument("--format", choices=("text", "json"), default="text")
    b.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"voxkit: error: {exc}", file=sys.stderr)
        return 1
    except (VoxkitError, OSError, ValueError) as exc:
        print(f"voxkit: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
