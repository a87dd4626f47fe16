"""Mesh interchange: OBJ (plus .mtl sidecar) and glTF 2.0 (plus .bin buffer).

Exports are deterministic byte-for-byte.  OBJ floats use repr(), the
shortest exact round-trip form, so export -> import -> export is a fixed
point.  A bare TriangleMesh exports as pure geometry; a LayeredScene gets
one named object per layer with a material carrying the layer color (Kd /
baseColorFactor) and opacity (d / base color alpha, alpha-blended in glTF).
Empty layers are written as empty objects (OBJ) or mesh-less nodes (glTF).
"""

from __future__ import annotations

import json
import os
from typing import Union

import numpy as np

from .errors import MeshFormatError
from .mesh import Layer, LayeredScene, TriangleMesh

Scene = Union[TriangleMesh, LayeredScene]

_GLTF_FLOAT = 5126
_GLTF_UINT32 = 5125
_GLTF_UINT16 = 5123
_DEFAULT_COLOR = (0.8, 0.8, 0.8)


def infer_format(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        return "obj"
    if ext == ".gltf":
        return "gltf"
    raise MeshFormatError(f"cannot infer mesh format from {path!r} (use obj or gltf)")


def export_mesh(scene: Scene, path: str | os.PathLike, fmt: str | None = None) -> None:
    """Write a mesh or layered scene to ``path`` as OBJ or glTF."""
    path = os.fspath(path)
    fmt = fmt or infer_format(path)
    if fmt == "obj":
        _write_obj(scene, path)
    elif fmt == "gltf":
        _write_gltf(scene, path)
    else:
        raise MeshFormatError(f"unsupported mesh format {fmt!r}")


def import_mesh(path: str | os.PathLike) -> Scene:
    """Read a mesh file written by export_mesh (or a compatible subset)."""
    path = os.fspath(path)
    fmt = infer_format(path)
    return _read_obj(path) if fmt == "obj" else _read_gltf(path)


# --- OBJ -----------------------------------------------------------------

def _obj_geometry_lines(out: list, mesh: TriangleMesh, base: int) -> int:
    """Append v/vn/f lines; returns the new 0-based vertex base."""
    for x, y, z in mesh.vertices.tolist():
        out.append(f"v {x!r} {y!r} {z!r}")
    with_normals = mesh.normals is not None and len(mesh.normals)
    if with_normals:
        for x, y, z in mesh.normals.tolist():
            out.append(f"vn {x!r} {y!r} {z!r}")
    for a, b, c in mesh.triangles.tolist():
        a, b, c = a + 1 + base, b + 1 + base, c + 1 + base
        if with_normals:
            out.append(f"f {a}//{a} {b}//{b} {c}//{c}")
        else:
            out.append(f"f {a} {b} {c}")
    return base + mesh.vertex_count


def _write_obj(scene: Scene, path: str) -> None:
    lines: list[str] = []
    if isinstance(scene, TriangleMesh):
        lines.append("o surface")
        _obj_geometry_lines(lines, scene, 0)
    else:
        stem = os.path.splitext(os.path.basename(path))[0]
        mtl_path = os.path.splitext(path)[0] + ".mtl"
        lines.append(f"mtllib {stem}.mtl")
        mtl_lines: list[str] = []
        base = 0
        for idx, layer in enumerate(scene.layers):
            name = f"layer_{idx:03d}"
            lines.append(f"o {name}")
            lines.append(f"usemtl {name}")
            base = _obj_geometry_lines(lines, layer.mesh, base)
            r, g, b = layer.color
            mtl_lines += [f"newmtl {name}", f"Kd {r!r} {g!r} {b!r}",
                          f"d {layer.opacity!r}", ""]
        with open(mtl_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(mtl_lines).rstrip("\n") + "\n")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_mtl(path: str) -> dict:
    materials: dict[str, dict] = {}
    current = None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "newmtl":
                    current = {"Kd": _DEFAULT_COLOR, "d": 1.0}
                    materials[parts[1]] = current
                elif parts[0] == "Kd" and current is not None:
                    current["Kd"] = tuple(float(v) for v in parts[1:4])
                elif parts[0] == "d" and current is not None:
                    current["d"] = float(parts[1])
    except OSError:
        return {}
    return materials


def _read_obj(path: str) -> Scene:
    verts: list = []
    norms: list = []
    groups: list[dict] = []
    materials: dict[str, dict] = {}
    layered = False

    def new_group(name):
        groups.append({"name": name, "material": None, "faces": []})

    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                tag = parts[0]
                if tag == "v":
                    verts.append([float(v) for v in parts[1:4]])
                elif tag == "vn":
                    norms.append([float(v) for v in parts[1:4]])
                elif tag in ("o", "g"):
                    new_group(parts[1] if len(parts) > 1 else "")
                elif tag == "usemtl":
                    layered = True
                    if not groups:
                        new_group("")
                    groups[-1]["material"] = parts[1]
                elif tag == "mtllib":
                    materials = _parse_mtl(os.path.join(os.path.dirname(path), parts[1]))
                elif tag == "f":
                    if not groups:
                        new_group("")
                    corners = []
                    for spec in parts[1:]:
                        fields = spec.split("/")
                        vi = int(fields[0])
                        ni = int(fields[2]) if len(fields) > 2 and fields[2] else None
                        if vi < 0 or (ni is not None and ni < 0):
                            raise MeshFormatError(
                                f"{path}:{lineno}: negative OBJ indices not supported")
                        corners.append((vi - 1, None if ni is None else ni - 1))
                    if len(corners) != 3:
                        raise MeshFormatError(
                            f"{path}:{lineno}: only triangle faces supported")
                    groups[-1]["faces"].append(corners)
    except OSError as exc:
        raise MeshFormatError(f"cannot read {path}: {exc}") from exc

    vert_arr = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    norm_arr = np.asarray(norms, dtype=np.float64).reshape(-1, 3)

    def build(groups_subset) -> TriangleMesh:
        faces = [c for g in groups_subset for c in g["faces"]]
        if not faces:
            return TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))
        tri = np.array([[c[0] for c in f] for f in faces], dtype=np.int64)
        used = np.unique(tri)
        if used.size and (used[0] < 0 or used[-1] >= len(vert_arr)):
            raise MeshFormatError(f"{path}: face references missing vertex")
        remap = np.zeros(len(vert_arr), dtype=np.int64)
        remap[used] = np.arange(len(used))
        normals = None
        if len(norm_arr):
            normals = np.zeros((len(used), 3))
            for f in faces:
                for vi, ni in f:
                    if ni is not None:
                        normals[remap[vi]] = norm_arr[ni]
        return TriangleMesh(vert_arr[used], remap[tri], normals)

    if not layered:
        return build(groups)
    layers = []
    for g in groups:
        mat = materials.get(g["material"], {"Kd": _DEFAULT_COLOR, "d": 1.0})
        layers.append(Layer(mesh=build([g]), color=tuple(mat["Kd"]),
                            opacity=float(mat["d"]), iso=float("nan")))
    return LayeredScene(tuple(layers))


# --- glTF ----------------------------------------------------------------

def _write_gltf(scene: Scene, path: str) -> None:
    bare = isinstance(scene, TriangleMesh)
    layers = ((Layer(scene, _DEFAULT_COLOR, 1.0, float("nan")),)
              if bare else scene.layers)
    stem = os.path.splitext(os.path.basename(path))[0]
    bin_path = os.path.splitext(path)[0] + ".bin"

    buffer = bytearray()
    views: list = []
    accessors: list = []
    meshes: list = []
    materials: list = []
    nodes: list = []

    def add_view(blob: bytes) -> int:
        while len(buffer) % 4:
            buffer.append(0)
        views.append({"buffer": 0, "byteOffset": len(buffer), "byteLength": len(blob)})
        buffer.extend(blob)
        return len(views) - 1

    for idx, layer in enumerate(layers):
        name = "surface" if bare else f"layer_{idx:03d}"
        mesh = layer.mesh
        node: dict = {"name": name}
        if not mesh.is_empty():
            pos32 = np.ascontiguousarray(mesh.vertices, dtype="<f4")
            vi = add_view(pos32.tobytes())
            accessors.append({
                "bufferView": vi, "componentType": _GLTF_FLOAT, "count": len(pos32),
                "type": "VEC3",
                "min": [float(v) for v in pos32.min(axis=0)],
                "max": [float(v) for v in pos32.max(axis=0)]})
            attributes = {"POSITION": len(accessors) - 1}
            if mesh.normals is not None and len(mesh.normals):
                nrm32 = np.ascontiguousarray(mesh.normals, dtype="<f4")
                ni = add_view(nrm32.tobytes())
                accessors.append({"bufferView": ni, "componentType": _GLTF_FLOAT,
                                  "count": len(nrm32), "type": "VEC3"})
                attributes["NORMAL"] = len(accessors) - 1
            idx32 = np.ascontiguousarray(mesh.triangles.reshape(-1), dtype="<u4")
            ii = add_view(idx32.tobytes())
            accessors.append({"bufferView": ii, "componentType": _GLTF_UINT32,
                              "count": len(idx32), "type": "SCALAR"})
            r, g, b = layer.color
            materials.append({
                "name": name,
                "pbrMetallicRoughness": {
                    "baseColorFactor": [r, g, b, layer.opacity],
                    "metallicFactor": 0.0, "roughnessFactor": 1.0},
                "alphaMode": "OPAQUE" if bare else "BLEND",
                "doubleSided": True})
            meshes.append({"name": name, "primitives": [{
                "attributes": attributes, "indices": len(accessors) - 1,
                "material": len(materials) - 1, "mode": 4}]})
            node["mesh"] = len(meshes) - 1
        nodes.append(node)

    tree = {
        "asset": {"version": "2.0", "generator": "voxkit"},
        "scene": 0,
        "scenes": [{"nodes": list(range(len(nodes)))}],
        "nodes": nodes,
    }
    if meshes:
        tree["meshes"] = meshes
        tree["materials"] = materials
        tree["accessors"] = accessors
        tree["bufferViews"] = views
        tree["buffers"] = [{"uri": os.path.basename(bin_path),
                            "byteLength": len(buffer)}]
        with open(bin_path, "wb") as fh:
            fh.write(bytes(buffer))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(tree, indent=2) + "\n")


def _read_gltf(path: str) -> Scene:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            tree = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MeshFormatError(f"cannot read {path}: {exc}") from exc

    blob = b""
    buffers = tree.get("buffers", [])
    if buffers:
        uri = buffers[0].get("uri", "")
        bin_path = os.path.join(os.path.dirname(path), uri)
        try:
            with open(bin_path, "rb") as fh:
                blob = fh.read()
        except OSError as exc:
            raise MeshFormatError(f"cannot read glTF buffer {bin_path}: {exc}") from exc

    def read_accessor(index: int) -> np.ndarray:
        acc = tree["accessors"][index]
        view = tree["bufferViews"][acc["bufferView"]]
        start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
        comp = acc["componentType"]
        dtype = {_GLTF_FLOAT: "<f4", _GLTF_UINT32: "<u4", _GLTF_UINT16: "<u2"}.get(comp)
        if dtype is None:
            raise MeshFormatError(f"{path}: unsupported accessor componentType {comp}")
        width = {"SCALAR": 1, "VEC3": 3}.get(acc["type"])
        if width is None:
            raise MeshFormatError(f"{path}: unsupported accessor type {acc['type']}")
        n = acc["count"] * width
        arr = np.frombuffer(blob, dtype=dtype, count=n, offset=start)
        return arr.reshape(acc["count"], width) if width > 1 else arr

    layers = []
    names = []
    for node in tree.get("nodes", []):
        names.append(node.get("name", ""))
        if "mesh" not in node:
            layers.append(Layer(TriangleMesh(np.empty((0, 3)),
                                             np.empty((0, 3), dtype=np.int64)),
                                _DEFAULT_COLOR, 1.0, float("nan")))
            continue
        mesh_doc = tree["meshes"][node["mesh"]]
        prim = mesh_doc["primitives"][0]
        pos = read_accessor(prim["attributes"]["POSITION"]).astype(np.float64)
        normals = None
        if "NORMAL" in prim["attributes"]:
            normals = read_accessor(prim["attributes"]["NORMAL"]).astype(np.float64)
        tri = read_accessor(prim["indices"]).astype(np.int64).reshape(-1, 3)
        color, opacity = _DEFAULT_COLOR, 1.0
        if "material" in prim:
            factor = (tree.get("materials", [])[prim["material"]]
                      .get("pbrMetallicRoughness", {})
                      .get("baseColorFactor", [*_DEFAULT_COLOR, 1.0]))
            color, opacity = tuple(factor[:3]), float(factor[3])
        layers.append(Layer(TriangleMesh(pos, tri, normals), color, opacity,
                            float("nan")))

    if not layers:
        raise MeshFormatError(f"{path}: no nodes")
    if len(layers) == 1 and names[0] == "surface":
        return layers[0].mesh
    return LayeredScene(tuple(layers))
