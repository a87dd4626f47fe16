import json

import numpy as np
import pytest

from voxkit import (LayeredScene, MeshFormatError, TriangleMesh,
                    compute_vertex_normals, export_mesh, import_mesh,
                    marching_cubes, mesh_diagnostics, multilayer_surfaces)
from voxkit.mesh import Layer

from conftest import radial_distance_field


@pytest.fixture(scope="module")
def sphere_mesh():
    f = radial_distance_field(32)
    return compute_vertex_normals(marching_cubes(f, 0.3), f)


@pytest.fixture(scope="module")
def three_layer_scene():
    f = radial_distance_field(24)
    return multilayer_surfaces(f, [(0.2, (1.0, 0.0, 0.0), 0.25),
                                   (0.3, (0.0, 1.0, 0.0), 0.5),
                                   (0.4, (0.0, 0.0, 1.0), 0.9)])


class TestObj:
    def test_roundtrip_exact(self, tmp_path, sphere_mesh):
        path = tmp_path / "sphere.obj"
        export_mesh(sphere_mesh, path)
        back = import_mesh(path)
        assert isinstance(back, TriangleMesh)
        assert back.triangle_count == sphere_mesh.triangle_count
        assert np.array_equal(back.vertices, sphere_mesh.vertices)
        assert np.array_equal(back.triangles, sphere_mesh.triangles)
        assert np.array_equal(back.normals, sphere_mesh.normals)
        a0 = mesh_diagnostics(sphere_mesh).surface_area
        a1 = mesh_diagnostics(back).surface_area
        assert a1 == pytest.approx(a0, rel=1e-9)

    def test_bare_mesh_has_no_material_references(self, tmp_path, sphere_mesh):
        path = tmp_path / "bare.obj"
        export_mesh(sphere_mesh, path)
        text = path.read_text()
        assert "mtllib" not in text and "usemtl" not in text
        assert text.startswith("o surface\n")

    def test_layered_obj_carries_materials(self, tmp_path, three_layer_scene):
        path = tmp_path / "scene.obj"
        export_mesh(three_layer_scene, path)
        text = path.read_text()
        assert text.startswith("mtllib scene.mtl\n")
        assert text.count("o layer_") == 3
        mtl = (tmp_path / "scene.mtl").read_text()
        assert mtl.count("newmtl") == 3
        assert "d 0.25" in mtl and "d 0.5" in mtl and "d 0.9" in mtl
        assert "Kd 1.0 0.0 0.0" in mtl

    def test_layered_roundtrip(self, tmp_path, three_layer_scene):
        path = tmp_path / "scene.obj"
        export_mesh(three_layer_scene, path)
        back = import_mesh(path)
        assert isinstance(back, LayeredScene)
        assert len(back.layers) == 3
        for orig, got in zip(three_layer_scene.layers, back.layers):
            assert got.opacity == orig.opacity
            assert got.color == orig.color
            assert np.array_equal(got.mesh.vertices, orig.mesh.vertices)
            assert np.array_equal(got.mesh.triangles, orig.mesh.triangles)

    def test_empty_mesh_valid_file(self, tmp_path):
        empty = TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))
        path = tmp_path / "empty.obj"
        export_mesh(empty, path)
        back = import_mesh(path)
        assert back.triangle_count == 0

    def test_export_deterministic(self, tmp_path, sphere_mesh):
        export_mesh(sphere_mesh, tmp_path / "a.obj")
        export_mesh(sphere_mesh, tmp_path / "b.obj")
        assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()

    def test_import_export_fixpoint(self, tmp_path, sphere_mesh):
        export_mesh(sphere_mesh, tmp_path / "a.obj")
        export_mesh(import_mesh(tmp_path / "a.obj"), tmp_path / "b.obj")
        assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()


class TestGltf:
    def test_three_layer_structure(self, tmp_path, three_layer_scene):
        path = tmp_path / "scene.gltf"
        export_mesh(three_layer_scene, path)
        tree = json.loads(path.read_text())
        assert len(tree["nodes"]) == 3
        assert len(tree["materials"]) == 3
        opacities = [m["pbrMetallicRoughness"]["baseColorFactor"][3]
                     for m in tree["materials"]]
        assert opacities == [0.25, 0.5, 0.9]
        assert all(m["alphaMode"] == "BLEND" for m in tree["materials"])
        assert (tmp_path / "scene.bin").exists()

    def test_roundtrip_positions_within_float32(self, tmp_path, sphere_mesh):
        path = tmp_path / "m.gltf"
        export_mesh(sphere_mesh, path)
        back = import_mesh(path)
        assert isinstance(back, TriangleMesh)
        assert np.array_equal(back.triangles, sphere_mesh.triangles)
        assert np.max(np.abs(back.vertices - sphere_mesh.vertices)) <= 1e-6
        assert back.normals is not None

    def test_empty_scene_valid(self, tmp_path, sphere_mesh):
        empty = TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))
        path = tmp_path / "empty.gltf"
        export_mesh(empty, path)
        tree = json.loads(path.read_text())
        assert "buffers" not in tree
        back = import_mesh(path)
        assert back.triangle_count == 0

    def test_mixed_empty_layer(self, tmp_path):
        f = radial_distance_field(16)
        scene = multilayer_surfaces(f, [(0.3, (1, 0, 0), 1.0),
                                        (99.0, (0, 1, 0), 0.5)])
        path = tmp_path / "mixed.gltf"
        export_mesh(scene, path)
        back = import_mesh(path)
        assert back.layers[0].mesh.triangle_count > 0
        assert back.layers[1].mesh.triangle_count == 0

    def test_position_accessor_has_bounds(self, tmp_path, sphere_mesh):
        path = tmp_path / "m.gltf"
        export_mesh(sphere_mesh, path)
        tree = json.loads(path.read_text())
        pos_acc = tree["accessors"][tree["meshes"][0]["primitives"][0]
                                    ["attributes"]["POSITION"]]
        assert len(pos_acc["min"]) == 3 and len(pos_acc["max"]) == 3
        assert pos_acc["min"][0] <= pos_acc["max"][0]

    def test_export_deterministic(self, tmp_path, three_layer_scene):
        # the JSON references its own .bin by name, so determinism is
        # defined for same-named exports
        for d in ("one", "two"):
            (tmp_path / d).mkdir()
            export_mesh(three_layer_scene, tmp_path / d / "scene.gltf")
        assert ((tmp_path / "one" / "scene.gltf").read_bytes()
                == (tmp_path / "two" / "scene.gltf").read_bytes())
        assert ((tmp_path / "one" / "scene.bin").read_bytes()
                == (tmp_path / "two" / "scene.bin").read_bytes())


class TestFormatHandling:
    def test_unsupported_format_tag(self, tmp_path, sphere_mesh):
        with pytest.raises(MeshFormatError, match="unsupported|infer"):
            export_mesh(sphere_mesh, tmp_path / "m.stl")

    def test_explicit_format_overrides_suffix(self, tmp_path, sphere_mesh):
        path = tmp_path / "mesh.dat"
        export_mesh(sphere_mesh, path, fmt="obj")
        assert path.read_text().startswith("o surface")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(MeshFormatError):
            import_mesh(tmp_path / "missing.obj")
