"""voxkit: simulation data-cubes to explorable visual assets.

Scalar fields on uniform grids go in; channel-packed texture atlases,
volumetrically rendered images and iso-surface meshes come out, either
through the library API, the ``voxkit`` CLI, or the HTTP analysis-job
service.
"""

__version__ = "0.1.0"

from .errors import (AtlasError, CubeFormatError, EvalError, ExprSyntaxError,
                     MeshFormatError, OutsideDomainError, VoxkitError)
from .field import (FieldStats, ScalarField, downsample, field_stats,
                    load_cube, sample_trilinear, sample_trilinear_many, save_cube)
from .expr import (EvalResult, FieldExpr, evaluate_expression, parse_expression,
                   print_expression)
from .atlas import (AtlasImage, AtlasMeta, ChannelSpec, NormalizationSpec,
                    default_normalization, denormalize_value, normalize_field,
                    pack_atlas, plan_tiles, read_atlas, unpack_atlas, write_atlas)
from .render import (Image, RenderParams, TransferFunction, compose_emission,
                     integrate_ray, load_scene, render_volume, write_image)
from .mesh import (Layer, LayeredScene, MeshDiagnostics, TriangleMesh,
                   compute_vertex_normals, marching_cubes, mesh_diagnostics,
                   multilayer_surfaces)
from .meshio import export_mesh, import_mesh
from .service import AnalysisServer, ServerConfig

__all__ = [
    "AnalysisServer", "AtlasError", "AtlasImage", "AtlasMeta", "ChannelSpec",
    "CubeFormatError", "EvalError", "EvalResult", "ExprSyntaxError",
    "FieldExpr", "FieldStats", "Image", "Layer", "LayeredScene",
    "MeshDiagnostics", "MeshFormatError", "NormalizationSpec",
    "OutsideDomainError", "RenderParams", "ScalarField", "ServerConfig",
    "TransferFunction", "TriangleMesh", "VoxkitError", "compose_emission",
    "compute_vertex_normals", "default_normalization", "denormalize_value",
    "downsample", "evaluate_expression", "export_mesh", "field_stats",
    "import_mesh", "integrate_ray", "load_cube", "load_scene",
    "marching_cubes", "mesh_diagnostics", "multilayer_surfaces",
    "normalize_field", "pack_atlas", "parse_expression", "plan_tiles",
    "print_expression", "read_atlas", "render_volume", "sample_trilinear",
    "sample_trilinear_many", "save_cube", "unpack_atlas", "write_atlas",
    "write_image",
]
