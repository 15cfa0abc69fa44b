from .camera import CameraPose, look_at, ray_grid
from .envmap import EnvironmentMap, gradient_environment
from .brdf import specular_color, eval_brdf
from .trace import SurfaceHit, sphere_trace, visibility, TraceOpts
from .image import RenderOpts, RenderOutput, render_image
from .mesh import TriangleMesh, marching_cubes, write_obj, read_obj
from .imageio import write_png, write_pfm, read_pfm, srgb_encode

__all__ = [
    "CameraPose",
    "look_at",
    "ray_grid",
    "EnvironmentMap",
    "gradient_environment",
    "specular_color",
    "eval_brdf",
    "SurfaceHit",
    "sphere_trace",
    "visibility",
    "TraceOpts",
    "RenderOpts",
    "RenderOutput",
    "render_image",
    "TriangleMesh",
    "marching_cubes",
    "write_obj",
    "read_obj",
    "write_png",
    "write_pfm",
    "read_pfm",
    "srgb_encode",
]
