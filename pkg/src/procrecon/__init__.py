"""procrecon: silhouette-driven estimation of procedural generator parameters.

Reconstructs editable, structured 3D meshes from mask images by searching
the input space of procedural generators with a hybrid memetic/genetic
optimizer on top of a differentiable silhouette rasterizer.
"""

from .params import (
    ParamKind,
    ParamSpec,
    ParameterVector,
    Preset,
    clamp,
    from_genes,
    to_genes,
)
from .mesh import TriangleMesh, load_obj, save_obj
from .render import (
    Camera,
    RenderGradients,
    SilhouetteMask,
    mse,
    render_backward,
    render_silhouette,
    silhouette_iou,
    uniform_viewpoints,
)

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "ParamKind",
    "ParamSpec",
    "ParameterVector",
    "Preset",
    "RenderGradients",
    "SilhouetteMask",
    "TriangleMesh",
    "clamp",
    "from_genes",
    "load_obj",
    "mse",
    "render_backward",
    "render_silhouette",
    "save_obj",
    "silhouette_iou",
    "to_genes",
    "uniform_viewpoints",
]
