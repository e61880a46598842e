"""diffrast: deterministic differentiable deferred-shading rasterization.

Four primitives with exact forward/backward contracts (rasterize,
interpolate, texture, antialias), a small render-graph tape to compose them,
an optimization kit, and a CLI reproducing desk-scale inverse-rendering
experiments.  Hot kernels are numba-jitted with a pure-numpy fallback
(``DIFFRAST_BACKEND=numpy``).
"""

from ._backend import active_backend
from .buffers import (AttributeSet, ClipVertexBuffer, EdgeAdjacency, GradBuffer,
                      ImageGrid, IndexBuffer, build_edge_adjacency,
                      validate_geometry, vertex_one_rings)
from .antialias import AAEventLog, antialias_backward, antialias_forward
from .interp import AttrImage, interpolate_backward, interpolate_forward
from .pipeline import (RenderGraph, Tape, Var, cubemap_texel_directions,
                       shade_lambert, shade_passthrough, shade_phong_highlight)
from .raster import (RasterGrid, Viewport, rasterize_backward,
                     rasterize_forward)
from .texture import (MipTexture, TexSampleRecord, TexSampleRequest,
                      build_pyramid, flatten_gradients, lod_select,
                      texture_backward, texture_forward)

__version__ = "0.1.0"

__all__ = [
    "AAEventLog",
    "AttrImage",
    "AttributeSet",
    "ClipVertexBuffer",
    "EdgeAdjacency",
    "GradBuffer",
    "ImageGrid",
    "IndexBuffer",
    "MipTexture",
    "RasterGrid",
    "RenderGraph",
    "Tape",
    "TexSampleRecord",
    "TexSampleRequest",
    "Var",
    "Viewport",
    "active_backend",
    "antialias_backward",
    "antialias_forward",
    "build_edge_adjacency",
    "build_pyramid",
    "cubemap_texel_directions",
    "flatten_gradients",
    "interpolate_backward",
    "interpolate_forward",
    "lod_select",
    "rasterize_backward",
    "rasterize_forward",
    "shade_lambert",
    "shade_passthrough",
    "shade_phong_highlight",
    "texture_backward",
    "texture_forward",
    "validate_geometry",
    "vertex_one_rings",
]
