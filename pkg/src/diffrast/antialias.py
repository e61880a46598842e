"""Analytic post-shading edge antialiasing and visibility gradients.

Neighboring pixel pairs with mismatching triangle IDs are tested against the
silhouette edges of the pair's closer triangle.  When such an edge crosses
the segment between the two pixel centers, the opposite pixel's color is
blended into the pixel on whose side the crossing lies, with weight alpha
rising linearly from 0 at the segment midpoint to 0.5 at the pixel center.
Because alpha is a continuous function of the edge endpoints' screen
positions, the blend converts coverage steps into smooth changes whose
gradients flow to the clip-space vertex positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .buffers import ClipVertexBuffer, EdgeAdjacency, GradBuffer, IndexBuffer
from .errors import LogMismatch, ShapeMismatch


@dataclass
class AAEventLog:
    """Per-blend records saved by the forward pass.

    ev_i columns: pair x, pair y, axis (0 horizontal / 1 vertical), losing
    slot (0 = first pixel of the pair), winner triangle index (0-based),
    silhouette edge endpoints p, q.  ev_f columns: crossing parameter along
    the edge, blend weight alpha in [0, 0.5].  ``color`` keeps the pre-blend
    image the backward pass reads.
    """

    ev_i: np.ndarray
    ev_f: np.ndarray
    color: np.ndarray
    width: int
    height: int

    def __len__(self):
        return self.ev_i.shape[0]


def _pos(verts):
    return verts.positions if isinstance(verts, ClipVertexBuffer) else np.asarray(verts)


def _tri(idx):
    return idx.triangles if isinstance(idx, IndexBuffer) else np.asarray(idx, np.int32)


def antialias_forward(color, grid, verts, idx, adj: EdgeAdjacency):
    """Returns (aa_color (H, W, C), AAEventLog)."""
    pos = _pos(verts)
    tri = _tri(idx)
    col = np.ascontiguousarray(color, pos.dtype)
    if col.ndim == 2:
        col = col[:, :, None]
    H, W = grid.ids.shape
    if col.shape[:2] != (H, W):
        raise ShapeMismatch(f"color is {col.shape[:2]}, grid is {(H, W)}")
    out, ev_i, ev_f = kernels.aa_forward(
        col, grid.ids, grid.zw, pos, tri, adj.keys, adj.offsets, adj.incident, W, H)
    return out, AAEventLog(ev_i, ev_f, col, W, H)


def antialias_backward(log: AAEventLog, verts, idx, dl_daa):
    """Returns (dl_dcolor (H, W, C), GradBuffer over clip vertices)."""
    pos = _pos(verts)
    dl = np.ascontiguousarray(dl_daa, pos.dtype)
    if dl.ndim == 2:
        dl = dl[:, :, None]
    if dl.shape != log.color.shape:
        raise LogMismatch(f"dl_daa is {dl.shape}, forward color was {log.color.shape}")
    if log.ev_i.shape[0] and int(log.ev_i[:, 5:7].max()) >= pos.shape[0]:
        raise LogMismatch("log references vertices outside this buffer")
    dl_dcolor, dverts = kernels.aa_backward(
        log.color, log.ev_i, log.ev_f, pos, dl, log.width, log.height)
    out = GradBuffer(pos.shape, pos.dtype)
    out.data += dverts
    return dl_dcolor, out
