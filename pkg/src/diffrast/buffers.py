"""Core geometry and image buffer types.

All buffers are immutable after construction (arrays are stored with
``writeable=False``); :class:`GradBuffer` is the single mutable sink used by
the backward passes.  The default scalar type is float32; pass float64 arrays
to run the whole pipeline in double precision (used by the finite-difference
verification suite).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateIndexTriple,
    IndexOutOfRange,
    NonFiniteVertex,
    ShapeMismatch,
)

FLOAT_DTYPES = (np.float32, np.float64)


def _as_float(a, name, dtype=None):
    a = np.asarray(a)
    if a.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        a = a.astype(np.float64 if dtype is None else dtype)
    if dtype is not None:
        a = a.astype(dtype, copy=False)
    return a


def _freeze(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ClipVertexBuffer:
    """Per-vertex homogeneous clip-space positions, shape (N, 4)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = _as_float(self.positions, "positions")
        if pos.ndim != 2 or pos.shape[1] != 4 or pos.shape[0] < 1:
            raise ShapeMismatch(f"positions must be (N, 4) with N >= 1, got {pos.shape}")
        bad = ~np.isfinite(pos).all(axis=1)
        if bad.any():
            raise NonFiniteVertex(int(np.nonzero(bad)[0][0]))
        object.__setattr__(self, "positions", _freeze(pos))

    def __len__(self):
        return self.positions.shape[0]

    @property
    def dtype(self):
        return self.positions.dtype


@dataclass(frozen=True)
class IndexBuffer:
    """Triangle vertex indices, shape (T, 3), int32."""

    triangles: np.ndarray

    def __post_init__(self):
        tri = np.asarray(self.triangles)
        if tri.size == 0:
            tri = tri.reshape(0, 3)
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise ShapeMismatch(f"triangles must be (T, 3), got {tri.shape}")
        if not np.issubdtype(tri.dtype, np.integer):
            raise ShapeMismatch("triangle indices must be integers")
        if tri.size and tri.min() < 0:
            t = int(np.nonzero((tri < 0).any(axis=1))[0][0])
            s = int(np.nonzero(tri[t] < 0)[0][0])
            raise IndexOutOfRange(t, s, int(tri[t, s]), 0)
        object.__setattr__(self, "triangles", _freeze(tri.astype(np.int32)))

    def __len__(self):
        return self.triangles.shape[0]


@dataclass(frozen=True)
class AttributeSet:
    """Per-vertex attribute vectors, shape (V, K)."""

    values: np.ndarray

    def __post_init__(self):
        v = _as_float(self.values, "values")
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[1] < 1:
            raise ShapeMismatch(f"values must be (V, K) with K >= 1, got {v.shape}")
        if not np.isfinite(v).all():
            raise NonFiniteVertex(int(np.nonzero(~np.isfinite(v).all(axis=1))[0][0]))
        object.__setattr__(self, "values", _freeze(v))

    @property
    def channels(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class ImageGrid:
    """Row-major image, shape (height, width, channels), top-left origin.

    Pixel (x, y) has its center at (x + 0.5, y + 0.5) in screen units.
    """

    data: np.ndarray

    def __post_init__(self):
        d = _as_float(self.data, "data")
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ShapeMismatch(f"image data must be (H, W, K), got {d.shape}")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


class GradBuffer:
    """Zero-initialized gradient accumulator mirroring another buffer.

    Accumulation is additive and performed in a fixed canonical order by the
    backward kernels, so final contents do not depend on scheduling.
    """

    def __init__(self, shape, dtype=np.float32):
        self.data = np.zeros(shape, dtype=dtype)

    @classmethod
    def for_buffer(cls, buf):
        if isinstance(buf, ClipVertexBuffer):
            return cls(buf.positions.shape, buf.positions.dtype)
        if isinstance(buf, AttributeSet):
            return cls(buf.values.shape, buf.values.dtype)
        if isinstance(buf, ImageGrid):
            return cls(buf.data.shape, buf.data.dtype)
        a = np.asarray(buf)
        return cls(a.shape, a.dtype)

    def add(self, other):
        self.data += np.asarray(other, dtype=self.data.dtype)
        return self


def validate_geometry(verts: ClipVertexBuffer, idx: IndexBuffer) -> None:
    """Check that ``idx`` addresses ``verts`` legally.

    Raises IndexOutOfRange, DegenerateIndexTriple or NonFiniteVertex; returns
    None when every invariant holds.  Vertex finiteness is re-checked here so
    raw arrays can be validated too.
    """
    pos = verts.positions if isinstance(verts, ClipVertexBuffer) else np.asarray(verts)
    tri = idx.triangles if isinstance(idx, IndexBuffer) else np.asarray(idx)
    n = pos.shape[0]
    bad = ~np.isfinite(pos).all(axis=1)
    if bad.any():
        raise NonFiniteVertex(int(np.nonzero(bad)[0][0]))
    if tri.size == 0:
        return
    oob = (tri < 0) | (tri >= n)
    if oob.any():
        t = int(np.nonzero(oob.any(axis=1))[0][0])
        s = int(np.nonzero(oob[t])[0][0])
        raise IndexOutOfRange(t, s, int(tri[t, s]), n)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    dup = (a == b) | (b == c) | (a == c)
    if dup.any():
        t = int(np.nonzero(dup)[0][0])
        raise DegenerateIndexTriple(t, tri[t])


@dataclass(frozen=True)
class EdgeAdjacency:
    """Undirected edge -> incident triangle map in CSR form.

    ``keys`` holds each undirected edge encoded as min(a,b) << 32 | max(a,b),
    sorted ascending for binary search inside the kernels.  Edges with more
    than two incident triangles are kept with all of them; the antialiaser
    treats those as permanent silhouette candidates.
    """

    keys: np.ndarray          # (E,) int64, sorted
    offsets: np.ndarray       # (E + 1,) int64
    incident: np.ndarray      # (sum counts,) int32 triangle indices

    def edge_count(self):
        return self.keys.shape[0]

    def incident_triangles(self, a: int, b: int):
        lo, hi = (a, b) if a < b else (b, a)
        key = (lo << 32) | hi
        i = int(np.searchsorted(self.keys, key))
        if i >= len(self.keys) or self.keys[i] != key:
            return []
        return [int(t) for t in self.incident[self.offsets[i]:self.offsets[i + 1]]]

    def as_dict(self):
        out = {}
        for i, key in enumerate(self.keys):
            a, b = int(key >> 32), int(key & 0xFFFFFFFF)
            out[(a, b)] = [int(t) for t in self.incident[self.offsets[i]:self.offsets[i + 1]]]
        return out


def build_edge_adjacency(idx: IndexBuffer) -> EdgeAdjacency:
    """Precompute, per undirected edge, the triangles sharing it."""
    tri = idx.triangles if isinstance(idx, IndexBuffer) else np.asarray(idx, dtype=np.int32)
    if tri.shape[0] == 0:
        z64 = np.zeros(0, np.int64)
        return EdgeAdjacency(_freeze(z64), _freeze(np.zeros(1, np.int64)), _freeze(np.zeros(0, np.int32)))
    t64 = tri.astype(np.int64)
    ea = np.concatenate([t64[:, [0, 1]], t64[:, [1, 2]], t64[:, [2, 0]]])
    lo = np.minimum(ea[:, 0], ea[:, 1])
    hi = np.maximum(ea[:, 0], ea[:, 1])
    keys = (lo << 32) | hi
    owner = np.tile(np.arange(tri.shape[0], dtype=np.int32), 3)
    order = np.lexsort((owner, keys))
    keys, owner = keys[order], owner[order]
    uniq, starts = np.unique(keys, return_index=True)
    offsets = np.append(starts, keys.shape[0]).astype(np.int64)
    return EdgeAdjacency(_freeze(uniq), _freeze(offsets), _freeze(owner.astype(np.int32)))


def vertex_one_rings(idx: IndexBuffer, n_verts: int):
    """Per-vertex one-ring neighbor lists in CSR form (offsets, neighbors)."""
    tri = idx.triangles if isinstance(idx, IndexBuffer) else np.asarray(idx)
    pairs = set()
    for t in range(tri.shape[0]):
        a, b, c = int(tri[t, 0]), int(tri[t, 1]), int(tri[t, 2])
        pairs.update(((a, b), (b, a), (b, c), (c, b), (c, a), (a, c)))
    neigh = [[] for _ in range(n_verts)]
    for a, b in sorted(pairs):
        neigh[a].append(b)
    offsets = np.zeros(n_verts + 1, np.int64)
    flat = []
    for v in range(n_verts):
        flat.extend(neigh[v])
        offsets[v + 1] = len(flat)
    return offsets, np.asarray(flat, dtype=np.int32)
