"""Procedural test meshes."""

import numpy as np

# corners of the unit cube, side 1, centered at the origin
_CUBE_CORNERS = np.array([
    [-0.5, -0.5, -0.5],
    [0.5, -0.5, -0.5],
    [0.5, 0.5, -0.5],
    [-0.5, 0.5, -0.5],
    [-0.5, -0.5, 0.5],
    [0.5, -0.5, 0.5],
    [0.5, 0.5, 0.5],
    [-0.5, 0.5, 0.5],
])

# quads per face, outward CCW winding
_CUBE_FACES = np.array([
    [0, 3, 2, 1],   # -Z
    [4, 5, 6, 7],   # +Z
    [0, 1, 5, 4],   # -Y
    [2, 3, 7, 6],   # +Y
    [1, 2, 6, 5],   # +X
    [0, 4, 7, 3],   # -X
])


def cube_mesh():
    """Unit cube: (verts (8, 3), tris (12, 3)), watertight."""
    tris = []
    for q in _CUBE_FACES:
        tris.append([q[0], q[1], q[2]])
        tris.append([q[0], q[2], q[3]])
    return _CUBE_CORNERS.copy(), np.asarray(tris, np.int32)


def cube_face_attr_index():
    """Per-face-corner attribute indexing for discontinuous coloring.

    Returns (attr_tris (12, 3), slot_corner (24,)): 24 attribute slots, four
    per face; slot_corner maps each slot back to its cube corner.
    """
    attr_tris = []
    slot_corner = []
    for f, q in enumerate(_CUBE_FACES):
        base = 4 * f
        slot_corner.extend(q.tolist())
        attr_tris.append([base + 0, base + 1, base + 2])
        attr_tris.append([base + 0, base + 2, base + 3])
    return np.asarray(attr_tris, np.int32), np.asarray(slot_corner, np.int32)


def icosphere(subdivisions: int = 3):
    """Unit icosphere: (verts (n, 3), tris (T, 3)), watertight."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    tris = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v for v in verts]
    for _ in range(subdivisions):
        cache = {}
        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key in cache:
                return cache[key]
            m = verts[a] + verts[b]
            m = m / np.linalg.norm(m)
            verts.append(m)
            cache[key] = len(verts) - 1
            return cache[key]
        new_tris = []
        for (a, b, c) in tris:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_tris += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        tris = new_tris
    return np.asarray(verts), np.asarray(tris, np.int32)


def grid_mesh(n: int, z: float = 0.0):
    """(n+1)^2-vertex planar grid spanning [-0.5, 0.5]^2 at depth z."""
    xs = np.linspace(-0.5, 0.5, n + 1)
    vx, vy = np.meshgrid(xs, xs)
    verts = np.stack([vx.ravel(), vy.ravel(), np.full((n + 1) ** 2, z)], axis=1)
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b = a + 1
            c = a + n + 1
            d = c + 1
            tris.append([a, b, d])
            tris.append([a, d, c])
    return verts, np.asarray(tris, np.int32)


def vertex_normals(verts, tris):
    """Area-weighted per-vertex normals, normalized."""
    v = np.asarray(verts, np.float64)
    t = np.asarray(tris)
    fn = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    out = np.zeros_like(v)
    for k in range(3):
        np.add.at(out, t[:, k], fn)
    n = np.linalg.norm(out, axis=1, keepdims=True)
    n[n == 0] = 1.0
    return out / n


def bumpy_sphere(subdivisions: int = 3, amplitude: float = 0.15):
    """Deterministically displaced icosphere (irregular known geometry)."""
    v, t = icosphere(subdivisions)
    bump = (np.sin(3.0 * v[:, 0] + 1.0) * np.sin(4.0 * v[:, 1] - 0.5)
            + 0.5 * np.cos(5.0 * v[:, 2]))
    r = 1.0 + amplitude * bump / 1.5
    return v * r[:, None], t
