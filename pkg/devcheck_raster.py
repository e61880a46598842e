"""Dev scratch: raster forward vs brute force + backward vs FD."""
import numpy as np
import sys
sys.path.insert(0, "src")
from diffrast import _kernels_numpy as K

rng = np.random.default_rng(0)


def rand_scene(T=6, behind=False):
    # triangles roughly in front of the camera, w in [0.8, 1.6]
    v = rng.uniform(-1, 1, size=(3 * T, 4))
    v[:, 2] = rng.uniform(-0.8, 0.8, size=3 * T)
    v[:, 3] = rng.uniform(0.8, 1.6, size=3 * T)
    v[:, 0] *= v[:, 3]
    v[:, 1] *= v[:, 3]
    v[:, 2] *= v[:, 3]
    tris = np.arange(3 * T, dtype=np.int32).reshape(T, 3)
    return v, tris


def oracle(verts, tris, W, H):
    """Per-pixel exhaustive reference (no clipping/bbox/culling)."""
    T = tris.shape[0]
    ids = np.zeros((H, W), np.int32)
    bary = np.zeros((H, W, 2))
    zw = np.ones((H, W))
    juv = np.zeros((H, W, 2, 2))
    px = np.arange(W) + 0.5
    py = np.arange(H) + 0.5
    PX, PY = np.meshgrid(px, py)
    wh, hh = W / 2, H / 2
    for t in range(T):
        i0, i1, i2 = tris[t]
        h = []
        for i in (i0, i1, i2):
            h.append(np.array([wh * (verts[i, 0] + verts[i, 3]),
                               hh * (verts[i, 3] - verts[i, 1]),
                               verts[i, 3]]))
        cr = [np.cross(h[1], h[2]), np.cross(h[2], h[0]), np.cross(h[0], h[1])]
        d = cr[0][0] * h[0][0] + cr[0][1] * h[0][1] + cr[0][2] * h[0][2]
        if d == 0:
            continue
        s = 1.0 if d > 0 else -1.0
        absd = abs(d)
        gc = [s * c for c in cr]
        ae = [g[0] * PX + g[1] * PY + g[2] for g in gc]
        def tl(g):
            return g[0] > 0 or (g[0] == 0 and g[1] > 0)
        inside = np.ones((H, W), bool)
        for g, a in zip(gc, ae):
            inside &= (a > 0) | ((a == 0) & tl(g))
        se = ae[0] + ae[1] + ae[2]
        z = verts[[i0, i1, i2], 2]
        czw = (ae[0] * z[0] + ae[1] * z[1] + ae[2] * z[2]) / absd
        cov = inside & (se > 0) & (absd >= 1e-6 * se) & (czw >= -1) & (czw <= 1)
        better = cov & ((ids == 0) | (czw < zw))
        ses = np.where(se != 0, se, 1.0)
        u = ae[0] / ses
        v = ae[1] / ses
        gsx = gc[0][0] + gc[1][0] + gc[2][0]
        gsy = gc[0][1] + gc[1][1] + gc[2][1]
        ids[better] = t + 1
        zw[better] = czw[better]
        bary[better, 0] = u[better]
        bary[better, 1] = v[better]
        juv[better, 0, 0] = ((gc[0][0] - u * gsx) / ses)[better]
        juv[better, 0, 1] = ((gc[0][1] - u * gsy) / ses)[better]
        juv[better, 1, 0] = ((gc[1][0] - v * gsx) / ses)[better]
        juv[better, 1, 1] = ((gc[1][1] - v * gsy) / ses)[better]
    return ids, bary, zw, juv


ok = True
for trial in range(20):
    v, tris = rand_scene()
    W = H = 32
    r1 = K.raster_forward(v, tris, W, H)
    r2 = oracle(v, tris, W, H)
    for name, a, b in zip(("ids", "bary", "zw", "juv"), r1, r2):
        if not np.array_equal(a, b):
            print(f"trial {trial}: {name} mismatch: {np.abs(a-b).max() if a.dtype!=np.int32 else (a!=b).sum()}")
            ok = False
print("forward oracle:", "OK" if ok else "FAIL")

# J consistency: central differences of u,v across pixels vs stored J
v, tris = rand_scene(T=2)
W = H = 64
ids, bary, zw, juv = K.raster_forward(v, tris, W, H)
err = 0.0
cnt = 0
for y in range(1, H - 1):
    for x in range(1, W - 1):
        t = ids[y, x]
        if t == 0:
            continue
        if not (ids[y, x - 1] == t and ids[y, x + 1] == t and ids[y - 1, x] == t and ids[y + 1, x] == t):
            continue
        dudx = (bary[y, x + 1, 0] - bary[y, x - 1, 0]) / 2
        dudy = (bary[y + 1, x, 0] - bary[y - 1, x, 0]) / 2
        dvdx = (bary[y, x + 1, 1] - bary[y, x - 1, 1]) / 2
        dvdy = (bary[y + 1, x, 1] - bary[y - 1, x, 1]) / 2
        err = max(err, abs(dudx - juv[y, x, 0, 0]), abs(dudy - juv[y, x, 0, 1]),
                  abs(dvdx - juv[y, x, 1, 0]), abs(dvdy - juv[y, x, 1, 1]))
        cnt += 1
print(f"J consistency: max err {err:.2e} over {cnt} px", "OK" if err < 1e-3 else "FAIL")

# backward vs FD
def run_uvJ(v, tris, W, H):
    ids, bary, zw, juv = K.raster_forward(v, tris, W, H)
    return ids, bary, juv

for trial in range(5):
    v, tris = rand_scene(T=3)
    W = H = 24
    ids0, bary0, zw0, juv0 = K.raster_forward(v, tris, W, H)
    gu = rng.standard_normal((H, W, 2))
    gJ = rng.standard_normal((H, W, 2, 2))
    gu[ids0 == 0] = 0
    gJ[ids0 == 0] = 0
    dv = K.raster_backward(v, tris, ids0, gu, gJ, W, H)
    h = 1e-5
    worst = 0.0
    for vi in range(v.shape[0]):
        for c in range(4):
            vp = v.copy(); vp[vi, c] += h
            vm = v.copy(); vm[vi, c] -= h
            i1, b1, _, j1 = K.raster_forward(vp, tris, W, H)
            i2, b2, _, j2 = K.raster_forward(vm, tris, W, H)
            if not (np.array_equal(i1, ids0) and np.array_equal(i2, ids0)):
                continue  # coverage changed; skip
            fd = ((b1 - b2) / (2 * h) * gu).sum() + ((j1 - j2) / (2 * h) * gJ).sum()
            an = dv[vi, c]
            if abs(fd - an) > 1e-4 * max(1, abs(fd)):
                worst = max(worst, abs(fd - an) / max(1e-9, abs(fd)))
                print(f"  trial {trial} v{vi} c{c}: fd={fd:.6g} an={an:.6g}")
    print(f"backward FD trial {trial}:", "OK" if worst == 0 else f"FAIL {worst:.2e}")
