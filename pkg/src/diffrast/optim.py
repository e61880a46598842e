"""Optimization machinery shared by the experiments.

Everything here is a pure function plus an explicitly owned AdamState; no
internal sharing, no hidden RNG state (generators are passed in).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import FrameOutOfRange, IsolatedVertex, ShapeMismatch


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters.

    lam is the base learning rate; it may be replaced per step (schedules).
    """

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lam: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lam=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        p = np.asarray(params)
        return cls(np.zeros_like(p, dtype=np.float64),
                   np.zeros_like(p, dtype=np.float64),
                   0, lam, beta1, beta2, eps)


def adam_step(state: AdamState, params, grads, lam: Optional[float] = None):
    """One bias-corrected Adam update; returns the new parameter array."""
    p = np.asarray(params, np.float64)
    g = np.asarray(grads, np.float64)
    if p.shape != g.shape or p.shape != state.m.shape:
        raise ShapeMismatch(f"params {p.shape}, grads {g.shape}, state {state.m.shape}")
    lr = state.lam if lam is None else lam
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    mhat = state.m / (1.0 - state.beta1 ** state.step)
    vhat = state.v / (1.0 - state.beta2 ** state.step)
    return p - lr * mhat / (np.sqrt(vhat) + state.eps)


def exp_schedule(lr0: float, lr1: float, t: int, total: int) -> float:
    """Exponential interpolation lr0 -> lr1 over ``total`` steps."""
    if total <= 0:
        return lr1
    a = min(max(t / total, 0.0), 1.0)
    return lr0 * (lr1 / lr0) ** a


# ---------------------------------------------------------------------------
# losses


def l2_image_loss(render, reference):
    """Summed squared error; returns (loss, dL/drender = 2(x - y))."""
    x = np.asarray(render, np.float64)
    y = np.asarray(reference, np.float64)
    if x.shape != y.shape:
        raise ShapeMismatch(f"render {x.shape} vs reference {y.shape}")
    d = x - y
    return float((d * d).sum()), 2.0 * d


# ---------------------------------------------------------------------------
# high-pass filter: x' = x - 0.3 * blur(x)
#
# blur downsamples by the largest power-of-two factor <= 32 that divides both
# dimensions (2x2 box per octave) and upsamples back with half-pixel-aligned
# bilinear steps.  The operator is linear; backward is its exact transpose.


def _down2(x):
    h, w, c = x.shape
    return x.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))


def _down2_t(g):
    h, w, c = g.shape
    out = np.empty((h * 2, w * 2, c), g.dtype)
    q = g * 0.25
    out[0::2, 0::2] = q
    out[0::2, 1::2] = q
    out[1::2, 0::2] = q
    out[1::2, 1::2] = q
    return out


def _up2_axis(x, axis):
    n = x.shape[axis]
    lo = np.take(x, np.maximum(np.arange(n) - 1, 0), axis=axis)
    hi = np.take(x, np.minimum(np.arange(n) + 1, n - 1), axis=axis)
    even = 0.75 * x + 0.25 * lo
    odd = 0.75 * x + 0.25 * hi
    out_shape = list(x.shape)
    out_shape[axis] = 2 * n
    out = np.empty(out_shape, x.dtype)
    sl_e = [slice(None)] * x.ndim
    sl_o = [slice(None)] * x.ndim
    sl_e[axis] = slice(0, None, 2)
    sl_o[axis] = slice(1, None, 2)
    out[tuple(sl_e)] = even
    out[tuple(sl_o)] = odd
    return out


def _up2_axis_t(g, axis):
    n = g.shape[axis] // 2
    sl_e = [slice(None)] * g.ndim
    sl_o = [slice(None)] * g.ndim
    sl_e[axis] = slice(0, None, 2)
    sl_o[axis] = slice(1, None, 2)
    ge = np.ascontiguousarray(g[tuple(sl_e)])
    go = np.ascontiguousarray(g[tuple(sl_o)])
    out = 0.75 * (ge + go)
    idx_lo = np.maximum(np.arange(n) - 1, 0)
    idx_hi = np.minimum(np.arange(n) + 1, n - 1)
    add_lo = np.zeros_like(out)
    add_hi = np.zeros_like(out)
    np.add.at(add_lo, _axis_index(idx_lo, axis, out.ndim), 0.25 * ge)
    np.add.at(add_hi, _axis_index(idx_hi, axis, out.ndim), 0.25 * go)
    return out + add_lo + add_hi


def _axis_index(idx, axis, ndim):
    sl = [slice(None)] * ndim
    sl[axis] = idx
    return tuple(sl)


def _up2(x):
    return _up2_axis(_up2_axis(x, 0), 1)


def _up2_t(g):
    return _up2_axis_t(_up2_axis_t(g, 1), 0)


class Highpass:
    """x' = x - 0.3 * blur(x) for a fixed image shape."""

    def __init__(self, height: int, width: int, max_factor: int = 32):
        f = 1
        while (f * 2 <= max_factor and height % (f * 2) == 0
               and width % (f * 2) == 0 and min(height, width) // (f * 2) >= 1):
            f *= 2
        self.factor = f
        self.octaves = int(np.log2(f))
        self.height, self.width = height, width

    def forward(self, x):
        x = np.asarray(x, np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.shape[:2] != (self.height, self.width):
            raise ShapeMismatch(f"expected {(self.height, self.width)}, got {x.shape[:2]}")
        b = x
        for _ in range(self.octaves):
            b = _down2(b)
        for _ in range(self.octaves):
            b = _up2(b)
        return x - 0.3 * b

    def backward(self, g):
        """Transpose of forward (the operator is linear)."""
        g = np.asarray(g, np.float64)
        if g.ndim == 2:
            g = g[:, :, None]
        b = g
        for _ in range(self.octaves):
            b = _up2_t(b)
        for _ in range(self.octaves):
            b = _down2_t(b)
        return g - 0.3 * b


def highpass(x):
    """One-shot Highpass.forward for the image's own shape."""
    x = np.asarray(x)
    h, w = x.shape[:2]
    return Highpass(h, w).forward(x)


# ---------------------------------------------------------------------------
# mesh Laplacian regularizer


def laplacian_reg(v, v_base, rings):
    """Average squared difference of uniformly weighted vertex differentials.

    rings is the (offsets, neighbors) CSR pair from ``vertex_one_rings``.
    Returns (value, gradient w.r.t. v).
    """
    V = np.asarray(v, np.float64)
    Vb = np.asarray(v_base, np.float64)
    if V.shape != Vb.shape:
        raise ShapeMismatch(f"v {V.shape} vs v_base {Vb.shape}")
    offsets, neigh = rings
    n = V.shape[0]
    counts = np.diff(offsets)
    if np.any(counts == 0):
        raise IsolatedVertex(int(np.nonzero(counts == 0)[0][0]))

    owner = np.repeat(np.arange(n), counts)
    inv = 1.0 / counts

    def differential(X):
        s = np.zeros_like(X)
        np.add.at(s, owner, X[neigh])
        return X - s * inv[:, None]

    d = differential(V)
    db = differential(Vb)
    r = d - db
    val = float((r * r).sum()) / n
    # gradient: (2/n) * A^T r with A = I - W
    g = 2.0 / n * r
    wt = np.zeros_like(g)
    np.add.at(wt, neigh, (g * inv[:, None])[owner])
    return val, g - wt


# ---------------------------------------------------------------------------
# overparameterized per-frame deformation


@dataclass
class DeformationModel:
    """V_i = [R_seq] V_base + M3 M2 M1 w_i with one-hot frame selector w_i.

    M1, M2 start as identity and M3 as zero, so the initial deformation is
    exactly zero.  ``rigid`` optionally holds one 3x4 matrix per sequence.
    """

    v_base: np.ndarray          # (3n,)
    m1: np.ndarray              # (m, m) or (r, m)
    m2: np.ndarray              # (r, r) or matching
    m3: np.ndarray              # (3n, r)
    rigid: Optional[List[np.ndarray]] = None

    @classmethod
    def create(cls, v_base, n_frames: int, basis: Optional[int] = None,
               n_sequences: int = 0):
        vb = np.asarray(v_base, np.float64).reshape(-1)
        r = n_frames if basis is None else basis
        m1 = np.eye(r, n_frames)
        m2 = np.eye(r, r)
        m3 = np.zeros((vb.size, r))
        rigid = None
        if n_sequences:
            rigid = [np.hstack([np.eye(3), np.zeros((3, 1))]) for _ in range(n_sequences)]
        return cls(vb, m1, m2, m3, rigid)

    @property
    def frame_count(self):
        return self.m1.shape[1]


def deform(model: DeformationModel, frame: int, sequence: Optional[int] = None):
    """Vertex positions for one frame; returns ((n, 3) array, saved ctx)."""
    if not 0 <= frame < model.frame_count:
        raise FrameOutOfRange(f"frame {frame} of {model.frame_count}")
    c1 = model.m1[:, frame]
    c2 = model.m2 @ c1
    c3 = model.m3 @ c2
    if model.rigid is not None and sequence is not None:
        R = model.rigid[sequence]
        base = model.v_base.reshape(-1, 3)
        hom = np.concatenate([base, np.ones((base.shape[0], 1))], axis=1)
        vb = (hom @ R.T).reshape(-1)
    else:
        vb = model.v_base
    v = vb + c3
    return v.reshape(-1, 3), (c1, c2, frame, sequence)


def deform_backward(model: DeformationModel, ctx, dl_dv):
    """Gradients (dm1, dm2, dm3, drigid or None) from dL/dV (n, 3)."""
    c1, c2, frame, sequence = ctx
    g = np.asarray(dl_dv, np.float64).reshape(-1)
    dm3 = np.outer(g, c2)
    dc2 = model.m3.T @ g
    dm2 = np.outer(dc2, c1)
    dc1 = model.m2.T @ dc2
    dm1 = np.zeros_like(model.m1)
    dm1[:, frame] = dc1
    drigid = None
    if model.rigid is not None and sequence is not None:
        base = model.v_base.reshape(-1, 3)
        hom = np.concatenate([base, np.ones((base.shape[0], 1))], axis=1)
        drigid = g.reshape(-1, 3).T @ hom
    return dm1, dm2, dm3, drigid


# ---------------------------------------------------------------------------
# quaternions and pose noise (scalar-first convention: (w, x, y, z))


def quat_normalize(q):
    q = np.asarray(q, np.float64)
    return q / np.linalg.norm(q)


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def random_unit_quat(rng):
    """Uniform over SO(3) (Gaussian 4-vector normalized)."""
    while True:
        q = rng.standard_normal(4)
        n = np.linalg.norm(q)
        if n > 1e-12:
            return q / n


def slerp(q0, q1, t):
    q0 = np.asarray(q0, np.float64)
    q1 = np.asarray(q1, np.float64)
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-12:
        return quat_normalize(q0 + t * (q1 - q0))
    th = np.arccos(min(d, 1.0))
    s = np.sin(th)
    return quat_normalize((np.sin((1 - t) * th) / s) * q0 + (np.sin(t * th) / s) * q1)


def geodesic_angle_deg(qa, qb) -> float:
    """Rotation angle between the orientations (double cover folded)."""
    d = abs(float(np.dot(quat_normalize(qa), quat_normalize(qb))))
    return float(np.degrees(2.0 * np.arccos(min(1.0, d))))


def pose_noise(q, strength: float, rng):
    """Slerp toward a uniformly random orientation by ``strength``."""
    if strength <= 0.0:
        return quat_normalize(q)
    return slerp(quat_normalize(q), random_unit_quat(rng), min(strength, 1.0))


def _octahedral_group():
    """The 24 rotation quaternions of the cube, deterministic order."""
    import itertools
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.zeros((3, 3))
            for r, (c, s) in enumerate(zip(perm, signs)):
                m[r, c] = s
            if np.linalg.det(m) > 0.5:
                mats.append(m)
    quats = []
    for m in mats:
        # Shepperd's method
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = np.sqrt(tr + 1.0) * 2
            q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                          (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
            q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s,
                          (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
        elif m[1, 1] >= m[2, 2]:
            s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
            q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                          0.25 * s, (m[1, 2] + m[2, 1]) / s])
        else:
            s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
            q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                          (m[1, 2] + m[2, 1]) / s, 0.25 * s])
        quats.append(quat_normalize(q))
    return np.asarray(quats)


OCTAHEDRAL_QUATS = _octahedral_group()


def symmetry_noise(q, rng):
    """Compose with a uniformly random cube-symmetry rotation."""
    g = OCTAHEDRAL_QUATS[rng.integers(0, len(OCTAHEDRAL_QUATS))]
    return quat_normalize(quat_mul(quat_normalize(q), g))


# ---------------------------------------------------------------------------
# combined capture-style loss


def capture_loss(render, reference, v, v_base, rings, hp: Optional[Highpass] = None):
    """Highpassed L2 plus 3x the Laplacian term.

    Returns (loss, dL/drender, dL/dV).
    """
    x = np.asarray(render, np.float64)
    if hp is None:
        hp = Highpass(x.shape[0], x.shape[1])
    xf = hp.forward(render)
    yf = hp.forward(reference)
    l2, dxf = l2_image_loss(xf, yf)
    dimg = hp.backward(dxf)
    lreg, dv = laplacian_reg(v, v_base, rings)
    return l2 + 3.0 * lreg, dimg, 3.0 * dv
