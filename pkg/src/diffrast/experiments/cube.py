"""Shape-and-color recovery of a perturbed unit cube from tiny renders.

Vertex positions and colors are optimized simultaneously against renders of
the reference cube taken from a fresh random viewpoint every iteration, with
antialiasing supplying the visibility gradients that make coverage
differentiable even when triangles span only a couple of pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..buffers import IndexBuffer, build_edge_adjacency
from ..camera import random_viewpoint
from ..meshes import cube_face_attr_index, cube_mesh
from ..optim import AdamState, adam_step, exp_schedule, l2_image_loss
from ..pipeline import Tape
from ..raster import Viewport
from .common import ConvergenceLog, DivergenceError, ExperimentConfig, OutputWriter

CAMERA_RADIUS = 3.5
CLEAR = np.zeros(3)


def continuous_palette():
    """8 corner colors: corner position mapped into RGB."""
    verts, _ = cube_mesh()
    return verts + 0.5


def discontinuous_palette():
    """24 face-corner colors, distinct across faces."""
    _, slot_corner = cube_face_attr_index()
    base = continuous_palette()[slot_corner]
    shift = (np.arange(24)[:, None] * np.array([0.13, 0.29, 0.41])) % 1.0
    return 0.5 * base + 0.5 * shift


def render_cube(tape: Tape, verts_obj, colors, mvp, tris, attr_tris, adj, vp,
                watch: bool = True):
    v = tape.input("verts", verts_obj) if watch else tape.constant(verts_obj)
    c = tape.input("colors", colors) if watch else tape.constant(colors)
    clip = tape.transform_clip(v, tape.constant(mvp))
    grid = tape.rasterize(clip, tris, vp)
    col, _ = tape.interpolate(c, attr_tris, grid)
    img = tape.composite_background(col, grid.value.mask, tape.constant(CLEAR))
    aa, _ = tape.antialias(img, grid, clip, tris, adj)
    return aa


@dataclass
class CubeResult:
    log: ConvergenceLog
    final_verts: np.ndarray
    final_colors: np.ndarray
    failed: bool              # final vertex error above the irrecoverable cutoff

    @property
    def final_error(self):
        return self.log.final_metric()


FAIL_CUTOFF = 0.3


def run_cube(cfg: ExperimentConfig, progress=None) -> CubeResult:
    rng = np.random.default_rng(cfg.seed)
    out = OutputWriter(cfg)
    vp = Viewport(cfg.resolution, cfg.resolution)

    verts_true, tris = cube_mesh()
    if cfg.coloring == "continuous":
        attr_tris = tris
        colors_true = continuous_palette()
    else:
        attr_tris, _ = cube_face_attr_index()
        colors_true = discontinuous_palette()
    adj = build_edge_adjacency(IndexBuffer(tris))

    verts = verts_true + rng.uniform(-0.5, 0.5, size=verts_true.shape)
    colors = rng.uniform(0.0, 1.0, size=colors_true.shape)

    st_v = AdamState.for_params(verts)
    st_c = AdamState.for_params(colors)

    log = ConvergenceLog()
    for it in range(cfg.iterations):
        mvp, _ = random_viewpoint(rng, CAMERA_RADIUS)
        ref_tape = Tape()
        ref = render_cube(ref_tape, verts_true, colors_true, mvp, tris,
                          attr_tris, adj, vp, watch=False).value
        tape = Tape()
        img = render_cube(tape, verts, colors, mvp, tris, attr_tris, adj, vp)
        loss, dimg = l2_image_loss(img.value, ref)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss diverged at iteration {it}")
        grads = tape.backward(img, dimg)
        lr = exp_schedule(cfg.lr0, cfg.lr1, it, cfg.iterations)
        verts = adam_step(st_v, verts, grads["verts"], lam=lr)
        colors = adam_step(st_c, colors, grads["colors"], lam=lr)

        err = float(np.linalg.norm(verts - verts_true, axis=1).mean())
        if it % 10 == 0 or it == cfg.iterations - 1:
            log.append(it, loss, err)
        if out.dir and (it % cfg.snapshot_interval == 0 or it == cfg.iterations - 1):
            out.frame(it, img.value)
        if progress and it % 500 == 0:
            progress(it, loss, err)

    out.log(log)
    if out.dir:
        from ..io import save_obj
        save_obj(out.path("mesh.obj"), verts, tris)
    failed = log.final_metric() > FAIL_CUTOFF
    return CubeResult(log, verts, colors, failed)
