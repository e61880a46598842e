"""Cube pose recovery from a single image: a local-minima playground.

Three modes:
  plain     noise-regularized Adam: the pose quaternion is perturbed toward a
            random orientation each iteration, with strength ramped down.
  two-phase a gradient-free greedy search (keep the lowest-loss proposal)
            finds a decent basin first; Adam with the tail of the noise
            schedule polishes from there.
  symmetry  the greedy phase additionally composes random cube-symmetry
            rotations, bridging minima that differ by a face permutation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from ..buffers import IndexBuffer, build_edge_adjacency
from ..camera import look_at, perspective, rotation_from_quat, rotation_from_quat_backward
from ..meshes import cube_face_attr_index, cube_mesh
from ..optim import (AdamState, adam_step, exp_schedule, geodesic_angle_deg,
                     l2_image_loss, pose_noise, quat_normalize, random_unit_quat,
                     symmetry_noise)
from ..pipeline import Tape
from ..raster import Viewport
from .common import ConvergenceLog, DivergenceError, ExperimentConfig, OutputWriter

CAMERA_RADIUS = 3.5
FOV = 45.0
CLEAR = np.zeros(3)
NOISE_START = 1.0
NOISE_END = 0.003
GREEDY_FRACTION = 0.4

FACE_COLORS = np.array([
    [0.9, 0.1, 0.1],   # -Z red
    [0.1, 0.8, 0.1],   # +Z green
    [0.15, 0.25, 0.9],  # -Y blue
    [0.95, 0.85, 0.1],  # +Y yellow
    [0.1, 0.85, 0.9],   # +X cyan
    [0.9, 0.2, 0.9],    # -X magenta
])


def _scene():
    verts, tris = cube_mesh()
    attr_tris, _ = cube_face_attr_index()
    colors = np.repeat(FACE_COLORS, 4, axis=0)
    adj = build_edge_adjacency(IndexBuffer(tris))
    return verts, tris, attr_tris, colors, adj


def render_pose(tape: Tape, q, pv, scene, vp, watch=True):
    verts, tris, attr_tris, colors, adj = scene
    model = rotation_from_quat(quat_normalize(q))
    mv = tape.input("model", model) if watch else tape.constant(model)
    mvp = tape.matmul(tape.constant(pv), mv)
    clip = tape.transform_clip(tape.constant(verts), mvp)
    grid = tape.rasterize(clip, tris, vp)
    col, _ = tape.interpolate(tape.constant(colors), attr_tris, grid)
    img = tape.composite_background(col, grid.value.mask, tape.constant(CLEAR))
    out, _ = tape.antialias(img, grid, clip, tris, adj)
    return out


def _loss_only(q, pv, scene, vp, ref):
    tape = Tape()
    img = render_pose(tape, q, pv, scene, vp, watch=False)
    loss, _ = l2_image_loss(img.value, ref)
    return loss


def _loss_and_qgrad(q, pv, scene, vp, ref):
    tape = Tape()
    img = render_pose(tape, q, pv, scene, vp)
    loss, dimg = l2_image_loss(img.value, ref)
    grads = tape.backward(img, dimg)
    gq = rotation_from_quat_backward(quat_normalize(q), grads["model"])
    return loss, gq


def run_pose_trial(cfg: ExperimentConfig, trial_rng) -> tuple:
    """Returns (final geodesic error deg, final loss, reference q, final q)."""
    scene = _scene()
    vp = Viewport(cfg.resolution, cfg.resolution)
    pv = perspective(FOV, 1.0, 0.5, 20.0) @ look_at(
        np.array([0.0, 0.0, CAMERA_RADIUS]), np.zeros(3), np.array([0.0, 1.0, 0.0]))

    q_ref = random_unit_quat(trial_rng)
    ref_tape = Tape()
    ref = render_pose(ref_tape, q_ref, pv, scene, vp, watch=False).value

    q = random_unit_quat(trial_rng)
    iters = cfg.iterations
    st = AdamState.for_params(np.zeros(4))
    two_phase = cfg.mode in ("two-phase", "symmetry")
    greedy_iters = int(GREEDY_FRACTION * iters) if two_phase else 0

    best_q = q.copy()
    best_loss = _loss_only(q, pv, scene, vp, ref)
    loss = best_loss
    for it in range(iters):
        s = exp_schedule(NOISE_START, NOISE_END, it, iters)
        if it < greedy_iters:
            prop = best_q
            if cfg.mode == "symmetry" and trial_rng.random() < 0.5:
                prop = symmetry_noise(prop, trial_rng)
            prop = pose_noise(prop, s, trial_rng)
            loss = _loss_only(prop, pv, scene, vp, ref)
            if loss < best_loss:
                best_loss = loss
                best_q = prop
            q = best_q
            continue
        q_work = pose_noise(q, s, trial_rng)
        loss, gq = _loss_and_qgrad(q_work, pv, scene, vp, ref)
        if not np.isfinite(loss):
            raise DivergenceError("pose loss diverged")
        lr = exp_schedule(cfg.lr0, cfg.lr1, it, iters)
        q = quat_normalize(adam_step(st, q_work, gq, lam=lr))

    return geodesic_angle_deg(q, q_ref), loss, q_ref, q


@dataclass
class PoseResult:
    log: ConvergenceLog
    errors: List[float]
    final_pose: np.ndarray

    @property
    def mean_error(self):
        return float(np.mean(self.errors))


def run_pose(cfg: ExperimentConfig, progress=None) -> PoseResult:
    out = OutputWriter(cfg)
    log = ConvergenceLog()
    errors = []
    last_q = None
    for trial in range(cfg.trials):
        trial_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, trial]))
        err, loss, q_ref, q = run_pose_trial(cfg, trial_rng)
        errors.append(err)
        last_q = q
        log.append(trial, loss, err)
        if progress:
            progress(trial, loss, err)
    out.log(log)
    return PoseResult(log, errors, last_q)
