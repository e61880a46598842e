"""Shared experiment plumbing: configs, logs, output writing."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..io import write_csv, write_png


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "cube"
    resolution: int = 16
    iterations: int = 5000
    seed: int = 0
    lr0: float = 1e-2
    lr1: float = 1e-4
    out_dir: Optional[str] = None
    # experiment-specific knobs
    coloring: str = "continuous"        # cube: continuous | discontinuous
    mipmaps: bool = True                # earth / envphong
    mode: str = "plain"                 # pose: plain | two-phase | symmetry
    trials: int = 1                     # pose
    tex_size: int = 128                 # earth / envphong face size
    paper_scale: bool = False
    snapshot_every: int = 0             # 0 = auto (iterations // 8)

    def __post_init__(self):
        if self.resolution < 2:
            raise ConfigError(f"resolution must be >= 2, got {self.resolution}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.coloring not in ("continuous", "discontinuous"):
            raise ConfigError(f"unknown coloring {self.coloring!r}")
        if self.mode not in ("plain", "two-phase", "symmetry"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.experiment not in ("cube", "earth", "envphong", "pose"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    @property
    def snapshot_interval(self):
        if self.snapshot_every > 0:
            return self.snapshot_every
        return max(1, self.iterations // 8)


class DivergenceError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass
class ConvergenceLog:
    """Append-only (iteration, loss, metric) records."""

    rows: list = field(default_factory=list)

    def append(self, iteration: int, loss: float, metric: float):
        if self.rows and iteration <= self.rows[-1][0]:
            raise ValueError("iterations must be strictly increasing")
        self.rows.append((int(iteration), float(loss), float(metric)))

    @property
    def iterations(self):
        return np.array([r[0] for r in self.rows])

    @property
    def losses(self):
        return np.array([r[1] for r in self.rows])

    @property
    def metrics(self):
        return np.array([r[2] for r in self.rows])

    def final_metric(self) -> float:
        return self.rows[-1][2] if self.rows else float("nan")

    def save(self, path):
        write_csv(self.rows, path)


class OutputWriter:
    """Writes config echo, CSV log, and periodic PNG snapshots."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dir = cfg.out_dir
        if self.dir:
            os.makedirs(self.dir, exist_ok=True)
            with open(os.path.join(self.dir, "config.json"), "w") as fh:
                json.dump(asdict(cfg), fh, indent=2, sort_keys=True)

    def frame(self, iteration: int, img):
        if not self.dir:
            return
        img = np.clip(np.asarray(img, np.float64), 0.0, 1.0)
        write_png(img, os.path.join(self.dir, f"frame_{iteration:06d}.png"))

    def image(self, name: str, img):
        if not self.dir:
            return
        img = np.clip(np.asarray(img, np.float64), 0.0, 1.0)
        write_png(img, os.path.join(self.dir, name))

    def log(self, log: ConvergenceLog):
        if self.dir:
            log.save(os.path.join(self.dir, "log.csv"))

    def path(self, name):
        return os.path.join(self.dir, name) if self.dir else None


def psnr(a, b, peak: float = 1.0) -> float:
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    mse = float(((a - b) ** 2).mean())
    if mse == 0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def box_downsample(img, factor: int):
    h, w, c = img.shape
    return img.reshape(h // factor, factor, w // factor, factor, c).mean(axis=(1, 3))
