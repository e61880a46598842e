from .common import ConvergenceLog, ExperimentConfig
from .cube import run_cube
from .earth import run_earth
from .envphong import run_envphong
from .pose import run_pose

__all__ = [
    "ConvergenceLog",
    "ExperimentConfig",
    "run_cube",
    "run_earth",
    "run_envphong",
    "run_pose",
]
