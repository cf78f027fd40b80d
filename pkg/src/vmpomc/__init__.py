"""Variational MPO Monte Carlo for steady states of open spin chains."""

from .errors import *  # noqa: F401,F403
from .models import ModelSpec
from .mpo import MpoAnsatz, hermitize, init_random, load_checkpoint, normalize_trace, save_checkpoint
from .optimizer import OptimizerConfig, run_optimization

__all__ = [
    "ModelSpec",
    "MpoAnsatz",
    "OptimizerConfig",
    "hermitize",
    "init_random",
    "load_checkpoint",
    "normalize_trace",
    "run_optimization",
    "save_checkpoint",
]
