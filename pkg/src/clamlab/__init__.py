"""Desk-scale lab for latent action models with continuous latents.

Pretrain a latent inverse/forward dynamics model with a jointly trained
action decoder on mostly action-free trajectories, relabel those
trajectories with latent actions, train a latent policy on them, and
compare against supervised baselines under one evaluation harness.
"""

from .ablate import STUDIES, run_study, summarize
from .autodiff import Tape, Tensor
from .config import (ConfigError, ExperimentConfig, LamSettings,
                     PolicySettings, load_config, save_config)
from .data import (Dataset, Trajectory, gather_windows, generate_dataset,
                   load_dataset, save_dataset, transition_pairs)
from .diagnostics import DegeneracyReport, degeneracy_report
from .envs import ENV_KINDS, EnvSpec, observe, reset, rollout, step
from .errors import (BadMagicError, FormatError, ShapeMismatchError,
                     TrainingDivergedError, TruncatedFileError,
                     VersionMismatchError)
from .experiment import ExperimentResult, run_experiment, run_pipeline
from .gradcheck import REGISTERED_OP_CASES, grad_check_fn, run_gradcheck_suite
from .lam import ClamEstimator, LamModel, relabel
from .policies import (BehaviorCloning, EvalReport, ExpertAgent, LatentPolicy,
                       RandomAgent, VptBaseline, evaluate, load_policy,
                       train_lapo_style)
from .rng import derive_seed, make_rng

__version__ = "0.1.0"

__all__ = [
    "BadMagicError", "BehaviorCloning", "ClamEstimator", "ConfigError",
    "Dataset", "DegeneracyReport", "ENV_KINDS", "EnvSpec", "EvalReport",
    "ExperimentConfig", "ExperimentResult", "ExpertAgent", "FormatError",
    "LamModel", "LamSettings", "LatentPolicy", "PolicySettings",
    "RandomAgent", "REGISTERED_OP_CASES", "STUDIES", "ShapeMismatchError",
    "Tape", "Tensor", "Trajectory", "TrainingDivergedError",
    "TruncatedFileError", "VersionMismatchError", "VptBaseline",
    "degeneracy_report", "derive_seed", "evaluate", "gather_windows",
    "generate_dataset", "grad_check_fn", "load_config", "load_dataset",
    "load_policy", "make_rng", "observe", "relabel", "reset", "rollout",
    "run_experiment", "run_gradcheck_suite", "run_pipeline", "run_study",
    "save_config", "save_dataset", "step", "summarize", "train_lapo_style",
    "transition_pairs",
]
