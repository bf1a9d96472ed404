"""Semantic scene completion from single depth images.

A self-contained stack: reverse-mode autodiff over numpy, the five
network blocks, adversarial training, a procedural scene corpus with a
depth renderer, evaluation, and a command line front end.
"""

from .config import (
    PRESETS,
    ArchConfig,
    HyperParams,
    desk_scale,
    full_scale,
    micro_scale,
    resolve_preset,
    tiny_scale,
    validate_config,
)
from .errors import (
    ConfigError,
    FormatError,
    NumericError,
    PlacementError,
    ShapeError,
    VoxsemError,
)
from .estimator import SceneCompleter
from .experiment import (
    ExperimentConfig,
    RunConfig,
    build_dataset,
    evaluate_models,
    run_experiment,
)
from .export import export_geometry
from .gradcheck import grad_check
from .metrics import EvalReport, argmax_labels, evaluate, mean_report
from .networks import ModelSet, build_models
from .optim import Adam
from .scenes import CameraModel, DepthImage, SceneConfig, SemanticVolume, generate_scene
from .splits import kfold_split
from .tensor import Tensor, backward
from .trainer import STAGES, TrainState, run_training, train
from .vsem import Dataset, load_dataset, save_dataset

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "ArchConfig",
    "CameraModel",
    "ConfigError",
    "Dataset",
    "DepthImage",
    "EvalReport",
    "ExperimentConfig",
    "FormatError",
    "HyperParams",
    "ModelSet",
    "NumericError",
    "PRESETS",
    "PlacementError",
    "RunConfig",
    "STAGES",
    "SceneCompleter",
    "SceneConfig",
    "SemanticVolume",
    "ShapeError",
    "Tensor",
    "TrainState",
    "VoxsemError",
    "argmax_labels",
    "backward",
    "build_dataset",
    "build_models",
    "desk_scale",
    "evaluate",
    "evaluate_models",
    "export_geometry",
    "full_scale",
    "generate_scene",
    "grad_check",
    "kfold_split",
    "load_dataset",
    "mean_report",
    "micro_scale",
    "resolve_preset",
    "run_experiment",
    "run_training",
    "save_dataset",
    "tiny_scale",
    "train",
    "validate_config",
    "__version__",
]
