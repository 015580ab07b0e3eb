"""Edge-enhanced Transformer style transfer on a from-scratch autodiff substrate."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, TrainConfig, load_config
from .imageio import load_image, save_image
from .losses import FeatureExtractor, LossWeights
from .model import ModelConfig, init_params, stylize, stylize_array

__version__ = "0.1.0"

__all__ = [
    "FeatureExtractor",
    "LossWeights",
    "ModelConfig",
    "RunConfig",
    "TrainConfig",
    "init_params",
    "load_checkpoint",
    "load_config",
    "load_image",
    "save_checkpoint",
    "save_image",
    "stylize",
    "stylize_array",
]
