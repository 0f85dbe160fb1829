"""Image-text (CLIP-style) classifier for capsule-endoscopy frames, built on a small numpy autodiff engine."""

from .config import DEFAULT_CLASS_NAMES, DEFAULT_TEMPLATE, ModelConfig
from .model import ClipModel
from .tensor import Tape, Tensor, backward

__all__ = [
    "DEFAULT_CLASS_NAMES",
    "DEFAULT_TEMPLATE",
    "ClipModel",
    "ModelConfig",
    "Tape",
    "Tensor",
    "backward",
]

__version__ = "0.1.0"
