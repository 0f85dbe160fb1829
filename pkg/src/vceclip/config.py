"""Architecture hyperparameters."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

DEFAULT_CLASS_NAMES: tuple[str, ...] = (
    "Angioectasia",
    "Bleeding",
    "Erosion",
    "Erythema",
    "Foreign Body",
    "Lymphangiectasia",
    "Polyp",
    "Ulcer",
    "Worms",
    "Normal",
)

DEFAULT_TEMPLATE = "this is an endoscopic image of {class}"


@dataclass(frozen=True)
class ModelConfig:
    """Sizes for both encoders and the shared head.

    Defaults follow a ViT-B/16 image tower and a BERT-base text tower. Tests
    and desk-scale runs shrink them with :meth:`toy`.
    """

    image_size: int = 224
    patch_size: int = 16
    channels: int = 3
    vision_embed_dim: int = 768
    vision_layers: int = 12
    vision_heads: int = 12
    text_embed_dim: int = 768
    text_layers: int = 12
    text_heads: int = 12
    vocab_size: int = 512
    max_text_len: int = 256
    shared_dim: int = 512
    num_classes: int = 10
    ffn_multiplier: int = 4
    init_seed: int = 0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{f.name} must be an integer, got {value!r}")
        positive = [f.name for f in dataclasses.fields(self) if f.name not in ("vision_layers", "text_layers", "init_seed")]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("vision_layers", "text_layers", "init_seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.image_size % self.patch_size:
            raise ConfigError(f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}")
        if self.vision_embed_dim % self.vision_heads:
            raise ConfigError("vision_embed_dim must be divisible by vision_heads")
        if self.text_embed_dim % self.text_heads:
            raise ConfigError("text_embed_dim must be divisible by text_heads")
        if self.max_text_len < 2:
            raise ConfigError("max_text_len must be >= 2")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.vocab_size < 3:
            raise ConfigError("vocab_size must leave room for the reserved tokens")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size**2

    @property
    def flatten_dim(self) -> int:
        return self.patch_size**2 * self.channels

    @property
    def vision_seq_len(self) -> int:
        return self.num_patches + 1

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def toy(cls, **overrides) -> "ModelConfig":
        """32x32 images, one 16-wide layer per tower, 2 heads, vocab 50."""
        base = dict(
            image_size=32,
            patch_size=16,
            vision_embed_dim=16,
            vision_layers=1,
            vision_heads=2,
            text_embed_dim=16,
            text_layers=1,
            text_heads=2,
            vocab_size=50,
            max_text_len=32,
            shared_dim=16,
        )
        base.update(overrides)
        return cls(**base)
