"""The full image-text classifier: both towers plus the similarity head."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .config import DEFAULT_TEMPLATE, ModelConfig
from .errors import ConfigError
from .head import CrossModalParams, classify, similarity_logits
from .tensor import Tensor
from .text import ClassPrompt, TextEncoderParams, Vocabulary, build_class_prompts, encode_prompts
from .vision import VisionEncoderParams, encode_image


@dataclass
class ClipModel:
    config: ModelConfig
    vocab: Vocabulary
    class_names: list[str]
    template: str
    vision: VisionEncoderParams
    text: TextEncoderParams
    head: CrossModalParams

    def __post_init__(self):
        if len(self.class_names) != self.config.num_classes:
            raise ConfigError(
                f"{len(self.class_names)} class names but config.num_classes={self.config.num_classes}"
            )
        if len(set(self.class_names)) != len(self.class_names):
            raise ConfigError("class names must be distinct")
        if len(self.vocab) > self.config.vocab_size:
            raise ConfigError(f"vocabulary has {len(self.vocab)} tokens, config.vocab_size={self.config.vocab_size}")
        self.prompts: list[ClassPrompt] = build_class_prompts(
            self.class_names, self.template, self.vocab, self.config
        )

    @classmethod
    def initialize(
        cls,
        config: ModelConfig,
        class_names: Sequence[str],
        template: str = DEFAULT_TEMPLATE,
    ) -> "ClipModel":
        """Fresh random parameters drawn from ``config.init_seed``."""
        vision_ss, text_ss, head_ss = np.random.SeedSequence(config.init_seed).spawn(3)
        return cls(
            config=config,
            vocab=Vocabulary.for_classes(class_names, template),
            class_names=list(class_names),
            template=template,
            vision=VisionEncoderParams.init(config, np.random.default_rng(vision_ss)),
            text=TextEncoderParams.init(config, np.random.default_rng(text_ss)),
            head=CrossModalParams.init(config, np.random.default_rng(head_ss)),
        )

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for prefix, group in (("vision.", self.vision), ("text.", self.text), ("head.", self.head)):
            out.update(group.named_parameters(prefix))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.parameters() if p.requires_grad]

    def set_trainable(self, vision: bool = True, text: bool = True) -> None:
        for p in self.vision.parameters():
            p.requires_grad = vision
        for p in self.text.parameters():
            p.requires_grad = text
        for p in self.head.parameters():
            p.requires_grad = True

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        if set(arrays) != set(params):
            raise ConfigError("parameter names do not match the model")
        for name, p in params.items():
            if arrays[name].shape != p.shape:
                raise ConfigError(f"{name}: stored shape {arrays[name].shape} != model shape {p.shape}")
            p.data[...] = arrays[name]

    def checksum(self, group: str | None = None) -> str:
        """SHA-256 over parameter bytes, optionally restricted to one tower."""
        h = hashlib.sha256()
        for name, p in self.named_parameters().items():
            if group is None or name.startswith(group + "."):
                h.update(name.encode())
                h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()

    # forward passes

    def encode_images(self, images) -> Tensor:
        return encode_image(images, self.config, self.vision)

    def class_embeddings(self) -> Tensor:
        return encode_prompts(self.prompts, self.config, self.text)

    def logits(self, images, class_embs: Tensor | None = None) -> Tensor:
        if class_embs is None:
            class_embs = self.class_embeddings()
        return similarity_logits(self.encode_images(images), class_embs, self.head)

    def predict(self, images, class_embs: Tensor | None = None) -> tuple[np.ndarray, np.ndarray | int]:
        """Probabilities and predicted indices, without recording gradients."""
        if class_embs is None:
            class_embs = self.class_embeddings()
        probs, pred = classify(self.encode_images(images), class_embs, self.head)
        return probs.data, pred
