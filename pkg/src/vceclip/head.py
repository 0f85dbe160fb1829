"""Shared-space projection, scaled cosine similarity and softmax classification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import DimensionError
from .tensor import Tensor
from .transformer import ParamGroup, trunc_normal

INIT_LOG_LOGIT_SCALE = math.log(1 / 0.07)
MAX_LOG_LOGIT_SCALE = math.log(100.0)


@dataclass
class CrossModalParams(ParamGroup):
    image_projection: Tensor  # [vision_embed_dim, shared_dim]
    text_projection: Tensor  # [text_embed_dim, shared_dim]
    log_logit_scale: Tensor  # scalar

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "CrossModalParams":
        return cls(
            image_projection=T.parameter(trunc_normal(rng, (config.vision_embed_dim, config.shared_dim)), copy=False),
            text_projection=T.parameter(trunc_normal(rng, (config.text_embed_dim, config.shared_dim)), copy=False),
            log_logit_scale=T.parameter(INIT_LOG_LOGIT_SCALE),
        )

    @property
    def logit_scale(self) -> float:
        return math.exp(float(self.log_logit_scale.data))

    def clamp_scale(self) -> None:
        """Keep exp(log_logit_scale) <= 100."""
        np.minimum(self.log_logit_scale.data, MAX_LOG_LOGIT_SCALE, out=self.log_logit_scale.data)


def project_image(image_emb, params: CrossModalParams) -> Tensor:
    image_emb = T.as_tensor(image_emb)
    if image_emb.shape[-1] != params.image_projection.shape[0]:
        raise DimensionError(
            f"image embedding width {image_emb.shape[-1]} != projection input {params.image_projection.shape[0]}"
        )
    if image_emb.ndim == 1:
        return T.l2_normalize((image_emb.reshape(1, -1) @ params.image_projection).reshape(-1))
    return T.l2_normalize(image_emb @ params.image_projection)


def project_text(class_embs, params: CrossModalParams) -> Tensor:
    class_embs = T.as_tensor(class_embs)
    if class_embs.ndim != 2 or class_embs.shape[1] != params.text_projection.shape[0]:
        raise DimensionError(
            f"class embeddings {class_embs.shape} do not match projection input {params.text_projection.shape[0]}"
        )
    return T.l2_normalize(class_embs @ params.text_projection)


def similarity_logits(image_emb, class_embs, params: CrossModalParams) -> Tensor:
    """exp(log_logit_scale) * cosine(image, class_c) in the shared space.

    ``image_emb`` is ``[Dv]`` (returns ``[C]``) or ``[B, Dv]`` (returns ``[B, C]``).
    """
    img = project_image(image_emb, params)
    txt = project_text(class_embs, params)
    if img.ndim == 1:
        cos = (img.reshape(1, -1) @ T.transpose(txt)).reshape(-1)
    else:
        cos = img @ T.transpose(txt)
    return cos * T.exp(params.log_logit_scale)


def classify(image_emb, class_embs, params: CrossModalParams) -> tuple[Tensor, np.ndarray | int]:
    """Softmax probabilities and argmax prediction (ties go to the lowest index)."""
    class_embs = T.as_tensor(class_embs)
    if class_embs.ndim != 2 or class_embs.shape[0] < 2:
        raise DimensionError("classify needs at least two class embeddings")
    logits = similarity_logits(image_emb, class_embs, params)
    probs = T.softmax(logits, axis=-1)
    pred = np.argmax(logits.data, axis=-1)
    return probs, (int(pred) if pred.ndim == 0 else pred)
