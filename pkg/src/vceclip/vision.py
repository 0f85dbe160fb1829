"""Vision Transformer image tower."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import DimensionError
from .tensor import Tensor
from .transformer import EncoderLayerParams, ParamGroup, encoder_layer, trunc_normal


@dataclass
class VisionEncoderParams(ParamGroup):
    patch_weight: Tensor  # [flatten_dim, D]
    patch_bias: Tensor  # [D]
    cls_token: Tensor  # [D]
    position_embeddings: Tensor  # [num_patches + 1, D]
    layers: list[EncoderLayerParams]
    ln_final_gamma: Tensor
    ln_final_beta: Tensor

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "VisionEncoderParams":
        d = config.vision_embed_dim
        return cls(
            patch_weight=T.parameter(trunc_normal(rng, (config.flatten_dim, d)), copy=False),
            patch_bias=T.parameter(np.zeros(d)),
            cls_token=T.parameter(trunc_normal(rng, (d,)), copy=False),
            position_embeddings=T.parameter(trunc_normal(rng, (config.vision_seq_len, d)), copy=False),
            layers=[
                EncoderLayerParams.init(d, d * config.ffn_multiplier, rng)
                for _ in range(config.vision_layers)
            ],
            ln_final_gamma=T.parameter(np.ones(d)),
            ln_final_beta=T.parameter(np.zeros(d)),
        )


def patchify(image, patch_size: int) -> Tensor:
    """Split ``[..., H, W, C]`` into ``[..., N, P*P*C]`` non-overlapping patches.

    Patches are ordered left-to-right then top-to-bottom; each row is the
    patch flattened row-major with channels innermost.
    """
    image = T.as_tensor(image)
    if image.ndim < 3:
        raise DimensionError(f"patchify expects [..., H, W, C], got {image.shape}")
    *lead, h, w, c = image.shape
    if h % patch_size or w % patch_size:
        raise DimensionError(f"image {h}x{w} is not divisible into {patch_size}x{patch_size} patches")
    gh, gw = h // patch_size, w // patch_size
    n = len(lead)
    x = image.reshape(*lead, gh, patch_size, gw, patch_size, c)
    axes = list(range(n)) + [n, n + 2, n + 1, n + 3, n + 4]
    x = T.transpose(x, axes)
    return x.reshape(*lead, gh * gw, patch_size * patch_size * c)


def embed_patches(patches, params: VisionEncoderParams) -> Tensor:
    """Linear patch projection, prepend [CLS], add position embeddings."""
    patches = T.as_tensor(patches)
    flat, d = params.patch_weight.shape
    if patches.shape[-1] != flat:
        raise DimensionError(f"patch width {patches.shape[-1]} does not match projection input {flat}")
    *lead, n, _ = patches.shape
    if n + 1 != params.position_embeddings.shape[0]:
        raise DimensionError(
            f"{n} patches need {n + 1} position rows, params have {params.position_embeddings.shape[0]}"
        )
    x = patches @ params.patch_weight + params.patch_bias
    cls = T.broadcast_to(params.cls_token, (*lead, 1, d))
    x = T.concat([cls, x], axis=-2)
    return x + params.position_embeddings


def encode_image(image, config: ModelConfig, params: VisionEncoderParams, pool: str = "cls") -> Tensor:
    """Image ``[H, W, C]`` (or a batch ``[B, H, W, C]``) to its summary feature.

    ``pool="mean"`` averages the final token states instead of reading the
    [CLS] row; it exists for symmetry checks.
    """
    image = T.as_tensor(image)
    expected = (config.image_size, config.image_size, config.channels)
    if image.ndim not in (3, 4) or image.shape[-3:] != expected:
        raise DimensionError(f"expected image shape [..., {expected}], got {image.shape}")
    if params.patch_weight.shape != (config.flatten_dim, config.vision_embed_dim):
        raise DimensionError("vision params do not match config")
    x = embed_patches(patchify(image, config.patch_size), params)
    for layer in params.layers:
        x = encoder_layer(x, layer, config.vision_heads)
    x = T.layer_norm(x, params.ln_final_gamma, params.ln_final_beta)
    if pool == "mean":
        return T.mean(x, axis=-2)
    return x[..., 0, :]
