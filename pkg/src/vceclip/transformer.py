"""Pre-norm transformer encoder blocks shared by both towers."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor

INIT_STD = 0.02


def trunc_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """Normal(0, std) resampled until every value lies within two std."""
    out = rng.standard_normal(size=shape)
    flat = out.reshape(-1)
    idx = np.flatnonzero(np.abs(flat) > 2.0)
    while idx.size:
        flat[idx] = rng.standard_normal(size=idx.size)
        idx = idx[np.abs(flat[idx]) > 2.0]
    out *= std
    return out


class ParamGroup:
    """Mixin for dataclasses whose fields are tensors, lists of groups, or groups."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            name = f"{prefix}{f.name}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, ParamGroup):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]


@dataclass
class EncoderLayerParams(ParamGroup):
    ln1_gamma: Tensor
    ln1_beta: Tensor
    q_weight: Tensor
    q_bias: Tensor
    k_weight: Tensor
    k_bias: Tensor
    v_weight: Tensor
    v_bias: Tensor
    out_weight: Tensor
    out_bias: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    fc1_weight: Tensor
    fc1_bias: Tensor
    fc2_weight: Tensor
    fc2_bias: Tensor

    @classmethod
    def init(cls, dim: int, ffn_dim: int, rng: np.random.Generator) -> "EncoderLayerParams":
        def w(*shape):
            return T.parameter(trunc_normal(rng, shape), copy=False)

        def zeros(n):
            return T.parameter(np.zeros(n))

        return cls(
            ln1_gamma=T.parameter(np.ones(dim)),
            ln1_beta=zeros(dim),
            q_weight=w(dim, dim),
            q_bias=zeros(dim),
            k_weight=w(dim, dim),
            k_bias=zeros(dim),
            v_weight=w(dim, dim),
            v_bias=zeros(dim),
            out_weight=w(dim, dim),
            out_bias=zeros(dim),
            ln2_gamma=T.parameter(np.ones(dim)),
            ln2_beta=zeros(dim),
            fc1_weight=w(dim, ffn_dim),
            fc1_bias=zeros(ffn_dim),
            fc2_weight=w(ffn_dim, dim),
            fc2_bias=zeros(dim),
        )


def multi_head_attention(
    x: Tensor, layer: EncoderLayerParams, heads: int, return_weights: bool = False
):
    """Full (unmasked) self-attention over the second-to-last axis of ``x``.

    ``x`` is ``[..., S, D]``. With ``return_weights`` the attention matrix
    ``[..., H, S, S]`` is returned alongside the output.
    """
    *lead, seq, dim = x.shape
    head_dim = dim // heads

    def split(t: Tensor) -> Tensor:
        return T.swapaxes(t.reshape(*lead, seq, heads, head_dim), -2, -3)

    q = split(x @ layer.q_weight + layer.q_bias)
    k = split(x @ layer.k_weight + layer.k_bias)
    v = split(x @ layer.v_weight + layer.v_bias)
    scores = (q @ T.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(head_dim))
    weights = T.softmax(scores, axis=-1)
    ctx = T.swapaxes(weights @ v, -2, -3).reshape(*lead, seq, dim)
    out = ctx @ layer.out_weight + layer.out_bias
    return (out, weights) if return_weights else out


def encoder_layer(x: Tensor, layer: EncoderLayerParams, heads: int) -> Tensor:
    h = T.layer_norm(x, layer.ln1_gamma, layer.ln1_beta)
    x = x + multi_head_attention(h, layer, heads)
    h = T.layer_norm(x, layer.ln2_gamma, layer.ln2_beta)
    h = T.gelu(h @ layer.fc1_weight + layer.fc1_bias)
    return x + (h @ layer.fc2_weight + layer.fc2_bias)
