"""Word-level tokenizer and the BERT-style text tower."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .config import DEFAULT_TEMPLATE, ModelConfig
from .errors import ConfigError, DimensionError
from .tensor import Tensor
from .transformer import EncoderLayerParams, ParamGroup, encoder_layer, trunc_normal

CLS, PAD, UNK = "[CLS]", "[PAD]", "[UNK]"
RESERVED = (CLS, PAD, UNK)
CLS_ID, PAD_ID, UNK_ID = 0, 1, 2

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def split_words(text: str) -> list[str]:
    """Lowercase, then split on whitespace and punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    tokens: list[str]
    token_to_id: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:3]) != RESERVED:
            raise ConfigError(f"vocabulary must start with {RESERVED}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ConfigError("vocabulary has duplicate tokens")
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    @classmethod
    def build(cls, corpus: Iterable[str]) -> "Vocabulary":
        words = {w for text in corpus for w in split_words(text)} - set(RESERVED)
        return cls(list(RESERVED) + sorted(words))

    @classmethod
    def for_classes(cls, class_names: Sequence[str], template: str = DEFAULT_TEMPLATE) -> "Vocabulary":
        return cls.build([template.replace("{class}", " "), *class_names])


def render_prompt(class_name: str, template: str = DEFAULT_TEMPLATE) -> str:
    return template.replace("{class}", class_name).lower()


def tokenize(text: str, vocab: Vocabulary, max_len: int) -> list[int]:
    if max_len < 2:
        raise ConfigError("max_len must be >= 2")
    ids = [CLS_ID] + [vocab.lookup(w) for w in split_words(text)]
    return ids[:max_len]


@dataclass
class ClassPrompt:
    class_name: str
    prompt_text: str
    token_ids: list[int]

    @classmethod
    def make(cls, class_name: str, template: str, vocab: Vocabulary, max_len: int) -> "ClassPrompt":
        text = render_prompt(class_name, template)
        return cls(class_name, text, tokenize(text, vocab, max_len))


@dataclass
class TextEncoderParams(ParamGroup):
    token_embeddings: Tensor  # [vocab_size, D]
    position_embeddings: Tensor  # [max_text_len, D]
    layers: list[EncoderLayerParams]
    ln_final_gamma: Tensor
    ln_final_beta: Tensor

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "TextEncoderParams":
        d = config.text_embed_dim
        return cls(
            token_embeddings=T.parameter(trunc_normal(rng, (config.vocab_size, d)), copy=False),
            position_embeddings=T.parameter(trunc_normal(rng, (config.max_text_len, d)), copy=False),
            layers=[
                EncoderLayerParams.init(d, d * config.ffn_multiplier, rng)
                for _ in range(config.text_layers)
            ],
            ln_final_gamma=T.parameter(np.ones(d)),
            ln_final_beta=T.parameter(np.zeros(d)),
        )


def encode_text(token_ids, config: ModelConfig, params: TextEncoderParams) -> Tensor:
    """Final [CLS] state of an unpadded id sequence.

    ``token_ids`` may also be ``[G, S]``: G sequences of the same length,
    encoded together (returns ``[G, D]``).
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim not in (1, 2) or ids.shape[-1] == 0:
        raise DimensionError("encode_text expects a non-empty id sequence or a [G, S] block")
    seq = ids.shape[-1]
    if seq > config.max_text_len:
        raise DimensionError(f"sequence of {seq} tokens exceeds max_text_len {config.max_text_len}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise IndexError(f"token id out of range [0, {config.vocab_size})")
    x = T.embedding_lookup(params.token_embeddings, ids) + params.position_embeddings[:seq]
    for layer in params.layers:
        x = encoder_layer(x, layer, config.text_heads)
    x = T.layer_norm(x, params.ln_final_gamma, params.ln_final_beta)
    return x[..., 0, :]


def encode_prompts(prompts: Sequence[ClassPrompt], config: ModelConfig, params: TextEncoderParams) -> Tensor:
    """``[len(prompts), D]`` class embeddings; equal-length prompts share one pass."""
    groups: dict[int, list[int]] = {}
    for i, p in enumerate(prompts):
        groups.setdefault(len(p.token_ids), []).append(i)
    rows: list[Tensor | None] = [None] * len(prompts)
    for members in groups.values():
        out = encode_text([prompts[i].token_ids for i in members], config, params)
        for j, i in enumerate(members):
            rows[i] = out[j : j + 1]
    return T.concat(rows, axis=0)


def build_class_prompts(
    class_names: Sequence[str], template: str, vocab: Vocabulary, config: ModelConfig
) -> list[ClassPrompt]:
    if len(class_names) < 2:
        raise ConfigError("need at least two class names")
    prompts = []
    for name in class_names:
        missing = [w for w in split_words(name) if w not in vocab]
        if missing or not split_words(name):
            raise ConfigError(f"class name {name!r} is not part of the configured label set")
        prompts.append(ClassPrompt.make(name, template, vocab, config.max_text_len))
    return prompts


def build_class_embeddings(
    class_names: Sequence[str],
    template: str,
    vocab: Vocabulary,
    config: ModelConfig,
    params: TextEncoderParams,
) -> Tensor:
    """Stack ``encode_text`` of each rendered class prompt, in the given order."""
    return encode_prompts(build_class_prompts(class_names, template, vocab, config), config, params)
