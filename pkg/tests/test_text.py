import numpy as np
import pytest

from vceclip import tensor as T
from vceclip.config import DEFAULT_CLASS_NAMES, DEFAULT_TEMPLATE, ModelConfig
from vceclip.errors import ConfigError, DimensionError
from vceclip.text import (
    CLS_ID,
    UNK_ID,
    ClassPrompt,
    TextEncoderParams,
    Vocabulary,
    build_class_embeddings,
    encode_text,
    render_prompt,
    tokenize,
)

from helpers import gradcheck

CFG = ModelConfig.toy()
VOCAB = Vocabulary.for_classes(DEFAULT_CLASS_NAMES)


def toy_params(config=CFG, seed=0, scale=0.3):
    params = TextEncoderParams.init(config, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 100)
    for p in params.parameters():
        p.data += rng.normal(0.0, scale, size=p.shape)
    return params


class TestVocabulary:
    def test_reserved_ids(self):
        assert VOCAB.tokens[:3] == ["[CLS]", "[PAD]", "[UNK]"]

    def test_sorted_after_reserved(self):
        assert VOCAB.tokens[3:] == sorted(VOCAB.tokens[3:])

    def test_contents(self):
        for word in ("this", "is", "an", "endoscopic", "image", "of", "foreign", "body", "worms"):
            assert word in VOCAB
        assert len(VOCAB) == 3 + 6 + 11  # reserved, template words, class words

    def test_fits_toy_vocab(self):
        assert len(VOCAB) <= CFG.vocab_size

    def test_duplicates_rejected(self):
        with pytest.raises(ConfigError):
            Vocabulary(["[CLS]", "[PAD]", "[UNK]", "a", "a"])


class TestTokenize:
    def test_prompt_length(self):
        ids = tokenize("this is an endoscopic image of ulcer", VOCAB, 256)
        assert len(ids) == 8
        assert ids[0] == CLS_ID
        assert UNK_ID not in ids

    def test_empty(self):
        assert tokenize("", VOCAB, 256) == [CLS_ID]

    def test_case_insensitive(self):
        assert tokenize("Ulcer", VOCAB, 8) == tokenize("ulcer", VOCAB, 8)

    def test_punctuation_splits(self):
        assert len(tokenize("ulcer, polyp.", VOCAB, 8)) == 5

    def test_unknown_word(self):
        assert tokenize("zebra", VOCAB, 8) == [CLS_ID, UNK_ID]

    def test_truncation(self):
        ids = tokenize("this is an endoscopic image of ulcer", VOCAB, 4)
        assert ids == tokenize("this is an", VOCAB, 4)

    def test_idempotent_on_lowercase(self):
        text = render_prompt("Foreign Body")
        assert text == text.lower()
        assert tokenize(text, VOCAB, 32) == tokenize(text.lower(), VOCAB, 32)

    def test_max_len_too_small(self):
        with pytest.raises(ConfigError):
            tokenize("ulcer", VOCAB, 1)

    def test_class_prompt(self):
        p = ClassPrompt.make("Foreign Body", DEFAULT_TEMPLATE, VOCAB, 32)
        assert p.prompt_text == "this is an endoscopic image of foreign body"
        assert p.token_ids[0] == CLS_ID
        assert len(p.token_ids) == 9


class TestEncodeText:
    def test_shape(self):
        out = encode_text(tokenize(render_prompt("Polyp"), VOCAB, 32), CFG, toy_params())
        assert out.shape == (CFG.text_embed_dim,)

    def test_different_prompts_differ(self):
        params = toy_params()
        a = encode_text(tokenize(render_prompt("Polyp"), VOCAB, 32), CFG, params).data
        b = encode_text(tokenize(render_prompt("Ulcer"), VOCAB, 32), CFG, params).data
        assert np.abs(a - b).max() > 1e-9

    def test_zero_layers_ignore_the_rest_of_the_prompt(self):
        cfg = CFG.replace(text_layers=0)
        params = toy_params(cfg)
        params.position_embeddings.data[...] = 0.0
        a = encode_text(tokenize(render_prompt("Polyp"), VOCAB, 32), cfg, params).data
        b = encode_text(tokenize("worms", VOCAB, 32), cfg, params).data
        row = params.token_embeddings.data[CLS_ID]
        expected = (row - row.mean()) / np.sqrt(row.var() + 1e-5)
        expected = expected * params.ln_final_gamma.data + params.ln_final_beta.data
        np.testing.assert_allclose(a, expected, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(a, b)

    def test_id_out_of_range(self):
        with pytest.raises(IndexError):
            encode_text([0, CFG.vocab_size], CFG, toy_params())

    def test_too_long(self):
        with pytest.raises(DimensionError):
            encode_text([0] * (CFG.max_text_len + 1), CFG, toy_params())

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient(self, seed):
        params = toy_params(seed=seed)
        ids = tokenize(render_prompt(DEFAULT_CLASS_NAMES[seed]), VOCAB, 32)
        r = np.random.default_rng(seed + 7).normal(size=16)

        def loss():
            return T.sum_(encode_text(ids, CFG, params) * r)

        err = gradcheck(loss, params.parameters(), h=1e-5, max_entries=25, rng=np.random.default_rng(seed))
        assert err < 1e-3


class TestClassEmbeddings:
    def test_ten_classes(self):
        out = build_class_embeddings(DEFAULT_CLASS_NAMES, DEFAULT_TEMPLATE, VOCAB, CFG, toy_params())
        assert out.shape == (10, CFG.text_embed_dim)

    def test_duplicates_give_identical_rows(self):
        out = build_class_embeddings(["Polyp", "Polyp", "Ulcer"], DEFAULT_TEMPLATE, VOCAB, CFG, toy_params()).data
        np.testing.assert_array_equal(out[0], out[1])

    def test_permutation(self):
        params = toy_params()
        names = list(DEFAULT_CLASS_NAMES)
        perm = np.random.default_rng(0).permutation(len(names))
        base = build_class_embeddings(names, DEFAULT_TEMPLATE, VOCAB, CFG, params).data
        shuffled = build_class_embeddings([names[i] for i in perm], DEFAULT_TEMPLATE, VOCAB, CFG, params).data
        np.testing.assert_array_equal(shuffled, base[perm])

    def test_repeat_calls_bit_identical(self):
        params = toy_params()
        a = build_class_embeddings(DEFAULT_CLASS_NAMES, DEFAULT_TEMPLATE, VOCAB, CFG, params).data
        b = build_class_embeddings(DEFAULT_CLASS_NAMES, DEFAULT_TEMPLATE, VOCAB, CFG, params).data
        assert a.tobytes() == b.tobytes()

    def test_unknown_class(self):
        with pytest.raises(ConfigError, match="Hemorrhoid"):
            build_class_embeddings(["Polyp", "Hemorrhoid"], DEFAULT_TEMPLATE, VOCAB, CFG, toy_params())

    def test_needs_two_classes(self):
        with pytest.raises(ConfigError):
            build_class_embeddings(["Polyp"], DEFAULT_TEMPLATE, VOCAB, CFG, toy_params())
