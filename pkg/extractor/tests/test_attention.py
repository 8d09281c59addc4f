import numpy as np
import pytest

from gpt2_embed.extract import dump_last_token_attention


def long_prompt(n_values=24):
    values = ", ".join(f"{0.1 * i - 1.0:.2f}" for i in range(n_values))
    return (f"From 2002-01-07 to 2002-06-17, this variable was sampled once "
            f"every week, giving {n_values} observations in sequence. The "
            f"recorded values were {values}. The total trend value of these "
            f"observations is 1.30")


class TestAttentionDump:
    def test_nine_segments_sum_to_one(self, tiny_model, tiny_tokenizer):
        weights = dump_last_token_attention(long_prompt(), tiny_model,
                                            tiny_tokenizer)
        assert weights.shape == (9,)
        assert np.all(weights >= 0)
        assert abs(weights.sum() - 1.0) < 1e-4

    def test_short_prompt_rejected(self, tiny_model, tiny_tokenizer):
        with pytest.raises(ValueError, match="at least"):
            dump_last_token_attention("hi", tiny_model, tiny_tokenizer)

    def test_segment_count_configurable(self, tiny_model, tiny_tokenizer):
        weights = dump_last_token_attention(long_prompt(), tiny_model,
                                            tiny_tokenizer, segments=5)
        assert weights.shape == (5,)
        assert abs(weights.sum() - 1.0) < 1e-4

    def test_deterministic(self, tiny_model, tiny_tokenizer):
        a = dump_last_token_attention(long_prompt(), tiny_model, tiny_tokenizer)
        b = dump_last_token_attention(long_prompt(), tiny_model, tiny_tokenizer)
        np.testing.assert_array_equal(a, b)
