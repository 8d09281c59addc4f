import json
import os
import warnings

import pytest
import torch

warnings.filterwarnings("ignore", message=".*bos_token_id.*")
warnings.filterwarnings("ignore", message=".*eos_token_id.*")

SAMPLE_CORPUS = [
    "From 2002-01-07 to 2002-09-09, this variable was sampled once every "
    "week, giving 36 observations in sequence.",
    "The recorded values were 0.52, -1.30, 0.77, 2.04, -0.18, 0.00, 1.25.",
    "The total trend value of these observations is -0.43",
    "The mean value of these observations is 0.07",
    "Use the pattern of these historical observations to forecast the "
    "values of the next 24 steps.",
    "From 2016-07-01 00:00:00 to 2016-07-04 23:00:00, sampled once every "
    "hour, giving 96 observations in sequence.",
] * 4


def build_local_tokenizer():
    """Byte-level BPE trained on sample prompts; no network, GPT-2-style API."""
    from tokenizers import Tokenizer, decoders, models, pre_tokenizers, trainers
    from transformers import GPT2TokenizerFast

    tok = Tokenizer(models.BPE(unk_token=None))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=420, special_tokens=[],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet())
    tok.train_from_iterator(SAMPLE_CORPUS, trainer)
    return GPT2TokenizerFast(tokenizer_object=tok)


def build_tiny_model(vocab_size: int, seed: int = 0):
    """Randomly initialized two-layer GPT-2, frozen; deterministic by seed."""
    from transformers import GPT2Config, GPT2Model

    torch.manual_seed(seed)
    config = GPT2Config(vocab_size=vocab_size, n_positions=256, n_embd=32,
                        n_layer=2, n_head=2, bos_token_id=0, eos_token_id=0,
                        attn_implementation="eager")
    model = GPT2Model(config)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


@pytest.fixture(scope="session")
def tiny_tokenizer():
    return build_local_tokenizer()


@pytest.fixture(scope="session")
def tiny_model(tiny_tokenizer):
    return build_tiny_model(len(tiny_tokenizer) + 8)


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory, tiny_model, tiny_tokenizer):
    """The tiny pair saved to disk so CLI paths can load it by path."""
    path = tmp_path_factory.mktemp("tinygpt2")
    tiny_model.save_pretrained(str(path))
    tiny_tokenizer.save_pretrained(str(path))
    return str(path)


def write_prompts(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return str(path)


def grid_records(num_windows=3, n_vars=2, stem="value trace"):
    return [{"window_id": w, "variable_id": v, "design": "P5",
             "text": f"From 2002-01-07, {stem} {w}-{v}: 0.5{w}, -1.{v}2, "
                     f"2.0{w}. The total trend value is 1.5{v}"}
            for w in range(num_windows) for v in range(n_vars)]


@pytest.fixture(scope="session")
def real_model_pair():
    """Genuine pretrained GPT-2, or skip when assets are unreachable."""
    model_id = os.environ.get("GPT2_EMBED_MODEL", "gpt2")
    try:
        from gpt2_embed.extract import load_model
        return load_model(model_id)
    except Exception as exc:  # offline sandbox: hub unreachable, no cache
        pytest.skip(f"pretrained GPT-2 unavailable ({type(exc).__name__}); "
                    f"set GPT2_EMBED_MODEL to a local path to enable")
