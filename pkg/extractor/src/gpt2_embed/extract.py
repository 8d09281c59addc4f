"""Frozen GPT-2 last-token embedding extraction.

Prompts arrive as JSON lines with {window_id, variable_id, design,
text}. Each unique text is tokenized and run through the frozen model
once; the final layer's hidden state at the last real token is its
summary vector. Within a batch, shorter sequences are padded by
repeating their own last token, with attention masked to real tokens
only, so padding never influences the extracted position.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
import torch

from .storefmt import write_store

DEFAULT_MODEL = "gpt2"


@dataclass
class ExtractionJob:
    prompts_path: str
    out_path: str
    model_id: str = DEFAULT_MODEL
    batch_size: int = 8
    device: str = "cpu"


def load_model(model_id: str = DEFAULT_MODEL, device: str = "cpu"):
    """Frozen model + tokenizer; attention kept in eager mode so
    attention maps can be dumped."""
    from transformers import AutoTokenizer, GPT2Model

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = GPT2Model.from_pretrained(model_id, attn_implementation="eager")
    return freeze(model.to(device)), tokenizer


def freeze(model):
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def weights_digest(model) -> str:
    """Order-stable digest of every parameter buffer; extraction must
    leave it unchanged."""
    h = hashlib.blake2b(digest_size=16)
    for name, p in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(p.detach().cpu().numpy().astype("<f4", copy=False).tobytes())
    return h.hexdigest()


def read_prompts(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            for key in ("window_id", "variable_id", "text"):
                if key not in rec:
                    raise ValueError(f"{path}:{lineno}: record missing {key!r}")
            records.append(rec)
    return records


def validate_coverage(records: list[dict]) -> tuple[int, int]:
    """Require one record per (window, variable) over dense id ranges."""
    if not records:
        raise ValueError("prompt file has no records")
    num_windows = max(r["window_id"] for r in records) + 1
    n_vars = max(r["variable_id"] for r in records) + 1
    seen = {(r["window_id"], r["variable_id"]) for r in records}
    if len(seen) != len(records):
        raise ValueError("duplicate (window_id, variable_id) records")
    missing = [(w, v) for w in range(num_windows) for v in range(n_vars)
               if (w, v) not in seen]
    if missing:
        raise ValueError(f"prompts missing for {len(missing)} keys, "
                         f"first {missing[:3]}")
    return num_windows, n_vars


def _pad_batch(token_lists: list[list[int]], device: str):
    """Right-pad each sequence by repeating its own last token; the
    attention mask restricts the model to real tokens."""
    width = max(len(t) for t in token_lists)
    ids = torch.empty((len(token_lists), width), dtype=torch.long)
    mask = torch.zeros((len(token_lists), width), dtype=torch.long)
    for row, tokens in enumerate(token_lists):
        ids[row, :len(tokens)] = torch.tensor(tokens, dtype=torch.long)
        if len(tokens) < width:
            ids[row, len(tokens):] = tokens[-1]
        mask[row, :len(tokens)] = 1
    return ids.to(device), mask.to(device)


def embed_texts(texts: list[str], model, tokenizer, batch_size: int = 8,
                device: str = "cpu") -> np.ndarray:
    """Last-token final-layer hidden state per text, deduplicated so
    identical texts share one forward pass (and one result, bit for bit)."""
    unique = list(dict.fromkeys(texts))
    cache: dict[str, np.ndarray] = {}
    with torch.no_grad():
        for start in range(0, len(unique), batch_size):
            chunk = unique[start:start + batch_size]
            token_lists = [tokenizer.encode(t, add_special_tokens=False)
                           for t in chunk]
            if any(len(t) == 0 for t in token_lists):
                raise ValueError("a prompt tokenized to zero tokens")
            ids, mask = _pad_batch(token_lists, device)
            hidden = model(input_ids=ids, attention_mask=mask).last_hidden_state
            for row, (text, tokens) in enumerate(zip(chunk, token_lists)):
                vec = hidden[row, len(tokens) - 1]
                cache[text] = vec.cpu().numpy().astype(np.float32)
    return np.stack([cache[t] for t in texts])


def extract(job: ExtractionJob, model=None, tokenizer=None) -> str:
    """Run the whole job and write the store; returns the output path."""
    if model is None or tokenizer is None:
        model, tokenizer = load_model(job.model_id, job.device)
    freeze(model)
    before = weights_digest(model)

    records = read_prompts(job.prompts_path)
    num_windows, n_vars = validate_coverage(records)
    records.sort(key=lambda r: (r["window_id"], r["variable_id"]))
    vectors = embed_texts([r["text"] for r in records], model, tokenizer,
                          job.batch_size, job.device)
    dim = vectors.shape[1]
    matrix = vectors.reshape(num_windows, n_vars, dim)
    write_store(job.out_path, matrix)

    if weights_digest(model) != before:
        raise AssertionError("model weights changed during extraction")
    return job.out_path


def token_counts(texts: list[str], tokenizer) -> list[int]:
    return [len(tokenizer.encode(t, add_special_tokens=False)) for t in texts]


def report_token_stats(prompt_paths: dict[str, str], tokenizer) -> list[dict]:
    """Tokenizer-only pass: per labeled prompt file, mean and max counts."""
    rows = []
    for label, path in prompt_paths.items():
        records = read_prompts(path)
        if not records:
            rows.append({"dataset": label, "prompts": 0,
                         "mean_tokens": 0.0, "max_tokens": 0})
            continue
        counts = token_counts([r["text"] for r in records], tokenizer)
        rows.append({
            "dataset": label,
            "prompts": len(counts),
            "mean_tokens": float(np.mean(counts)),
            "max_tokens": int(np.max(counts)),
        })
    return rows


def dump_last_token_attention(text: str, model, tokenizer, segments: int = 9,
                              device: str = "cpu") -> np.ndarray:
    """Final-layer attention from the last token, head-averaged, summed
    inside ``segments`` contiguous token ranges. Sums to ~1."""
    tokens = tokenizer.encode(text, add_special_tokens=False)
    if len(tokens) < segments:
        raise ValueError(f"prompt has {len(tokens)} tokens, needs at least "
                         f"{segments}")
    ids = torch.tensor([tokens], dtype=torch.long, device=device)
    with torch.no_grad():
        out = model(input_ids=ids, attention_mask=torch.ones_like(ids),
                    output_attentions=True)
    last_layer = out.attentions[-1][0]          # heads x L x L
    row = last_layer[:, -1, :].mean(dim=0)      # attention of the last token
    weights = row.cpu().numpy().astype(np.float64)
    bounds = np.linspace(0, len(tokens), segments + 1).astype(int)
    return np.array([weights[lo:hi].sum()
                     for lo, hi in zip(bounds[:-1], bounds[1:])])
