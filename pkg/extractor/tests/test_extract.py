import numpy as np
import pytest

from conftest import grid_records, write_prompts
from gpt2_embed.extract import (ExtractionJob, embed_texts, extract,
                                read_prompts, report_token_stats,
                                validate_coverage, weights_digest)
from gpt2_embed.storefmt import read_store


class TestCoverage:
    def test_dense_grid_accepted(self):
        assert validate_coverage(grid_records(3, 2)) == (3, 2)

    def test_missing_key_rejected(self):
        records = grid_records(2, 2)[:-1]
        with pytest.raises(ValueError, match="missing"):
            validate_coverage(records)

    def test_duplicate_rejected(self):
        records = grid_records(2, 2)
        records.append(dict(records[0]))
        with pytest.raises(ValueError, match="duplicate"):
            validate_coverage(records)

    def test_required_fields(self, tmp_path):
        path = tmp_path / "p.jsonl"
        path.write_text('{"window_id": 0, "variable_id": 0}\n')
        with pytest.raises(ValueError, match="text"):
            read_prompts(str(path))


class TestEmbedTexts:
    def test_identical_texts_identical_vectors(self, tiny_model,
                                               tiny_tokenizer):
        texts = ["same prompt text 1.23", "other prompt", "same prompt text 1.23"]
        out = embed_texts(texts, tiny_model, tiny_tokenizer, batch_size=2)
        assert out[0].tobytes() == out[2].tobytes()
        assert out[0].tobytes() != out[1].tobytes()

    def test_prefix_gets_different_vector(self, tiny_model, tiny_tokenizer):
        base = "the values were 0.52, -1.30, 0.77"
        longer = base + ", 2.04, -0.18"
        out = embed_texts([base, longer], tiny_model, tiny_tokenizer)
        assert not np.array_equal(out[0], out[1])

    def test_padding_never_leaks_into_result(self, tiny_model, tiny_tokenizer):
        # Mixed-length batch must match isolated single-text passes.
        texts = ["short 1.0", "a much longer prompt with values 0.5, 0.7, "
                             "0.9 and a trend of 1.4", "mid size 2.2, 3.3"]
        batched = embed_texts(texts, tiny_model, tiny_tokenizer, batch_size=3)
        solo = np.stack([
            embed_texts([t], tiny_model, tiny_tokenizer, batch_size=1)[0]
            for t in texts])
        np.testing.assert_allclose(batched, solo, atol=1e-5)

    def test_empty_text_rejected(self, tiny_model, tiny_tokenizer):
        with pytest.raises(ValueError, match="zero tokens"):
            embed_texts([""], tiny_model, tiny_tokenizer)


class TestExtractJob:
    def _job(self, tmp_path, records, name="store"):
        prompts = write_prompts(tmp_path / "prompts.jsonl", records)
        return ExtractionJob(prompts_path=prompts,
                             out_path=str(tmp_path / f"{name}.embstore"))

    def test_end_to_end_layout(self, tmp_path, tiny_model, tiny_tokenizer):
        records = grid_records(3, 2)
        job = self._job(tmp_path, records)
        out = extract(job, model=tiny_model, tokenizer=tiny_tokenizer)
        matrix = read_store(out)
        assert matrix.shape == (3, 2, tiny_model.config.n_embd)
        # Row for (2, 1) equals a direct single-text embedding.
        text = [r["text"] for r in records
                if (r["window_id"], r["variable_id"]) == (2, 1)][0]
        direct = embed_texts([text], tiny_model, tiny_tokenizer)[0]
        np.testing.assert_allclose(matrix[2, 1], direct, atol=1e-6)

    def test_deterministic_bytes(self, tmp_path, tiny_model, tiny_tokenizer):
        records = grid_records(2, 3)
        job_a = self._job(tmp_path, records, "a")
        job_b = self._job(tmp_path, records, "b")
        extract(job_a, model=tiny_model, tokenizer=tiny_tokenizer)
        extract(job_b, model=tiny_model, tokenizer=tiny_tokenizer)
        assert open(job_a.out_path, "rb").read() == \
            open(job_b.out_path, "rb").read()

    def test_weights_frozen_through_job(self, tmp_path, tiny_model,
                                        tiny_tokenizer):
        before = weights_digest(tiny_model)
        job = self._job(tmp_path, grid_records(2, 2))
        extract(job, model=tiny_model, tokenizer=tiny_tokenizer)
        assert weights_digest(tiny_model) == before
        assert not any(p.requires_grad for p in tiny_model.parameters())

    def test_shuffled_input_same_store(self, tmp_path, tiny_model,
                                       tiny_tokenizer):
        records = grid_records(3, 2)
        shuffled = list(reversed(records))
        a = self._job(tmp_path, records, "ordered")
        b = self._job(tmp_path, shuffled, "shuffled")
        extract(a, model=tiny_model, tokenizer=tiny_tokenizer)
        extract(b, model=tiny_model, tokenizer=tiny_tokenizer)
        assert open(a.out_path, "rb").read() == open(b.out_path, "rb").read()


class TestTokenStats:
    def test_counts(self, tmp_path, tiny_tokenizer):
        path = write_prompts(tmp_path / "p.jsonl", grid_records(2, 2))
        rows = report_token_stats({"toy": path}, tiny_tokenizer)
        assert rows[0]["dataset"] == "toy"
        assert rows[0]["prompts"] == 4
        assert rows[0]["mean_tokens"] > 0
        assert rows[0]["max_tokens"] >= rows[0]["mean_tokens"]

    def test_empty_file(self, tmp_path, tiny_tokenizer):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        rows = report_token_stats({"none": str(path)}, tiny_tokenizer)
        assert rows[0]["prompts"] == 0 and rows[0]["mean_tokens"] == 0.0


class TestCli:
    def test_extract_and_stats_via_cli(self, tmp_path, tiny_model_dir, capsys):
        from gpt2_embed.cli import main
        prompts = write_prompts(tmp_path / "p.jsonl", grid_records(2, 2))
        out = str(tmp_path / "cli.embstore")
        assert main(["extract", "--prompts", prompts, "--out", out,
                     "--model", tiny_model_dir, "--batch", "4"]) == 0
        assert read_store(out).shape[0] == 2
        assert main(["token-stats", "--prompts", f"toy={prompts}",
                     "--model", tiny_model_dir]) == 0
        stdout = capsys.readouterr().out
        assert "toy" in stdout and "mean_tokens" in stdout

    def test_attention_dump_cli(self, tmp_path, tiny_model_dir, capsys):
        from gpt2_embed.cli import main
        prompts = write_prompts(tmp_path / "p.jsonl", grid_records(1, 1))
        assert main(["attention-dump", "--prompts", prompts,
                     "--model", tiny_model_dir, "--limit", "1"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("window_id,variable_id,segment_0")
        weights = [float(x) for x in lines[1].split(",")[2:]]
        assert len(weights) == 9
        assert abs(sum(weights) - 1.0) < 1e-4
