import numpy as np
import pytest

from oracles import finite_difference, max_rel_err, weighted_sum_loss
from tsalign import blocks, tensor as T
from tsalign.optim import ParamRegistry
from tsalign.tensor import Tensor


def identity_attention(dim: int) -> blocks.AttentionParams:
    eye = lambda: Tensor(np.eye(dim, dtype=np.float32), requires_grad=True)
    zero = lambda: Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)
    return blocks.AttentionParams(wq=eye(), bq=zero(), wk=eye(), bk=zero(),
                                  wv=eye(), bv=zero(), wo=eye(), bo=zero())


def random_attention(reg: ParamRegistry, dim: int) -> blocks.AttentionParams:
    return blocks.attention_params(reg, "attn", dim)


class TestAttention:
    def test_single_token_identity_projections(self, rng):
        cfg = blocks.AttentionConfig(model_dim=4, num_heads=1)
        x = Tensor(rng.normal(size=(1, 4)).astype(np.float32))
        out = blocks.mhsa(x, identity_attention(4), cfg)
        np.testing.assert_allclose(out.data, x.data, atol=1e-6)

    def test_causal_mask_bit_identity(self, rng):
        reg = ParamRegistry(3)
        cfg = blocks.AttentionConfig(model_dim=8, num_heads=2, causal=True)
        p = random_attention(reg, 8)
        x = rng.normal(size=(6, 8)).astype(np.float32)
        base = blocks.mhsa(Tensor(x), p, cfg).data.copy()
        j = 4
        perturbed = x.copy()
        perturbed[j] += rng.normal(size=8).astype(np.float32)
        out = blocks.mhsa(Tensor(perturbed), p, cfg).data
        assert out[:j].tobytes() == base[:j].tobytes()
        assert not np.array_equal(out[j:], base[j:])

    def test_equal_keys_give_uniform_weights(self, rng):
        cfg = blocks.AttentionConfig(model_dim=4, num_heads=1)
        p = identity_attention(4)
        p.wk = Tensor(np.zeros((4, 4), dtype=np.float32))  # all keys collapse
        x = rng.normal(size=(2, 4)).astype(np.float32)
        weights = blocks.attention_weights(Tensor(x), Tensor(x), p, cfg)
        np.testing.assert_allclose(weights, np.full((1, 2, 2), 0.5), atol=1e-6)
        out = blocks.mhsa(Tensor(x), p, cfg)
        np.testing.assert_allclose(out.data, np.tile(x.mean(axis=0), (2, 1)),
                                   atol=1e-5)

    def test_attention_rows_sum_to_one(self, rng):
        reg = ParamRegistry(0)
        cfg = blocks.AttentionConfig(model_dim=16, num_heads=4)
        p = random_attention(reg, 16)
        q = Tensor(rng.normal(size=(5, 16)).astype(np.float32))
        kv = Tensor(rng.normal(size=(7, 16)).astype(np.float32))
        w = blocks.attention_weights(q, kv, p, cfg)
        np.testing.assert_allclose(w.sum(axis=-1), np.ones((4, 5)), atol=1e-6)

    def test_permutation_equivariance(self, rng):
        reg = ParamRegistry(9)
        cfg = blocks.AttentionConfig(model_dim=8, num_heads=2)
        p = random_attention(reg, 8)
        x = rng.normal(size=(6, 8)).astype(np.float32)
        perm = rng.permutation(6)
        base = blocks.mhsa(Tensor(x), p, cfg).data
        permuted = blocks.mhsa(Tensor(x[perm]), p, cfg).data
        np.testing.assert_allclose(permuted, base[perm], atol=1e-5)

    def test_config_divisibility(self):
        with pytest.raises(ValueError):
            blocks.AttentionConfig(model_dim=10, num_heads=4)


class TestCrossAttention:
    def test_reduces_to_self_attention(self, rng):
        reg = ParamRegistry(5)
        cfg = blocks.AttentionConfig(model_dim=8, num_heads=2)
        p = random_attention(reg, 8)
        x = Tensor(rng.normal(size=(4, 8)).astype(np.float32))
        np.testing.assert_array_equal(blocks.mhca(x, x, p, cfg).data,
                                      blocks.mhsa(x, p, cfg).data)

    def test_single_kv_row_repeats(self, rng):
        reg = ParamRegistry(6)
        cfg = blocks.AttentionConfig(model_dim=8, num_heads=2)
        p = random_attention(reg, 8)
        q = Tensor(rng.normal(size=(5, 8)).astype(np.float32))
        kv = Tensor(rng.normal(size=(1, 8)).astype(np.float32))
        out = blocks.mhca(q, kv, p, cfg).data
        for row in range(1, 5):
            np.testing.assert_allclose(out[row], out[0], atol=1e-6)

    def test_gradient_all_projections(self, rng):
        reg = ParamRegistry(7)
        cfg = blocks.AttentionConfig(model_dim=6, num_heads=2)
        p = random_attention(reg, 6)
        q = Tensor(rng.uniform(-1, 1, (3, 6)).astype(np.float32))
        kv = Tensor(rng.uniform(-1, 1, (5, 6)).astype(np.float32))
        proj = rng.uniform(-1, 1, (3, 6))

        def loss():
            return weighted_sum_loss(blocks.mhca(q, kv, p, cfg), proj)

        reg.zero_grad()
        T.backward(T.sum_all(blocks.mhca(q, kv, p, cfg) *
                             Tensor(proj.astype(np.float32))))
        arrays = [p.wq.data, p.wk.data, p.wv.data, p.wo.data]
        fds = finite_difference(loss, arrays)
        for tensor, fd in zip((p.wq, p.wk, p.wv, p.wo), fds):
            assert max_rel_err(tensor.grad, fd) < 1e-3

    def test_causal_cross_rejected(self):
        cfg = blocks.AttentionConfig(model_dim=4, num_heads=1, causal=True)
        x = Tensor(np.zeros((2, 4)))
        with pytest.raises(ValueError):
            blocks.mhca(x, x, identity_attention(4), cfg)


def zeroed_output_block(reg, prefix, dim, ffn_dim):
    blk = blocks.encoder_block_params(reg, prefix, dim, ffn_dim)
    blk.attn.wo.data[:] = 0.0
    blk.w2.data[:] = 0.0
    return blk


class TestEncoderLayer:
    def test_residual_identity_at_zero_output_projections(self, rng):
        reg = ParamRegistry(11)
        blk = zeroed_output_block(reg, "b", 8, 32)
        cfg = blocks.AttentionConfig(model_dim=8, num_heads=2)
        x = rng.normal(size=(5, 8)).astype(np.float32)
        out = blocks.encoder_layer(Tensor(x), blk, cfg)
        assert out.data.tobytes() == x.tobytes()

    @pytest.mark.parametrize("k", [0, 1, 3])
    def test_stacking_preserves_shape(self, rng, k):
        reg = ParamRegistry(12)
        cfg = blocks.AttentionConfig(model_dim=8, num_heads=2)
        stack = [blocks.encoder_block_params(reg, f"b{i}", 8, 32)
                 for i in range(k)]
        x = Tensor(rng.normal(size=(4, 8)).astype(np.float32))
        for blk in stack:
            x = blocks.encoder_layer(x, blk, cfg)
        assert x.shape == (4, 8)

    def test_ffn_is_live(self, rng):
        # Output with the FFN differs from the attention sub-layer alone.
        reg = ParamRegistry(13)
        blk = blocks.encoder_block_params(reg, "b", 8, 32)
        cfg = blocks.AttentionConfig(model_dim=8, num_heads=2)
        x = Tensor(rng.normal(size=(4, 8)).astype(np.float32))
        full = blocks.encoder_layer(x, blk, cfg).data
        attn_only = (blocks.mhsa(T.layer_norm(x, blk.ln1_g, blk.ln1_b),
                                 blk.attn, cfg) + x).data
        assert not np.allclose(full, attn_only)

    def test_gradient(self, rng):
        reg = ParamRegistry(14)
        blk = blocks.encoder_block_params(reg, "b", 6, 12)
        cfg = blocks.AttentionConfig(model_dim=6, num_heads=2)
        x = Tensor(rng.uniform(-1, 1, (3, 6)).astype(np.float32))
        proj = rng.uniform(-1, 1, (3, 6))

        def loss():
            return weighted_sum_loss(blocks.encoder_layer(x, blk, cfg), proj)

        reg.zero_grad()
        T.backward(T.sum_all(blocks.encoder_layer(x, blk, cfg) *
                             Tensor(proj.astype(np.float32))))
        for name in ("b.attn.wq", "b.ffn.w1", "b.ln1.g", "b.ffn.b2"):
            fd = finite_difference(loss, [reg[name].data])[0]
            assert max_rel_err(reg[name].grad, fd) < 1e-3, name


class TestDecoderLayer:
    def test_residual_identity(self, rng):
        reg = ParamRegistry(15)
        blk = blocks.decoder_block_params(reg, "d", 8)
        blk.self_attn.wo.data[:] = 0.0
        blk.cross_attn.wo.data[:] = 0.0
        self_cfg = blocks.AttentionConfig(8, 2, causal=True)
        cross_cfg = blocks.AttentionConfig(8, 2)
        x = rng.normal(size=(4, 8)).astype(np.float32)
        ctx = rng.normal(size=(4, 8)).astype(np.float32)
        out = blocks.decoder_layer(Tensor(x), Tensor(ctx), blk,
                                   self_cfg, cross_cfg)
        assert out.data.tobytes() == x.tobytes()

    def test_shape_preserved(self, rng):
        reg = ParamRegistry(16)
        blk = blocks.decoder_block_params(reg, "d", 8)
        out = blocks.decoder_layer(
            Tensor(rng.normal(size=(5, 8)).astype(np.float32)),
            Tensor(rng.normal(size=(5, 8)).astype(np.float32)),
            blk, blocks.AttentionConfig(8, 2, causal=True),
            blocks.AttentionConfig(8, 2))
        assert out.shape == (5, 8)

    def test_gradient(self, rng):
        reg = ParamRegistry(17)
        blk = blocks.decoder_block_params(reg, "d", 6)
        self_cfg = blocks.AttentionConfig(6, 2, causal=True)
        cross_cfg = blocks.AttentionConfig(6, 2)
        x = Tensor(rng.uniform(-1, 1, (3, 6)).astype(np.float32))
        ctx = Tensor(rng.uniform(-1, 1, (4, 6)).astype(np.float32))
        proj = rng.uniform(-1, 1, (3, 6))

        def loss():
            return weighted_sum_loss(
                blocks.decoder_layer(x, ctx, blk, self_cfg, cross_cfg), proj)

        reg.zero_grad()
        T.backward(T.sum_all(
            blocks.decoder_layer(x, ctx, blk, self_cfg, cross_cfg) *
            Tensor(proj.astype(np.float32))))
        for name in ("d.self_attn.wq", "d.cross_attn.wv", "d.ln2.g"):
            fd = finite_difference(loss, [reg[name].data])[0]
            assert max_rel_err(reg[name].grad, fd) < 1e-3, name
