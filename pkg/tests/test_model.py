import numpy as np
import pytest

from promptner.model import (
    AdamW,
    ModelConfig,
    NonFiniteLossError,
    OptimizerConfig,
    Seq2Seq,
    build_vocab,
    grad_check,
    make_batch,
    train_step,
)
from promptner.model import ops
from promptner.model.gradcheck import layer_kind
from promptner.model.optim import lr_at
from promptner.model.vocab import SPECIALS, Vocab
from promptner.rng import rng_stream

from conftest import small_batch, small_model


class TestVocab:
    def test_counting_example(self):
        vocab = build_vocab(["ab"])
        assert len(vocab) == 8  # 6 specials + a + b

    def test_specials_lowest_ids_in_order(self):
        vocab = build_vocab(["xyz"])
        assert vocab.symbols[:6] == SPECIALS

    def test_deterministic(self):
        texts = ["hello world", "更多文本"]
        assert build_vocab(texts) == build_vocab(texts)

    def test_unseen_char_maps_to_unk(self):
        vocab = build_vocab(["ab"])
        ids = vocab.encode("abz")
        assert ids[-1] == vocab.unk_id

    def test_sentinels_single_tokens(self):
        vocab = build_vocab(["ab"])
        ids = vocab.encode("<entity>a<text>b")
        assert ids == [0, vocab.encode("a")[0], 1, vocab.encode("b")[0]]

    def test_decode_skips_structurals(self):
        vocab = build_vocab(["ab"])
        ids = [vocab.bos_id] + vocab.encode("ab") + [vocab.eos_id, vocab.pad_id]
        assert vocab.decode(ids) == "ab"

    def test_registry_prompt_names_included(self):
        from promptner.schema import main_registry

        vocab = build_vocab([], main_registry())
        assert all(ch in "".join(vocab.symbols) for ch in "地点名称组织")


class TestConfig:
    def test_divisibility_enforced(self):
        with pytest.raises(ValueError):
            ModelConfig(d_model=10, n_heads=3)

    def test_warmup_le_total(self):
        with pytest.raises(ValueError):
            OptimizerConfig(warmup_steps=10, total_steps=5)


class TestForward:
    def test_untrained_loss_near_log_vocab(self, tiny_vocab):
        m = small_model(tiny_vocab)
        _, loss, _ = m.forward(small_batch(tiny_vocab))
        assert abs(loss - np.log(len(tiny_vocab))) / np.log(len(tiny_vocab)) < 0.10

    def test_id_out_of_range_rejected(self, tiny_vocab):
        m = small_model(tiny_vocab)
        batch = small_batch(tiny_vocab)
        bad = batch.src.copy()
        bad[0, 0] = len(tiny_vocab)
        with pytest.raises(ValueError, match="out of range"):
            m.forward(type(batch)(src=bad, tgt_in=batch.tgt_in, tgt_out=batch.tgt_out))

    def test_overlong_sequence_rejected(self, tiny_vocab):
        m = small_model(tiny_vocab, max_source_len=4)
        with pytest.raises(ValueError, match="exceeds"):
            make_batch(tiny_vocab, [("abcdefgh", "ab")], 4, 48)

    def test_loss_invariant_to_batch_permutation(self, tiny_vocab):
        m = small_model(tiny_vocab)
        batch = small_batch(tiny_vocab)
        perm = type(batch)(
            src=batch.src[::-1].copy(),
            tgt_in=batch.tgt_in[::-1].copy(),
            tgt_out=batch.tgt_out[::-1].copy(),
        )
        _, loss_a, _ = m.forward(batch)
        _, loss_b, _ = m.forward(perm)
        assert loss_a == pytest.approx(loss_b, rel=1e-6)

    def test_softmax_rows_sum_to_one(self):
        rng = rng_stream(0)
        scores = rng.normal(size=(2, 2, 5, 7))
        mask = rng.random((2, 1, 5, 7)) > 0.3
        mask[..., 0] = True
        p = ops.masked_softmax(scores, mask)
        assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-6)
        assert np.all(p[~np.broadcast_to(mask, p.shape)] == 0.0)

    def test_masked_positions_exactly_non_contributing(self, tiny_vocab):
        # perturbing the <pad> embedding row must leave valid-position
        # logits bit-identical (masks use -inf, not large negatives)
        m = small_model(tiny_vocab)
        batch = small_batch(tiny_vocab)
        assert (batch.src == tiny_vocab.pad_id).any()
        logits_a, loss_a, _ = m.forward(batch)
        m.params["tok_emb"][tiny_vocab.pad_id] += 7.25
        logits_b, loss_b, _ = m.forward(batch)
        valid = batch.tgt_out != tiny_vocab.pad_id
        assert loss_a == loss_b
        assert np.array_equal(logits_a[valid], logits_b[valid])


class TestTrainStep:
    def test_warmup_schedule_formula(self):
        cfg = OptimizerConfig(peak_lr=1e-3, warmup_steps=100, total_steps=1000)
        for step in (1, 17, 99):
            assert lr_at(step, cfg) == pytest.approx(1e-3 * step / 100)
        assert lr_at(100, cfg) == pytest.approx(1e-3)
        assert lr_at(1000, cfg) == pytest.approx(0.0)
        assert lr_at(550, cfg) == pytest.approx(1e-3 * 0.5)

    def test_zero_grads_zero_decay_keeps_params(self, tiny_vocab):
        m = small_model(tiny_vocab)
        cfg = OptimizerConfig(weight_decay=0.0, warmup_steps=1, total_steps=10)
        opt = AdamW(cfg, m)
        before = {k: v.copy() for k, v in m.params.items()}
        opt.apply(m, {k: np.zeros_like(v) for k, v in m.params.items()})
        for k in before:
            assert np.array_equal(before[k], m.params[k])

    def test_deterministic_given_seed(self, tiny_vocab):
        losses = []
        for _ in range(2):
            m = small_model(tiny_vocab, seed=4)
            opt = AdamW(OptimizerConfig(warmup_steps=2, total_steps=20), m)
            batch = small_batch(tiny_vocab)
            run = [train_step(m, opt, batch, rng_stream(0, "d", i)) for i in range(5)]
            losses.append(run)
        assert losses[0] == losses[1]

    def test_single_batch_overfit(self, tiny_vocab):
        m = small_model(tiny_vocab, d_model=32, d_ff=64)
        cfg = OptimizerConfig(peak_lr=2e-3, warmup_steps=10, total_steps=500, batch_size=2)
        opt = AdamW(cfg, m)
        batch = small_batch(tiny_vocab)
        loss = None
        for step in range(500):
            loss = train_step(m, opt, batch, None)
            if loss < 0.1:
                break
        assert loss < 0.1, f"failed to memorize one batch: loss={loss}"

    def test_non_finite_loss_aborts(self, tiny_vocab):
        m = small_model(tiny_vocab)
        m.params["out.b"][:] = np.inf
        opt = AdamW(OptimizerConfig(warmup_steps=1, total_steps=5), m)
        batch = small_batch(tiny_vocab)
        with np.errstate(invalid="ignore"):
            with pytest.raises(NonFiniteLossError) as err:
                train_step(m, opt, batch, None)
        assert err.value.batch is batch

    def test_clip_global_norm(self):
        from promptner.model import clip_global_norm

        grads = {"a": np.full(4, 3.0), "b": np.full(9, 4.0)}
        norm = clip_global_norm(grads, 1.0)
        assert norm == pytest.approx(np.sqrt(4 * 9 + 9 * 16))
        total = sum(float((g**2).sum()) for g in grads.values())
        assert np.sqrt(total) == pytest.approx(1.0)


class TestGradCheck:
    def _setup(self, tiny_vocab):
        m = small_model(tiny_vocab, dtype=np.float64)
        return m, small_batch(tiny_vocab)

    def test_correct_implementation_passes(self, tiny_vocab):
        m, batch = self._setup(tiny_vocab)
        assert grad_check(m, batch, eps=1e-3, n_coords=250) <= 1e-3

    def test_every_layer_kind_passes(self, tiny_vocab):
        m, batch = self._setup(tiny_vocab)
        kinds = ("embedding", "attention", "feed_forward", "layer_norm", "output_projection")
        assert {layer_kind(n) for n in m.params} == set(kinds)
        for kind in kinds:
            err = grad_check(
                m, batch, eps=1e-3, n_coords=120,
                param_filter=lambda n, k=kind: layer_kind(n) == k,
            )
            assert err <= 1e-3, f"{kind}: {err}"

    def test_sign_flip_mutation_caught(self, tiny_vocab, monkeypatch):
        m, batch = self._setup(tiny_vocab)
        original = ops.attn_core_bwd

        def corrupted(cache, dctx):
            dq, dk, dv = original(cache, dctx)
            return -dq, dk, dv

        monkeypatch.setattr(ops, "attn_core_bwd", corrupted)
        assert grad_check(m, batch, eps=1e-3, n_coords=250) > 1e-1

    def test_requires_float64(self, tiny_vocab):
        m = small_model(tiny_vocab, dtype=np.float32)
        with pytest.raises(ValueError, match="float64"):
            grad_check(m, small_batch(tiny_vocab))

    def test_zero_coordinate_request_rejected(self, tiny_vocab):
        m, batch = self._setup(tiny_vocab)
        with pytest.raises(ValueError):
            grad_check(m, batch, n_coords=0)
