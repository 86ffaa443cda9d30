"""Encoder-decoder transformer over character tokens, differentiated by hand.

Pre-norm residual blocks, learned absolute positions, shared token
embedding, ReLU feed-forward, final layer norm before the output projection.
All parameters are plain numpy arrays in a flat name -> tensor dict; the
backward pass mirrors the forward pass step by step and returns gradients in
a dict of the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..rng import rng_stream
from . import ops
from .config import ModelConfig
from .vocab import Vocab


@dataclass(frozen=True)
class Batch:
    src: np.ndarray  # (B, S) int64, padded with <pad>
    tgt_in: np.ndarray  # (B, T) int64, starts with <bos>
    tgt_out: np.ndarray  # (B, T) int64, ends with <eos>, padded with <pad>


def pad_sequences(seqs: Sequence[Sequence[int]], pad_id: int) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def make_batch(
    vocab: Vocab,
    pairs: Sequence[tuple[str, str]],
    max_source_len: int,
    max_target_len: int,
) -> Batch:
    """Encode (source, target) string pairs into a padded teacher-forcing batch."""
    srcs, tgt_ins, tgt_outs = [], [], []
    for source, target in pairs:
        s = vocab.encode(source)
        t = vocab.encode(target)
        if not s:
            raise ValueError("empty source sequence")
        if len(s) > max_source_len:
            raise ValueError(f"source length {len(s)} exceeds max {max_source_len}")
        if len(t) + 1 > max_target_len:
            raise ValueError(f"target length {len(t) + 1} exceeds max {max_target_len}")
        srcs.append(s)
        tgt_ins.append([vocab.bos_id] + t)
        tgt_outs.append(t + [vocab.eos_id])
    return Batch(
        src=pad_sequences(srcs, vocab.pad_id),
        tgt_in=pad_sequences(tgt_ins, vocab.pad_id),
        tgt_out=pad_sequences(tgt_outs, vocab.pad_id),
    )


class Seq2Seq:
    """A trainable model instance: config + vocab + named parameter tensors."""

    def __init__(
        self,
        config: ModelConfig,
        vocab: Vocab,
        seed: int = 0,
        dtype=np.float32,
        params: dict[str, np.ndarray] | None = None,
    ):
        self.config = config
        self.vocab = vocab
        self.dtype = np.dtype(dtype)
        if params is not None:
            self.params = {k: np.asarray(v, dtype=self.dtype) for k, v in params.items()}
            self._check_shapes()
        else:
            self.params = self._init_params(seed)

    # -- parameters --------------------------------------------------------

    def param_specs(self) -> list[tuple[str, tuple[int, ...], str]]:
        """(name, shape, init kind) for every tensor, in a fixed order."""
        c, v = self.config, len(self.vocab)
        d, f = c.d_model, c.d_ff
        specs: list[tuple[str, tuple[int, ...], str]] = [
            ("tok_emb", (v, d), "normal"),
            ("enc_pos", (c.max_source_len, d), "normal"),
            ("dec_pos", (c.max_target_len, d), "normal"),
        ]

        def block(prefix: str, cross: bool) -> None:
            specs.extend(
                [
                    (f"{prefix}.ln1.g", (d,), "ones"),
                    (f"{prefix}.ln1.b", (d,), "zeros"),
                    (f"{prefix}.self.wq", (d, d), "normal"),
                    (f"{prefix}.self.wk", (d, d), "normal"),
                    (f"{prefix}.self.wv", (d, d), "normal"),
                    (f"{prefix}.self.wo", (d, d), "normal"),
                ]
            )
            if cross:
                specs.extend(
                    [
                        (f"{prefix}.ln2.g", (d,), "ones"),
                        (f"{prefix}.ln2.b", (d,), "zeros"),
                        (f"{prefix}.cross.wq", (d, d), "normal"),
                        (f"{prefix}.cross.wk", (d, d), "normal"),
                        (f"{prefix}.cross.wv", (d, d), "normal"),
                        (f"{prefix}.cross.wo", (d, d), "normal"),
                    ]
                )
            ln_ff = "ln3" if cross else "ln2"
            specs.extend(
                [
                    (f"{prefix}.{ln_ff}.g", (d,), "ones"),
                    (f"{prefix}.{ln_ff}.b", (d,), "zeros"),
                    (f"{prefix}.ffn.w1", (d, f), "normal"),
                    (f"{prefix}.ffn.b1", (f,), "zeros"),
                    (f"{prefix}.ffn.w2", (f, d), "normal"),
                    (f"{prefix}.ffn.b2", (d,), "zeros"),
                ]
            )

        for i in range(c.n_encoder_layers):
            block(f"enc{i}", cross=False)
        specs.extend([("enc.lnf.g", (d,), "ones"), ("enc.lnf.b", (d,), "zeros")])
        for i in range(c.n_decoder_layers):
            block(f"dec{i}", cross=True)
        specs.extend([("dec.lnf.g", (d,), "ones"), ("dec.lnf.b", (d,), "zeros")])
        specs.extend([("out.w", (d, v), "normal"), ("out.b", (v,), "zeros")])
        return specs

    def _init_params(self, seed: int) -> dict[str, np.ndarray]:
        rng = rng_stream(seed, "model-init")
        params: dict[str, np.ndarray] = {}
        for name, shape, kind in self.param_specs():
            if kind == "normal":
                params[name] = rng.normal(0.0, 0.02, size=shape).astype(self.dtype)
            elif kind == "ones":
                params[name] = np.ones(shape, dtype=self.dtype)
            else:
                params[name] = np.zeros(shape, dtype=self.dtype)
        return params

    def _check_shapes(self) -> None:
        expected = {name: shape for name, shape, _ in self.param_specs()}
        got = {name: tuple(t.shape) for name, t in self.params.items()}
        if expected != got:
            missing = sorted(set(expected) - set(got))
            extra = sorted(set(got) - set(expected))
            wrong = sorted(
                n for n in set(expected) & set(got) if expected[n] != got[n]
            )
            raise ValueError(
                f"parameter tensors do not match config: missing={missing} "
                f"extra={extra} shape-mismatch={wrong}"
            )

    def astype(self, dtype) -> "Seq2Seq":
        return Seq2Seq(self.config, self.vocab, dtype=dtype, params=self.params)

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        self.params = {k: np.asarray(v, dtype=self.dtype) for k, v in params.items()}
        self._check_shapes()

    def n_params(self) -> int:
        return sum(t.size for t in self.params.values())

    # -- masks and validation ------------------------------------------------

    def _check_ids(self, ids: np.ndarray, max_len: int, what: str) -> None:
        if ids.ndim != 2:
            raise ValueError(f"{what} ids must be a 2-d array")
        if ids.shape[1] > max_len:
            raise ValueError(
                f"{what} length {ids.shape[1]} exceeds configured max {max_len}"
            )
        if ids.shape[1] == 0:
            raise ValueError(f"empty {what} sequence")
        if int(ids.min()) < 0 or int(ids.max()) >= len(self.vocab):
            raise ValueError(
                f"{what} ids out of range for vocabulary of size {len(self.vocab)}"
            )

    # -- forward -------------------------------------------------------------

    def _embed(self, ids: np.ndarray, pos_name: str, rng):
        tok = self.params["tok_emb"][ids]
        pos = self.params[pos_name][: ids.shape[1]][None, :, :]
        x = tok + pos
        x, c_drop = ops.dropout_fwd(x, self.config.dropout, rng)
        return x, (ids, c_drop)

    def _mha_fwd(self, prefix: str, x_q, x_kv, mask, rng):
        p = self.params
        q, cq = ops.linear_fwd(x_q, p[f"{prefix}.wq"])
        k, ck = ops.linear_fwd(x_kv, p[f"{prefix}.wk"])
        v, cv = ops.linear_fwd(x_kv, p[f"{prefix}.wv"])
        h = self.config.n_heads
        ctx4, ca = ops.attn_core_fwd(
            ops.split_heads(q, h), ops.split_heads(k, h), ops.split_heads(v, h), mask
        )
        ctx = ops.merge_heads(ctx4)
        out, co = ops.linear_fwd(ctx, p[f"{prefix}.wo"])
        out, cd = ops.dropout_fwd(out, self.config.dropout, rng)
        return out, (prefix, cq, ck, cv, ca, co, cd, h)

    def _mha_bwd(self, cache, dout, grads):
        prefix, cq, ck, cv, ca, co, cd, h = cache
        dout = ops.dropout_bwd(cd, dout)
        dctx, dwo, _ = ops.linear_bwd(co, dout)
        _acc(grads, f"{prefix}.wo", dwo)
        dq4, dk4, dv4 = ops.attn_core_bwd(ca, ops.split_heads(dctx, h))
        dxq, dwq, _ = ops.linear_bwd(cq, ops.merge_heads(dq4))
        dxk, dwk, _ = ops.linear_bwd(ck, ops.merge_heads(dk4))
        dxv, dwv, _ = ops.linear_bwd(cv, ops.merge_heads(dv4))
        _acc(grads, f"{prefix}.wq", dwq)
        _acc(grads, f"{prefix}.wk", dwk)
        _acc(grads, f"{prefix}.wv", dwv)
        return dxq, dxk + dxv

    def _ffn_fwd(self, prefix: str, x, rng):
        p = self.params
        h1, c1 = ops.linear_fwd(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"])
        r, cr = ops.gelu_fwd(h1)
        h2, c2 = ops.linear_fwd(r, p[f"{prefix}.w2"], p[f"{prefix}.b2"])
        h2, cd = ops.dropout_fwd(h2, self.config.dropout, rng)
        return h2, (prefix, c1, cr, c2, cd)

    def _ffn_bwd(self, cache, dy, grads):
        prefix, c1, cr, c2, cd = cache
        dy = ops.dropout_bwd(cd, dy)
        dr, dw2, db2 = ops.linear_bwd(c2, dy)
        dh1 = ops.gelu_bwd(cr, dr)
        dx, dw1, db1 = ops.linear_bwd(c1, dh1)
        _acc(grads, f"{prefix}.w1", dw1)
        _acc(grads, f"{prefix}.b1", db1)
        _acc(grads, f"{prefix}.w2", dw2)
        _acc(grads, f"{prefix}.b2", db2)
        return dx

    def _ln_fwd(self, prefix: str, x):
        return ops.layer_norm_fwd(x, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    def _ln_bwd(self, prefix: str, cache, dy, grads):
        dx, dg, db = ops.layer_norm_bwd(cache, dy)
        _acc(grads, f"{prefix}.g", dg)
        _acc(grads, f"{prefix}.b", db)
        return dx

    def encoder_fwd(self, src: np.ndarray, rng=None):
        """Returns (memory, src_valid, cache)."""
        self._check_ids(src, self.config.max_source_len, "source")
        src_valid = src != self.vocab.pad_id
        if not bool(src_valid.any(axis=1).all()):
            raise ValueError("every source row must contain at least one token")
        key_mask = src_valid[:, None, None, :]
        x, c_emb = self._embed(src, "enc_pos", rng)
        layer_caches = []
        for i in range(self.config.n_encoder_layers):
            h, c_ln1 = self._ln_fwd(f"enc{i}.ln1", x)
            a, c_att = self._mha_fwd(f"enc{i}.self", h, h, key_mask, rng)
            x = x + a
            h2, c_ln2 = self._ln_fwd(f"enc{i}.ln2", x)
            f, c_ffn = self._ffn_fwd(f"enc{i}.ffn", h2, rng)
            x = x + f
            layer_caches.append((c_ln1, c_att, c_ln2, c_ffn))
        memory, c_lnf = self._ln_fwd("enc.lnf", x)
        return memory, src_valid, (c_emb, layer_caches, c_lnf)

    def encoder_bwd(self, cache, dmemory, grads):
        c_emb, layer_caches, c_lnf = cache
        dx = self._ln_bwd("enc.lnf", c_lnf, dmemory, grads)
        for i in reversed(range(self.config.n_encoder_layers)):
            c_ln1, c_att, c_ln2, c_ffn = layer_caches[i]
            dh2 = self._ffn_bwd(c_ffn, dx, grads)
            dx = dx + self._ln_bwd(f"enc{i}.ln2", c_ln2, dh2, grads)
            dxq, dxkv = self._mha_bwd(c_att, dx, grads)
            dx = dx + self._ln_bwd(f"enc{i}.ln1", c_ln1, dxq + dxkv, grads)
        self._embed_bwd(c_emb, dx, "enc_pos", grads)

    def _embed_bwd(self, cache, dx, pos_name, grads):
        ids, c_drop = cache
        dx = ops.dropout_bwd(c_drop, dx)
        _acc_pos(grads, pos_name, dx, self.params[pos_name].shape, self.dtype)
        demb = grads.setdefault(
            "tok_emb", np.zeros_like(self.params["tok_emb"])
        )
        np.add.at(demb, ids.reshape(-1), dx.reshape(-1, dx.shape[-1]))

    def decoder_fwd(self, tgt_in: np.ndarray, memory, src_valid, rng=None):
        """Returns (logits, cache)."""
        self._check_ids(tgt_in, self.config.max_target_len, "target")
        t = tgt_in.shape[1]
        tgt_valid = tgt_in != self.vocab.pad_id
        causal = np.tril(np.ones((t, t), dtype=bool))
        self_mask = causal[None, None, :, :] & tgt_valid[:, None, None, :]
        cross_mask = src_valid[:, None, None, :]
        x, c_emb = self._embed(tgt_in, "dec_pos", rng)
        layer_caches = []
        for i in range(self.config.n_decoder_layers):
            h, c_ln1 = self._ln_fwd(f"dec{i}.ln1", x)
            a, c_self = self._mha_fwd(f"dec{i}.self", h, h, self_mask, rng)
            x = x + a
            h2, c_ln2 = self._ln_fwd(f"dec{i}.ln2", x)
            a2, c_cross = self._mha_fwd(f"dec{i}.cross", h2, memory, cross_mask, rng)
            x = x + a2
            h3, c_ln3 = self._ln_fwd(f"dec{i}.ln3", x)
            f, c_ffn = self._ffn_fwd(f"dec{i}.ffn", h3, rng)
            x = x + f
            layer_caches.append((c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ffn))
        hd, c_lnf = self._ln_fwd("dec.lnf", x)
        logits, c_out = ops.linear_fwd(hd, self.params["out.w"], self.params["out.b"])
        return logits, (c_emb, layer_caches, c_lnf, c_out)

    def decoder_bwd(self, cache, dlogits, grads):
        """Returns dmemory."""
        c_emb, layer_caches, c_lnf, c_out = cache
        dhd, dw, db = ops.linear_bwd(c_out, dlogits)
        _acc(grads, "out.w", dw)
        _acc(grads, "out.b", db)
        dx = self._ln_bwd("dec.lnf", c_lnf, dhd, grads)
        dmemory = None
        for i in reversed(range(self.config.n_decoder_layers)):
            c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ffn = layer_caches[i]
            dh3 = self._ffn_bwd(c_ffn, dx, grads)
            dx = dx + self._ln_bwd(f"dec{i}.ln3", c_ln3, dh3, grads)
            dxq, dmem_i = self._mha_bwd(c_cross, dx, grads)
            dmemory = dmem_i if dmemory is None else dmemory + dmem_i
            dx = dx + self._ln_bwd(f"dec{i}.ln2", c_ln2, dxq, grads)
            dxq2, dxkv2 = self._mha_bwd(c_self, dx, grads)
            dx = dx + self._ln_bwd(f"dec{i}.ln1", c_ln1, dxq2 + dxkv2, grads)
        self._embed_bwd(c_emb, dx, "dec_pos", grads)
        return dmemory

    # -- incremental decoding (inference only, KV-cached) --------------------

    def make_decode_state(self, memory: np.ndarray, src_valid: np.ndarray) -> dict:
        """Per-layer decode cache: cross K/V precomputed from the encoder
        memory, self K/V grown one step at a time."""
        p = self.params
        h = self.config.n_heads
        cross = []
        for i in range(self.config.n_decoder_layers):
            kc = ops.split_heads(memory @ p[f"dec{i}.cross.wk"], h)
            vc = ops.split_heads(memory @ p[f"dec{i}.cross.wv"], h)
            cross.append((kc, vc))
        return {
            "t": 0,
            "cross": cross,
            "self": [None] * self.config.n_decoder_layers,
            "src_mask": src_valid[:, None, None, :],
        }

    def decode_step(self, token_ids: np.ndarray, state: dict) -> np.ndarray:
        """Feed one token per row, return next-token logits (rows, vocab).

        Numerically equivalent to running decoder_fwd over the whole prefix
        and taking the last position.
        """
        t = state["t"]
        if t >= self.config.max_target_len:
            raise ValueError("decode state exceeded the configured max target length")
        p = self.params
        h = self.config.n_heads
        x = p["tok_emb"][token_ids][:, None, :] + p["dec_pos"][t][None, None, :]
        for i in range(self.config.n_decoder_layers):
            hc, _ = ops.layer_norm_fwd(x, p[f"dec{i}.ln1.g"], p[f"dec{i}.ln1.b"])
            q = ops.split_heads(hc @ p[f"dec{i}.self.wq"], h)
            k_new = ops.split_heads(hc @ p[f"dec{i}.self.wk"], h)
            v_new = ops.split_heads(hc @ p[f"dec{i}.self.wv"], h)
            if state["self"][i] is None:
                k, v = k_new, v_new
            else:
                k_old, v_old = state["self"][i]
                k = np.concatenate([k_old, k_new], axis=2)
                v = np.concatenate([v_old, v_new], axis=2)
            state["self"][i] = (k, v)
            scale = np.asarray(1.0 / np.sqrt(q.shape[-1]), dtype=q.dtype)
            scores = (q @ k.swapaxes(-1, -2)) * scale  # every cached key is valid
            probs = np.exp(scores - scores.max(axis=-1, keepdims=True))
            probs /= probs.sum(axis=-1, keepdims=True)
            x = x + ops.merge_heads(probs @ v) @ p[f"dec{i}.self.wo"]

            hc, _ = ops.layer_norm_fwd(x, p[f"dec{i}.ln2.g"], p[f"dec{i}.ln2.b"])
            q2 = ops.split_heads(hc @ p[f"dec{i}.cross.wq"], h)
            kc, vc = state["cross"][i]
            ctx, _ = ops.attn_core_fwd(q2, kc, vc, state["src_mask"])
            x = x + ops.merge_heads(ctx) @ p[f"dec{i}.cross.wo"]

            hc, _ = ops.layer_norm_fwd(x, p[f"dec{i}.ln3.g"], p[f"dec{i}.ln3.b"])
            f1 = hc @ p[f"dec{i}.ffn.w1"] + p[f"dec{i}.ffn.b1"]
            g, _ = ops.gelu_fwd(f1)
            x = x + (g @ p[f"dec{i}.ffn.w2"] + p[f"dec{i}.ffn.b2"])
        hd, _ = ops.layer_norm_fwd(x, p["dec.lnf.g"], p["dec.lnf.b"])
        state["t"] = t + 1
        return (hd @ p["out.w"] + p["out.b"])[:, 0, :]

    @staticmethod
    def reindex_decode_state(state: dict, rows: np.ndarray) -> dict:
        """Select/reorder cache rows (beam reordering, finished-row drop)."""
        return {
            "t": state["t"],
            "cross": [(k[rows], v[rows]) for k, v in state["cross"]],
            "self": [
                None if kv is None else (kv[0][rows], kv[1][rows])
                for kv in state["self"]
            ],
            "src_mask": state["src_mask"][rows],
        }

    def forward(self, batch: Batch, train: bool = False, rng=None):
        """Teacher-forced forward pass. Returns (logits, loss, cache).

        Dropout is applied only when ``train`` is true and an rng is given;
        pad positions in the target are excluded from the loss.
        """
        drop_rng = rng if train else None
        memory, src_valid, enc_cache = self.encoder_fwd(batch.src, drop_rng)
        logits, dec_cache = self.decoder_fwd(batch.tgt_in, memory, src_valid, drop_rng)
        loss_mask = batch.tgt_out != self.vocab.pad_id
        loss, ce_cache = ops.cross_entropy_fwd(logits, batch.tgt_out, loss_mask)
        return logits, loss, (enc_cache, dec_cache, ce_cache)

    def backward(self, cache) -> dict[str, np.ndarray]:
        """Gradients of the mean loss for every parameter tensor."""
        enc_cache, dec_cache, ce_cache = cache
        grads: dict[str, np.ndarray] = {}
        dlogits = ops.cross_entropy_bwd(ce_cache)
        dmemory = self.decoder_bwd(dec_cache, dlogits, grads)
        self.encoder_bwd(enc_cache, dmemory, grads)
        # parameters untouched by this batch still get explicit zero grads
        for name, tensor in self.params.items():
            if name not in grads:
                grads[name] = np.zeros_like(tensor)
        return grads

    def loss_and_grads(self, batch: Batch, train: bool = True, rng=None):
        _, loss, cache = self.forward(batch, train=train, rng=rng)
        grads = self.backward(cache)
        return loss, grads


def _acc(grads: dict, name: str, value: np.ndarray) -> None:
    if name in grads:
        grads[name] = grads[name] + value
    else:
        grads[name] = value


def _acc_pos(grads: dict, name: str, dx: np.ndarray, full_shape, dtype) -> None:
    d = grads.setdefault(name, np.zeros(full_shape, dtype=dtype))
    d[: dx.shape[1]] += dx.sum(axis=0)
