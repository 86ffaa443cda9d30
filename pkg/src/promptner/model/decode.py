"""Greedy and beam-search decoding over the KV-cached incremental decoder.

Beam search ranks hypotheses by length-normalized log-probability: the sum
of token log-probs divided by the token count, the end token included for
finished hypotheses. At every step the top ``width`` candidates are kept;
candidates ending in <eos> retire to the finished pool and the rest carry
on, so beam(1) follows exactly the greedy trajectory. Score ties break
deterministically: earlier-ranked beam first, then lower token id.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import ops
from .network import Seq2Seq, pad_sequences


def _max_new_tokens(model: Seq2Seq, max_len: int | None) -> int:
    # the <bos> column occupies one slot of the decoder's position table
    cap = model.config.max_target_len - 1
    if max_len is not None and max_len < 1:
        raise ValueError("max_len must be >= 1")
    return cap if max_len is None else min(max_len, cap)


def _encode_batch(model: Seq2Seq, sources: Sequence[Sequence[int]]):
    if not sources or any(len(s) == 0 for s in sources):
        raise ValueError("empty source sequence")
    src = pad_sequences(list(sources), model.vocab.pad_id)
    memory, src_valid, _ = model.encoder_fwd(src)
    return memory, src_valid


def greedy_decode_batch(
    model: Seq2Seq, sources: Sequence[Sequence[int]], max_len: int | None = None
) -> list[list[int]]:
    """Greedy continuation for each source; returns token ids without
    <bos>/<eos>. Finished sentences leave the compute batch."""
    limit = _max_new_tokens(model, max_len)
    memory, src_valid = _encode_batch(model, sources)
    n = len(sources)
    outputs: list[list[int]] = [[] for _ in range(n)]
    active = list(range(n))
    state = model.make_decode_state(memory, src_valid)
    prev = np.full(n, model.vocab.bos_id, dtype=np.int64)
    for _ in range(limit):
        logits = model.decode_step(prev, state)
        nxt = np.argmax(logits, axis=-1)  # ties -> lowest token id
        keep: list[int] = []
        for row, sent in enumerate(active):
            token = int(nxt[row])
            if token == model.vocab.eos_id:
                continue
            outputs[sent].append(token)
            keep.append(row)
        if not keep:
            break
        if len(keep) < len(active):
            rows = np.asarray(keep)
            state = model.reindex_decode_state(state, rows)
            active = [active[r] for r in keep]
            prev = nxt[rows]
        else:
            prev = nxt
    return outputs


class _BeamState:
    """Per-sentence beams: fixed `width` rows, dead rows carry -inf."""

    __slots__ = ("tokens", "score_sum", "finished")

    def __init__(self, width: int):
        self.tokens: list[list[int]] = [[] for _ in range(width)]
        self.score_sum = np.full(width, -np.inf)
        self.score_sum[0] = 0.0  # a single empty hypothesis to start from
        self.finished: list[tuple[float, list[int]]] = []

    @property
    def alive(self) -> bool:
        return bool(np.isfinite(self.score_sum).any())


def _advance(
    state: _BeamState, lp: np.ndarray, step: int, width: int, eos: int
) -> list[tuple[int, int]]:
    """Select the top `width` candidates; eos candidates retire to the
    finished pool. Returns (parent beam, token) for the surviving beams."""
    cand = (state.score_sum[:, None] + lp) / (step + 1)
    order = np.argsort(-cand, axis=None, kind="stable")
    vocab_size = lp.shape[1]
    new_tokens: list[list[int]] = []
    new_sums: list[float] = []
    parents: list[tuple[int, int]] = []
    for flat in order[:width]:
        b, tok = divmod(int(flat), vocab_size)
        score_sum = state.score_sum[b] + float(lp[b, tok])
        if not np.isfinite(score_sum):
            break
        if tok == eos:
            state.finished.append((score_sum / (step + 1), state.tokens[b]))
        else:
            new_tokens.append(state.tokens[b] + [tok])
            new_sums.append(score_sum)
            parents.append((b, tok))
    pad_rows = width - len(new_tokens)
    filler = new_tokens[-1] if new_tokens else []
    filler_parent = parents[-1] if parents else (0, eos)
    state.tokens = new_tokens + [list(filler) for _ in range(pad_rows)]
    state.score_sum = np.array(new_sums + [-np.inf] * pad_rows)
    parents.extend([filler_parent] * pad_rows)
    return parents


def beam_decode_batch(
    model: Seq2Seq,
    sources: Sequence[Sequence[int]],
    width: int,
    max_len: int | None = None,
) -> list[list[int]]:
    """Beam search over a batch of sources; returns the best hypothesis per
    source (token ids without <bos>/<eos>)."""
    if width < 1:
        raise ValueError("beam width must be >= 1")
    limit = _max_new_tokens(model, max_len)
    memory, src_valid = _encode_batch(model, sources)
    n = len(sources)
    eos = model.vocab.eos_id
    states = [_BeamState(width) for _ in range(n)]
    # expanded rows: sentence-major blocks of `width` beams sharing a memory
    cache = model.make_decode_state(
        np.repeat(memory, width, axis=0), np.repeat(src_valid, width, axis=0)
    )
    prev = np.full(n * width, model.vocab.bos_id, dtype=np.int64)

    for t in range(limit):
        if not any(st.alive for st in states):
            break
        logits = model.decode_step(prev, cache)
        logp = ops.log_softmax(logits)
        parent_rows = np.arange(n * width)
        prev = prev.copy()
        for i, st in enumerate(states):
            if not st.alive:
                continue
            block = slice(i * width, (i + 1) * width)
            parents = _advance(st, logp[block], t, width, eos)
            for b, (parent, token) in enumerate(parents):
                parent_rows[i * width + b] = i * width + parent
                prev[i * width + b] = token
        cache = model.reindex_decode_state(cache, parent_rows)

    results = []
    for st in states:
        candidates = list(st.finished)
        for b in range(width):
            if np.isfinite(st.score_sum[b]) and st.tokens[b]:
                candidates.append(
                    (float(st.score_sum[b]) / len(st.tokens[b]), st.tokens[b])
                )
        if not candidates:
            results.append([])
            continue
        best = max(candidates, key=lambda c: (c[0], [-x for x in c[1]]))
        results.append(best[1])
    return results


def greedy_decode(
    model: Seq2Seq, src_ids: Sequence[int], max_len: int | None = None
) -> list[int]:
    return greedy_decode_batch(model, [list(src_ids)], max_len)[0]


def beam_decode(
    model: Seq2Seq, src_ids: Sequence[int], width: int, max_len: int | None = None
) -> list[int]:
    return beam_decode_batch(model, [list(src_ids)], width, max_len)[0]


def decode(
    model: Seq2Seq,
    src_ids: Sequence[int],
    mode: str = "greedy",
    width: int = 1,
    max_len: int | None = None,
) -> str:
    """Decode one source to a string. ``mode`` is "greedy" or "beam"."""
    if mode == "greedy":
        tokens = greedy_decode(model, src_ids, max_len)
    elif mode == "beam":
        tokens = beam_decode(model, src_ids, width, max_len)
    else:
        raise ValueError(f"unknown decode mode {mode!r}")
    return model.vocab.decode(tokens)


def decode_batch(
    model: Seq2Seq,
    sources: Sequence[Sequence[int]],
    mode: str = "greedy",
    width: int = 1,
    max_len: int | None = None,
    batch_size: int = 16,
) -> list[str]:
    """Decode many sources, processed in batches; returns strings."""
    out: list[str] = []
    for lo in range(0, len(sources), batch_size):
        chunk = [list(s) for s in sources[lo : lo + batch_size]]
        if mode == "greedy":
            token_lists = greedy_decode_batch(model, chunk, max_len)
        elif mode == "beam":
            token_lists = beam_decode_batch(model, chunk, width, max_len)
        else:
            raise ValueError(f"unknown decode mode {mode!r}")
        out.extend(model.vocab.decode(t) for t in token_lists)
    return out
