"""Training loops: joint/single NER fine-tuning and prefix-LM adaptation.

Everything here is deterministic for a fixed seed: example materialization,
batch order, dropout masks, and evaluation. Checkpoint snapshots are kept in
memory at every evaluation point; the returned model is rewound to the
selected step (best mean dev F1 for NER, lowest mean dev loss for
adaptation).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .adapt import AdaptTrace, build_adapt_stream, prefix_split, select_adapt_checkpoint
from .codec import PromptedExample, parse_target, serialize_input, target_is_valid
from .codec import WIRE_LITERALS
from .corpus import AnnotatedSentence, CorpusSplit
from .evalkit import EvalReport, MatchCounts, aggregate, score_sentence
from .model import AdamW, Batch, ModelConfig, OptimizerConfig, Seq2Seq, Vocab
from .model import build_vocab, make_batch, train_step
from .model.decode import decode_batch
from .prompting import PromptStrategy, make_training_examples
from .rng import rng_stream
from .sampler import BatchSampler, JointTrace, SamplingPolicy, select_joint_checkpoint
from .schema import Registry


def corpus_vocab(
    corpora: dict[str, CorpusSplit], registry: Registry, extra_texts: Sequence[str] = ()
) -> Vocab:
    """Shared vocabulary over all raw split texts, prompt names, and the
    target-grammar literals, so adaptation and fine-tuning interoperate."""
    texts: list[str] = [WIRE_LITERALS]
    for ds in sorted(corpora):
        cs = corpora[ds]
        texts.extend(s.text for part in (cs.train, cs.dev, cs.test) for s in part)
    texts.extend(extra_texts)
    return build_vocab(texts, registry)


@dataclass(frozen=True)
class EvalSettings:
    beam_width: int = 1  # 1 = greedy
    max_len: int | None = None
    batch_size: int = 24
    match_mode: str = "surface"


def evaluate_ner(
    model: Seq2Seq,
    registry: Registry,
    sentences_by_ds: dict[str, Sequence[AnnotatedSentence]],
    settings: EvalSettings = EvalSettings(),
) -> dict[str, EvalReport]:
    """Decode every sentence with its dataset's full prompt list and score
    exact matches. Unparseable generations count as zero predictions and a
    parse-validity failure."""
    reports: dict[str, EvalReport] = {}
    mode = "greedy" if settings.beam_width <= 1 else "beam"
    for ds in sorted(sentences_by_ds):
        sentences = list(sentences_by_ds[ds])
        if not sentences:
            continue
        entities = registry.entities_of(ds)
        prompt_ids = [et.id for et in entities]
        sources = [
            model.vocab.encode(serialize_input(prompt_ids, s.text, registry))
            for s in sentences
        ]
        raw = decode_batch(
            model,
            sources,
            mode=mode,
            width=settings.beam_width,
            max_len=settings.max_len,
            batch_size=settings.batch_size,
        )
        counts = MatchCounts()
        for sentence, target in zip(sentences, raw):
            result = parse_target(target, entities, mode="lenient")
            pairs = [p for p in result.pairs if not p.is_null]
            c = score_sentence(
                pairs, sentence.mentions, settings.match_mode, text=sentence.text
            )
            if not target_is_valid(target, entities):
                c.n_parse_failures += 1
            counts = counts.merge(c)
        reports[ds] = aggregate(counts)
    return reports


@dataclass
class TrainOutcome:
    model: Seq2Seq
    vocab: Vocab
    loss_trace: list[tuple[int, float]]
    trace: JointTrace
    selected_step: int
    reports: dict[str, EvalReport]  # dev reports at the selected step
    stream_hash: str
    all_null_fraction: float
    skipped_overlong: int


def _materialize(
    corpora: dict[str, CorpusSplit],
    registry: Registry,
    strategy: PromptStrategy,
    seed: int,
) -> tuple[dict[str, list[PromptedExample]], float]:
    pools: dict[str, list[PromptedExample]] = {}
    total = 0
    all_null = 0
    for ds in sorted(corpora):
        spec = registry.dataset(ds)
        pool: list[PromptedExample] = []
        for i, sentence in enumerate(corpora[ds].train):
            rng = rng_stream(seed, "prompting", ds, i)
            for ex in make_training_examples(sentence, spec, strategy, rng, registry):
                pool.append(ex)
                total += 1
                gold_types = {m.type_id for m in ex.origin.mentions}
                if not (gold_types & set(ex.prompts)):
                    all_null += 1
        pools[ds] = pool
    return pools, (all_null / total if total else 0.0)


def train_ner(
    corpora: dict[str, CorpusSplit],
    registry: Registry,
    model_cfg: ModelConfig,
    opt_cfg: OptimizerConfig,
    strategy: PromptStrategy,
    seed: int,
    steps: int,
    eval_every: int,
    policy_kind: str = "proportional",
    vocab: Vocab | None = None,
    init_params: dict[str, np.ndarray] | None = None,
    eval_settings: EvalSettings = EvalSettings(),
    eval_split: str = "dev",
) -> TrainOutcome:
    """Joint (or single-corpus) NER fine-tuning with periodic dev evaluation
    and best-mean-F1 checkpoint selection."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if opt_cfg.total_steps != steps:
        opt_cfg = replace(
            opt_cfg, total_steps=steps, warmup_steps=min(opt_cfg.warmup_steps, steps)
        )
    pools, all_null_fraction = _materialize(corpora, registry, strategy, seed)
    vocab = vocab if vocab is not None else corpus_vocab(corpora, registry)

    encoded: dict[str, list[tuple[str, str]]] = {}
    skipped = 0
    for ds, pool in pools.items():
        keep: list[tuple[str, str]] = []
        for ex in pool:
            if (
                len(vocab.encode(ex.source)) <= model_cfg.max_source_len
                and len(vocab.encode(ex.target)) + 1 <= model_cfg.max_target_len
            ):
                keep.append((ex.source, ex.target))
            else:
                skipped += 1
        if keep:
            encoded[ds] = keep
    if not encoded:
        raise ValueError("no training examples fit the configured max lengths")

    model = Seq2Seq(model_cfg, vocab, seed=seed)
    if init_params is not None:
        model.load_params({k: v.copy() for k, v in init_params.items()})
    optimizer = AdamW(opt_cfg, model)
    sampler = BatchSampler(
        {ds: len(pool) for ds, pool in encoded.items()},
        SamplingPolicy(kind=policy_kind, seed=seed),
    )
    eval_sentences = {
        ds: list(getattr(corpora[ds], eval_split)) for ds in sorted(corpora)
    }
    eval_sentences = {ds: s for ds, s in eval_sentences.items() if s}

    stream = hashlib.blake2b(digest_size=16)
    loss_trace: list[tuple[int, float]] = []
    snapshots: dict[int, dict[str, np.ndarray]] = {}
    trace_steps: list[int] = []
    trace_rows: list[list[float]] = []
    reports_by_step: dict[int, dict[str, EvalReport]] = {}
    ds_order = sorted(eval_sentences)

    for step in range(1, steps + 1):
        refs = sampler.batch(opt_cfg.batch_size, step)
        for ds, idx in refs:
            stream.update(f"{ds}:{idx};".encode())
        batch = make_batch(
            vocab,
            [encoded[ds][idx] for ds, idx in refs],
            model_cfg.max_source_len,
            model_cfg.max_target_len,
        )
        loss = train_step(model, optimizer, batch, rng_stream(seed, "dropout", step))
        loss_trace.append((step, loss))
        if step % eval_every == 0 or step == steps:
            reports = evaluate_ner(model, registry, eval_sentences, eval_settings)
            trace_steps.append(step)
            trace_rows.append([reports[ds].macro_f1 for ds in ds_order])
            reports_by_step[step] = reports
            snapshots[step] = model.copy_params()

    trace = JointTrace(
        steps=tuple(trace_steps), dataset_ids=tuple(ds_order), f1=np.array(trace_rows)
    )
    selected = select_joint_checkpoint(trace)
    model.load_params(snapshots[selected])
    return TrainOutcome(
        model=model,
        vocab=vocab,
        loss_trace=loss_trace,
        trace=trace,
        selected_step=selected,
        reports=reports_by_step[selected],
        stream_hash=stream.hexdigest(),
        all_null_fraction=all_null_fraction,
        skipped_overlong=skipped,
    )


# ---------------------------------------------------------------------------
# Prefix-LM adaptation
# ---------------------------------------------------------------------------


@dataclass
class AdaptOutcome:
    params: dict[str, np.ndarray]  # at the selected step
    vocab: Vocab
    trace: AdaptTrace
    selected_step: int
    snapshots: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)
    loss_trace: list[tuple[int, float]] = field(default_factory=list)


def _prefix_batch(
    vocab: Vocab, examples, max_src: int, max_tgt: int
) -> Batch:
    pairs = []
    for ex in examples:
        # desk-scale simplification: crop overlong halves instead of skipping
        pairs.append((ex.source[: max_src], ex.target[: max_tgt - 1]))
    return make_batch(vocab, pairs, max_src, max_tgt)


def train_prefix_lm(
    corpora: dict[str, CorpusSplit],
    registry: Registry,
    model_cfg: ModelConfig,
    opt_cfg: OptimizerConfig,
    seed: int,
    steps: int,
    eval_every: int,
    vocab: Vocab | None = None,
    snapshot_steps: Sequence[int] = (),
) -> AdaptOutcome:
    """Adapt a fresh model with the prefix language modelling objective,
    tracking per-dataset dev loss and selecting the lowest-mean-loss step."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if opt_cfg.total_steps != steps:
        opt_cfg = replace(
            opt_cfg, total_steps=steps, warmup_steps=min(opt_cfg.warmup_steps, steps)
        )
    vocab = vocab if vocab is not None else corpus_vocab(corpora, registry)
    train_texts = {
        ds: [s.text for s in corpora[ds].train if len(s.text) >= 2]
        for ds in sorted(corpora)
    }
    dev_examples = {
        ds: [
            prefix_split(s.text, rng_stream(seed, "adapt-dev", ds, i), ds)
            for i, s in enumerate(corpora[ds].dev)
            if len(s.text) >= 2
        ]
        for ds in sorted(corpora)
    }
    dev_examples = {ds: ex for ds, ex in dev_examples.items() if ex}

    model = Seq2Seq(model_cfg, vocab, seed=seed)
    optimizer = AdamW(opt_cfg, model)
    stream = build_adapt_stream(train_texts, opt_cfg.batch_size, seed)

    def dev_loss(ds: str) -> float:
        total_ce = 0.0
        total_tokens = 0
        examples = dev_examples[ds]
        for lo in range(0, len(examples), 32):
            batch = _prefix_batch(
                vocab, examples[lo : lo + 32], model_cfg.max_source_len, model_cfg.max_target_len
            )
            _, loss, _ = model.forward(batch, train=False)
            n = int((batch.tgt_out != vocab.pad_id).sum())
            total_ce += loss * n
            total_tokens += n
        return total_ce / total_tokens

    ds_order = sorted(dev_examples)
    want_snapshots = set(snapshot_steps)
    trace_steps: list[int] = []
    trace_rows: list[list[float]] = []
    snapshots: dict[int, dict[str, np.ndarray]] = {}
    loss_trace: list[tuple[int, float]] = []
    for step, examples in zip(range(1, steps + 1), stream):
        batch = _prefix_batch(
            vocab, examples, model_cfg.max_source_len, model_cfg.max_target_len
        )
        loss = train_step(model, optimizer, batch, rng_stream(seed, "adapt-drop", step))
        loss_trace.append((step, loss))
        if step % eval_every == 0 or step == steps or step in want_snapshots:
            trace_steps.append(step)
            trace_rows.append([dev_loss(ds) for ds in ds_order])
            snapshots[step] = model.copy_params()

    trace = AdaptTrace(
        steps=tuple(trace_steps), dataset_ids=tuple(ds_order), losses=np.array(trace_rows)
    )
    selected = select_adapt_checkpoint(trace)
    return AdaptOutcome(
        params=snapshots[selected],
        vocab=vocab,
        trace=trace,
        selected_step=selected,
        snapshots=snapshots,
        loss_trace=loss_trace,
    )
