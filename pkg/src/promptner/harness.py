"""Scripted experiment pipelines: pilot study (adaptation benefit),
joint-vs-single comparison, prompt-strategy ablation, and adaptation-step
ablation.

Each run persists everything needed to re-render its tables (per-seed
results JSON, trace CSVs) into the output directory with atomic renames;
``render_*`` functions rebuild the exact table text from the persisted
results without retraining.
"""

from __future__ import annotations

import json
import os
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import CorpusSplit, load_jsonl, split
from .evalkit import EvalReport
from .model import ModelConfig, OptimizerConfig
from .prompting import PromptStrategy
from .schema import Registry, SplitPolicy, load_registry, main_registry, synth_registry
from .synth import default_corpora
from .training import (
    EvalSettings,
    TrainOutcome,
    corpus_vocab,
    evaluate_ner,
    train_ner,
    train_prefix_lm,
)

STRATEGY_ROWS = ("random", "random_exact", "dataset")


@dataclass(frozen=True)
class ExperimentPlan:
    id: str
    corpora: dict = field(
        default_factory=lambda: {"kind": "synthetic", "sizes": None, "seed": 7}
    )
    registry: str = "bundled:synth"
    seeds: tuple[int, ...] = (11, 23, 47)
    strategy: str = "dataset"
    k_max: int | None = None
    policy: str = "proportional"
    model: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    steps: int = 240
    eval_every: int = 60
    adapt_steps: int = 0
    adapt_eval_every: int = 50
    finetune_steps: int = 0
    eval_beam: int = 1
    eval_max_len: int | None = 72

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ValueError("plan needs at least one seed")
        if self.steps < 1:
            raise ValueError("training budget must be positive")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentPlan":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        obj["seeds"] = tuple(obj.get("seeds", (11, 23, 47)))
        return cls(**obj)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    def model_config(self) -> ModelConfig:
        return ModelConfig(**self.model)

    def optimizer_config(self, steps: int) -> OptimizerConfig:
        cfg = dict(self.optimizer)
        cfg["total_steps"] = steps
        cfg.setdefault("warmup_steps", max(1, steps // 10))
        cfg["warmup_steps"] = min(cfg["warmup_steps"], steps)
        return OptimizerConfig(**cfg)

    def eval_settings(self) -> EvalSettings:
        return EvalSettings(beam_width=self.eval_beam, max_len=self.eval_max_len)


def resolve_registry(name: str) -> Registry:
    if name == "bundled:synth":
        return synth_registry()
    if name == "bundled:main":
        return main_registry()
    return load_registry(name)


def load_plan_corpora(plan: ExperimentPlan, registry: Registry) -> dict[str, CorpusSplit]:
    desc = plan.corpora
    kind = desc.get("kind", "synthetic")
    if kind == "synthetic":
        return default_corpora(desc.get("sizes"), seed=desc.get("seed", 7), registry=registry)
    if kind == "jsonl":
        corpora: dict[str, CorpusSplit] = {}
        for ds, paths in desc["datasets"].items():
            if "train" in paths:
                parts = {
                    part: load_jsonl(paths[part], ds, registry)
                    for part in ("train", "dev", "test")
                    if part in paths
                }
                corpora[ds] = split(parts, SplitPolicy("provided"))
            else:
                sentences = load_jsonl(paths["all"], ds, registry)
                corpora[ds] = split(sentences, registry.dataset(ds).split_policy)
        return corpora
    raise ValueError(f"unknown corpora descriptor kind {kind!r}")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _dump_results(out_dir: Path, results: dict, table: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "results.json", json.dumps(results, indent=2, sort_keys=True) + "\n")
    _atomic_write(out_dir / "table.txt", table)


def _report_f1(rep: EvalReport) -> dict:
    return {
        "macro_f1": rep.macro_f1,
        "micro_f1": rep.micro_f1,
        "parse_validity_rate": rep.parse_validity_rate,
        "per_type_f1": {t: s.f1 for t, s in sorted(rep.per_type.items())},
    }


def _median(values: Sequence[float]) -> float:
    return float(statistics.median(values))


def _fmt_table(headers: list[str], body: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [headers] + body) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Pilot study: does prefix-LM adaptation help a short fine-tune?
# ---------------------------------------------------------------------------


def run_pilot(plan: ExperimentPlan, out_dir: str | Path) -> dict:
    """Scratch fine-tune vs adapt-then-fine-tune, same seeds/data/budget."""
    if plan.finetune_steps < 1:
        raise ValueError("pilot plan needs finetune_steps >= 1")
    out_dir = Path(out_dir)
    registry = resolve_registry(plan.registry)
    corpora = load_plan_corpora(plan, registry)
    strategy = PromptStrategy.from_name(plan.strategy, plan.k_max)
    model_cfg = plan.model_config()
    per_seed = []
    for seed in plan.seeds:
        vocab = corpus_vocab(corpora, registry)
        common = dict(
            corpora=corpora,
            registry=registry,
            model_cfg=model_cfg,
            opt_cfg=plan.optimizer_config(plan.finetune_steps),
            strategy=strategy,
            seed=seed,
            steps=plan.finetune_steps,
            eval_every=plan.eval_every,
            policy_kind=plan.policy,
            vocab=vocab,
            eval_settings=plan.eval_settings(),
        )
        scratch = train_ner(**common)
        if plan.adapt_steps > 0:
            adapted_init = train_prefix_lm(
                corpora,
                registry,
                model_cfg,
                plan.optimizer_config(plan.adapt_steps),
                seed=seed,
                steps=plan.adapt_steps,
                eval_every=plan.adapt_eval_every,
                vocab=vocab,
            )
            adapt_trace_path = out_dir / f"adapt_trace_seed{seed}.csv"
            out_dir.mkdir(parents=True, exist_ok=True)
            adapted_init.trace.write_csv(adapt_trace_path)
            adapted = train_ner(**common, init_params=adapted_init.params)
            adapt_step = adapted_init.selected_step
        else:
            adapted = train_ner(**common)
            adapt_step = 0
        if scratch.stream_hash != adapted.stream_hash:
            raise RuntimeError("pilot arms consumed different example streams")
        per_seed.append(
            {
                "seed": seed,
                "adapt_selected_step": adapt_step,
                "stream_hash": scratch.stream_hash,
                "scratch": {ds: _report_f1(r) for ds, r in scratch.reports.items()},
                "adapted": {ds: _report_f1(r) for ds, r in adapted.reports.items()},
                "scratch_mean_f1": _mean_macro(scratch.reports),
                "adapted_mean_f1": _mean_macro(adapted.reports),
            }
        )
    results = {
        "experiment": "pilot",
        "plan": plan.to_dict(),
        "per_seed": per_seed,
        "medians": {
            "scratch_mean_f1": _median([r["scratch_mean_f1"] for r in per_seed]),
            "adapted_mean_f1": _median([r["adapted_mean_f1"] for r in per_seed]),
        },
    }
    _dump_results(out_dir, results, render_pilot_table(results))
    return results


def _mean_macro(reports: dict[str, EvalReport]) -> float:
    return sum(r.macro_f1 for r in reports.values()) / len(reports)


def render_pilot_table(results: dict) -> str:
    med = results["medians"]
    body = [
        ["scratch fine-tune", f"{med['scratch_mean_f1']:.4f}"],
        ["adapt then fine-tune", f"{med['adapted_mean_f1']:.4f}"],
        ["delta", f"{med['adapted_mean_f1'] - med['scratch_mean_f1']:+.4f}"],
    ]
    return _fmt_table(["Arm", "Median mean dev F1"], body)


# ---------------------------------------------------------------------------
# Joint vs single-dataset training
# ---------------------------------------------------------------------------


def run_joint_vs_single(plan: ExperimentPlan, out_dir: str | Path) -> dict:
    """One joint model vs one model per corpus, per-corpus exposure matched
    (joint budget = single budget x number of corpora)."""
    out_dir = Path(out_dir)
    registry = resolve_registry(plan.registry)
    corpora = load_plan_corpora(plan, registry)
    if len(corpora) < 2:
        raise ValueError("joint-vs-single needs at least two corpora")
    strategy = PromptStrategy.from_name(plan.strategy, plan.k_max)
    model_cfg = plan.model_config()
    n = len(corpora)
    eval_settings = plan.eval_settings()
    per_seed = []
    for seed in plan.seeds:
        joint_steps = plan.steps * n
        joint = train_ner(
            corpora,
            registry,
            model_cfg,
            plan.optimizer_config(joint_steps),
            strategy,
            seed=seed,
            steps=joint_steps,
            eval_every=plan.eval_every * n,
            policy_kind=plan.policy,
            eval_settings=eval_settings,
        )
        joint_test = evaluate_ner(
            joint.model,
            registry,
            {ds: corpora[ds].test for ds in corpora},
            eval_settings,
        )
        single_test: dict[str, EvalReport] = {}
        for ds in sorted(corpora):
            single = train_ner(
                {ds: corpora[ds]},
                registry,
                model_cfg,
                plan.optimizer_config(plan.steps),
                strategy,
                seed=seed,
                steps=plan.steps,
                eval_every=plan.eval_every,
                policy_kind=plan.policy,
                eval_settings=eval_settings,
            )
            single_test[ds] = evaluate_ner(
                single.model, registry, {ds: corpora[ds].test}, eval_settings
            )[ds]
        per_seed.append(
            {
                "seed": seed,
                "joint": {ds: _report_f1(r) for ds, r in joint_test.items()},
                "single": {ds: _report_f1(r) for ds, r in single_test.items()},
                "joint_selected_step": joint.selected_step,
            }
        )
    smallest = min(sorted(corpora), key=lambda ds: len(corpora[ds].train))
    results = {
        "experiment": "joint_vs_single",
        "plan": plan.to_dict(),
        "dataset_ids": sorted(corpora),
        "smallest_dataset": smallest,
        "n_models_single": n,
        "per_seed": per_seed,
        "medians": _joint_medians(per_seed, sorted(corpora)),
    }
    _dump_results(out_dir, results, render_joint_table(results))
    fine = render_fine_grained(results)
    _atomic_write(Path(out_dir) / "fine_grained.txt", fine)
    return results


def _joint_medians(per_seed: list[dict], dataset_ids: list[str]) -> dict:
    med: dict = {"joint": {}, "single": {}}
    for arm in ("joint", "single"):
        for ds in dataset_ids:
            med[arm][ds] = _median([r[arm][ds]["macro_f1"] for r in per_seed])
        med[f"{arm}_mean"] = _median(
            [
                sum(r[arm][ds]["macro_f1"] for ds in dataset_ids) / len(dataset_ids)
                for r in per_seed
            ]
        )
    return med


def render_joint_table(results: dict) -> str:
    ds = results["dataset_ids"]
    med = results["medians"]
    headers = ["Run"] + ds + ["Avg. Score", "# models"]
    body = [
        ["single-dataset"]
        + [f"{med['single'][d]:.4f}" for d in ds]
        + [f"{med['single_mean']:.4f}", str(results["n_models_single"])],
        ["joint"]
        + [f"{med['joint'][d]:.4f}" for d in ds]
        + [f"{med['joint_mean']:.4f}", "1"],
        ["delta"]
        + [f"{med['joint'][d] - med['single'][d]:+.4f}" for d in ds]
        + [f"{med['joint_mean'] - med['single_mean']:+.4f}", ""],
    ]
    return _fmt_table(headers, body)


def render_fine_grained(results: dict) -> str:
    """Per-type F1 medians, one block per dataset (types unique to one
    corpus appear only in that corpus's block)."""
    blocks = []
    for ds in results["dataset_ids"]:
        types = sorted(
            {
                t
                for r in results["per_seed"]
                for t in r["joint"][ds]["per_type_f1"]
            }
            | {
                t
                for r in results["per_seed"]
                for t in r["single"][ds]["per_type_f1"]
            }
        )
        headers = [ds] + types
        rows = []
        for arm in ("single", "joint"):
            row = [arm]
            for t in types:
                vals = [
                    r[arm][ds]["per_type_f1"].get(t)
                    for r in results["per_seed"]
                    if t in r[arm][ds]["per_type_f1"]
                ]
                row.append(f"{_median(vals):.4f}" if vals else "-")
            rows.append(row)
        blocks.append(_fmt_table(headers, rows))
    return "\n".join(blocks)


# ---------------------------------------------------------------------------
# Prompt-strategy ablation
# ---------------------------------------------------------------------------


def run_prompt_ablation(plan: ExperimentPlan, out_dir: str | Path) -> dict:
    """Random / random+exact / dataset-dependent prompting under identical
    budgets; inference always uses the dataset's full prompt list."""
    out_dir = Path(out_dir)
    registry = resolve_registry(plan.registry)
    corpora = load_plan_corpora(plan, registry)
    model_cfg = plan.model_config()
    eval_settings = plan.eval_settings()
    per_seed = []
    for seed in plan.seeds:
        arms = {}
        for name in STRATEGY_ROWS:
            strategy = PromptStrategy.from_name(name, plan.k_max)
            out = train_ner(
                corpora,
                registry,
                model_cfg,
                plan.optimizer_config(plan.steps),
                strategy,
                seed=seed,
                steps=plan.steps,
                eval_every=plan.eval_every,
                policy_kind=plan.policy,
                eval_settings=eval_settings,
            )
            test = evaluate_ner(
                out.model, registry, {ds: corpora[ds].test for ds in corpora}, eval_settings
            )
            arms[name] = {
                "reports": {ds: _report_f1(r) for ds, r in test.items()},
                "all_null_fraction": out.all_null_fraction,
            }
        per_seed.append({"seed": seed, "arms": arms})
    dataset_ids = sorted(corpora)
    medians = {}
    for name in STRATEGY_ROWS:
        medians[name] = {
            "per_dataset": {
                ds: _median(
                    [r["arms"][name]["reports"][ds]["macro_f1"] for r in per_seed]
                )
                for ds in dataset_ids
            },
            "mean": _median(
                [
                    sum(
                        r["arms"][name]["reports"][ds]["macro_f1"]
                        for ds in dataset_ids
                    )
                    / len(dataset_ids)
                    for r in per_seed
                ]
            ),
            "all_null_fraction": _median(
                [r["arms"][name]["all_null_fraction"] for r in per_seed]
            ),
        }
    results = {
        "experiment": "prompt_ablation",
        "plan": plan.to_dict(),
        "dataset_ids": dataset_ids,
        "per_seed": per_seed,
        "medians": medians,
    }
    _dump_results(out_dir, results, render_prompt_table(results))
    return results


_STRATEGY_LABELS = {
    "random": "random prompt",
    "random_exact": "random prompt + exact match",
    "dataset": "dataset-dependent prompt",
}


def render_prompt_table(results: dict) -> str:
    ds = results["dataset_ids"]
    headers = ["Prompt setup"] + ds + ["Avg. Score", "all-NULL frac"]
    body = []
    for name in STRATEGY_ROWS:
        med = results["medians"][name]
        body.append(
            [_STRATEGY_LABELS[name]]
            + [f"{med['per_dataset'][d]:.4f}" for d in ds]
            + [f"{med['mean']:.4f}", f"{med['all_null_fraction']:.4f}"]
        )
    return _fmt_table(headers, body)


# ---------------------------------------------------------------------------
# Adaptation-step ablation
# ---------------------------------------------------------------------------


def run_adapt_step_ablation(
    plan: ExperimentPlan, candidate_steps: Sequence[int], out_dir: str | Path
) -> dict:
    """Joint fine-tune launched from adaptation checkpoints at each candidate
    step."""
    candidates = sorted(set(int(c) for c in candidate_steps))
    if len(candidates) < 2:
        raise ValueError("need at least two candidate adaptation steps")
    out_dir = Path(out_dir)
    registry = resolve_registry(plan.registry)
    corpora = load_plan_corpora(plan, registry)
    strategy = PromptStrategy.from_name(plan.strategy, plan.k_max)
    model_cfg = plan.model_config()
    eval_settings = plan.eval_settings()
    per_seed = []
    for seed in plan.seeds:
        vocab = corpus_vocab(corpora, registry)
        adapt = train_prefix_lm(
            corpora,
            registry,
            model_cfg,
            plan.optimizer_config(max(candidates)),
            seed=seed,
            steps=max(candidates),
            eval_every=plan.adapt_eval_every,
            vocab=vocab,
            snapshot_steps=candidates,
        )
        rows = {}
        for step in candidates:
            if step not in adapt.snapshots:
                raise ValueError(f"no adaptation checkpoint at step {step}")
            out = train_ner(
                corpora,
                registry,
                model_cfg,
                plan.optimizer_config(plan.steps),
                strategy,
                seed=seed,
                steps=plan.steps,
                eval_every=plan.eval_every,
                policy_kind=plan.policy,
                vocab=vocab,
                init_params=adapt.snapshots[step],
                eval_settings=eval_settings,
            )
            test = evaluate_ner(
                out.model, registry, {ds: corpora[ds].test for ds in corpora}, eval_settings
            )
            rows[str(step)] = {ds: _report_f1(r) for ds, r in test.items()}
        per_seed.append({"seed": seed, "rows": rows})
    dataset_ids = sorted(corpora)
    medians = {
        str(step): {
            "per_dataset": {
                ds: _median(
                    [r["rows"][str(step)][ds]["macro_f1"] for r in per_seed]
                )
                for ds in dataset_ids
            },
            "mean": _median(
                [
                    sum(r["rows"][str(step)][ds]["macro_f1"] for ds in dataset_ids)
                    / len(dataset_ids)
                    for r in per_seed
                ]
            ),
        }
        for step in candidates
    }
    results = {
        "experiment": "adapt_step_ablation",
        "plan": plan.to_dict(),
        "dataset_ids": dataset_ids,
        "candidate_steps": candidates,
        "per_seed": per_seed,
        "medians": medians,
    }
    _dump_results(out_dir, results, render_adapt_steps_table(results))
    return results


def render_adapt_steps_table(results: dict) -> str:
    ds = results["dataset_ids"]
    headers = ["Adapt step"] + ds + ["Avg. Score"]
    body = []
    for step in results["candidate_steps"]:
        med = results["medians"][str(step)]
        body.append(
            [f"step {step}"]
            + [f"{med['per_dataset'][d]:.4f}" for d in ds]
            + [f"{med['mean']:.4f}"]
        )
    return _fmt_table(headers, body)
