import json
from pathlib import Path

import numpy as np
import pytest

from promptner.harness import (
    ExperimentPlan,
    render_adapt_steps_table,
    render_joint_table,
    render_pilot_table,
    render_prompt_table,
    run_adapt_step_ablation,
    run_joint_vs_single,
    run_pilot,
    run_prompt_ablation,
)
from promptner.model import ModelConfig, OptimizerConfig
from promptner.prompting import PromptStrategy
from promptner.schema import synth_registry
from promptner.synth import default_corpora
from promptner.training import EvalSettings, train_ner, train_prefix_lm

REG = synth_registry()

TINY_MODEL = dict(d_model=16, n_heads=2, n_encoder_layers=1, n_decoder_layers=1,
                  d_ff=32, dropout=0.0, max_source_len=96, max_target_len=80)
TINY_OPT = dict(peak_lr=1e-3, warmup_steps=2, total_steps=8, batch_size=4)


def _corpora():
    return default_corpora({"synth_news": 24, "synth_shop": 24, "synth_work": 20},
                           seed=5)


def _plan(**kw):
    base = dict(
        id="t",
        corpora={"kind": "synthetic",
                 "sizes": {"synth_news": 24, "synth_shop": 24, "synth_work": 20},
                 "seed": 5},
        seeds=(11, 23),
        model=TINY_MODEL,
        optimizer={"peak_lr": 1e-3, "warmup_steps": 2, "batch_size": 4},
        steps=6,
        eval_every=3,
        eval_beam=1,
        eval_max_len=76,
    )
    base.update(kw)
    return ExperimentPlan(**base)


class TestTrainNer:
    def test_same_seed_same_streams_and_losses(self):
        kw = dict(
            corpora=_corpora(), registry=REG,
            model_cfg=ModelConfig(**TINY_MODEL),
            opt_cfg=OptimizerConfig(**TINY_OPT),
            strategy=PromptStrategy("dataset_dependent"),
            seed=11, steps=8, eval_every=4,
            eval_settings=EvalSettings(beam_width=1, max_len=76),
        )
        a = train_ner(**kw)
        b = train_ner(**kw)
        assert a.stream_hash == b.stream_hash
        assert a.loss_trace == b.loss_trace
        c = train_ner(**{**kw, "seed": 12})
        assert c.stream_hash != a.stream_hash

    def test_trace_and_selection(self):
        out = train_ner(
            _corpora(), REG, ModelConfig(**TINY_MODEL), OptimizerConfig(**TINY_OPT),
            PromptStrategy("dataset_dependent"), seed=1, steps=8, eval_every=4,
            eval_settings=EvalSettings(beam_width=1, max_len=76),
        )
        assert out.trace.steps == (4, 8)
        assert out.selected_step in (4, 8)
        assert set(out.reports) == {"synth_news", "synth_shop", "synth_work"}

    def test_null_fraction_by_strategy(self):
        corpora = _corpora()
        common = dict(
            corpora=corpora, registry=REG, model_cfg=ModelConfig(**TINY_MODEL),
            opt_cfg=OptimizerConfig(**TINY_OPT), seed=2, steps=2, eval_every=2,
            eval_settings=EvalSettings(beam_width=1, max_len=76),
        )
        ds = train_ner(strategy=PromptStrategy("dataset_dependent"), **common)
        rnd = train_ner(strategy=PromptStrategy("random"), **common)
        assert ds.all_null_fraction == 0.0  # every sentence has gold mentions
        assert rnd.all_null_fraction > 0.0


class TestPrefixLM:
    def test_adapt_outcome_shape(self):
        out = train_prefix_lm(
            _corpora(), REG, ModelConfig(**TINY_MODEL),
            OptimizerConfig(**TINY_OPT), seed=3, steps=8, eval_every=4,
        )
        assert out.trace.steps == (4, 8)
        assert out.selected_step in (4, 8)
        assert np.all(np.isfinite(out.trace.losses))
        assert set(out.snapshots) == {4, 8}

    def test_snapshot_steps_honored(self):
        out = train_prefix_lm(
            _corpora(), REG, ModelConfig(**TINY_MODEL),
            OptimizerConfig(**TINY_OPT), seed=3, steps=8, eval_every=8,
            snapshot_steps=(2, 5),
        )
        assert {2, 5, 8} <= set(out.snapshots)


class TestHarness:
    def test_pilot_artifacts_and_rerender(self, tmp_path):
        plan = _plan(finetune_steps=4, adapt_steps=4, adapt_eval_every=2)
        results = run_pilot(plan, tmp_path)
        table = (tmp_path / "table.txt").read_text(encoding="utf-8")
        persisted = json.loads((tmp_path / "results.json").read_text(encoding="utf-8"))
        assert render_pilot_table(persisted) == table
        hashes = {r["stream_hash"] for r in results["per_seed"]}
        assert len(hashes) == len(plan.seeds)  # one stream per seed, arms equal
        assert (tmp_path / "adapt_trace_seed11.csv").exists()

    def test_pilot_zero_adapt_is_control(self, tmp_path):
        plan = _plan(finetune_steps=4, adapt_steps=0, seeds=(11,))
        results = run_pilot(plan, tmp_path)
        med = results["medians"]
        assert med["scratch_mean_f1"] == med["adapted_mean_f1"]

    def test_joint_vs_single_artifacts(self, tmp_path):
        plan = _plan(seeds=(11,), steps=4, eval_every=2)
        results = run_joint_vs_single(plan, tmp_path)
        table = (tmp_path / "table.txt").read_text(encoding="utf-8")
        assert "# models" in table and "Avg. Score" in table
        persisted = json.loads((tmp_path / "results.json").read_text(encoding="utf-8"))
        assert render_joint_table(persisted) == table
        assert persisted["n_models_single"] == 3
        assert persisted["smallest_dataset"] == "synth_work"
        fine = (tmp_path / "fine_grained.txt").read_text(encoding="utf-8")
        assert "company" in fine  # news-only type appears in the news block
        assert results["medians"]["joint_mean"] >= 0.0

    def test_joint_vs_single_needs_two(self, tmp_path):
        plan = _plan(corpora={"kind": "synthetic", "sizes": {"synth_news": 24},
                              "seed": 5})
        with pytest.raises(ValueError, match="at least two"):
            run_joint_vs_single(plan, tmp_path)

    def test_prompt_ablation_three_rows(self, tmp_path):
        plan = _plan(seeds=(11,), steps=4, eval_every=2)
        results = run_prompt_ablation(plan, tmp_path)
        table = (tmp_path / "table.txt").read_text(encoding="utf-8")
        for label in ("random prompt", "exact match", "dataset-dependent"):
            assert label in table
        persisted = json.loads((tmp_path / "results.json").read_text(encoding="utf-8"))
        assert render_prompt_table(persisted) == table
        meds = results["medians"]
        assert meds["random"]["all_null_fraction"] > meds["dataset"]["all_null_fraction"]

    def test_adapt_step_ablation(self, tmp_path):
        plan = _plan(seeds=(11,), steps=4, eval_every=2, adapt_eval_every=4)
        results = run_adapt_step_ablation(plan, (2, 4), tmp_path)
        table = (tmp_path / "table.txt").read_text(encoding="utf-8")
        assert "step 2" in table and "step 4" in table
        persisted = json.loads((tmp_path / "results.json").read_text(encoding="utf-8"))
        assert render_adapt_steps_table(persisted) == table

    def test_adapt_step_ablation_needs_two_candidates(self, tmp_path):
        plan = _plan()
        with pytest.raises(ValueError, match="at least two"):
            run_adapt_step_ablation(plan, (4,), tmp_path)

    def test_plan_roundtrip(self, tmp_path):
        plan = _plan(finetune_steps=4)
        path = tmp_path / "plan.json"
        path.write_text(json.dumps(plan.to_dict()), encoding="utf-8")
        again = ExperimentPlan.from_json(path)
        assert again == plan

    def test_empty_seeds_rejected(self):
        with pytest.raises(ValueError, match="seed"):
            _plan(seeds=())
