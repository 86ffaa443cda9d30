import numpy as np
import pytest

from promptner.model import ModelConfig, OptimizerConfig, Seq2Seq, build_vocab, make_batch
from promptner.schema import main_registry, synth_registry


@pytest.fixture(scope="session")
def registry():
    return synth_registry()


@pytest.fixture(scope="session")
def trained(tmp_path_factory):
    """A small model trained on tiny synthetic corpora, plus its checkpoint
    path. Shared by the service/CLI/pipeline contract tests."""
    from promptner.model import save_checkpoint
    from promptner.prompting import PromptStrategy
    from promptner.synth import default_corpora
    from promptner.training import EvalSettings, train_ner

    reg = synth_registry()
    corpora = default_corpora(
        {"synth_news": 90, "synth_shop": 90, "synth_work": 48}, seed=3
    )
    mcfg = ModelConfig(
        d_model=64, n_heads=4, n_encoder_layers=2, n_decoder_layers=2,
        d_ff=256, dropout=0.0, max_source_len=96, max_target_len=80,
    )
    ocfg = OptimizerConfig(peak_lr=3e-3, warmup_steps=40, total_steps=400, batch_size=16)
    outcome = train_ner(
        corpora, reg, mcfg, ocfg, PromptStrategy("random_plus_exact"),
        seed=11, steps=400, eval_every=200,
        eval_settings=EvalSettings(beam_width=1, max_len=76),
    )
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    save_checkpoint(outcome.model, path, global_step=outcome.selected_step)
    return {"model": outcome.model, "registry": reg, "path": path,
            "corpora": corpora, "outcome": outcome}


@pytest.fixture(scope="session")
def big_registry():
    return main_registry()


@pytest.fixture(scope="session")
def tiny_vocab():
    return build_vocab(
        ["Tom will go to the zoo tomorrow. Anna visited Berlin today.", "(),:", "NULL",
         "timelocationname"]
    )


def small_model(vocab, dtype=np.float32, seed=1, **overrides):
    cfg = dict(
        d_model=16,
        n_heads=2,
        n_encoder_layers=2,
        n_decoder_layers=2,
        d_ff=32,
        dropout=0.0,
        max_source_len=64,
        max_target_len=48,
    )
    cfg.update(overrides)
    return Seq2Seq(ModelConfig(**cfg), vocab, seed=seed, dtype=dtype)


def small_batch(vocab):
    pairs = [
        ("<entity>time<entity>location<text>Tom will go to the zoo tomorrow.",
         "((time):(tomorrow),(location):(zoo))"),
        ("<entity>name<text>Anna visited Berlin today.", "((name):(Anna))"),
    ]
    return make_batch(vocab, pairs, 64, 48)
