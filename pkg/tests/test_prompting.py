import numpy as np
import pytest

from promptner.codec import CodecError, NULL_PAYLOAD
from promptner.prompting import (
    PromptStrategy,
    make_inference_prompts,
    make_training_examples,
)
from promptner.rng import rng_stream
from promptner.schema import synth_registry
from promptner.synth import default_grammars, synth_generate

REG = synth_registry()


def _sentence(grammar_idx=0, seed=5):
    g = default_grammars()[grammar_idx]
    return synth_generate(g, 1, seed=seed)[0]


def _spec(sentence):
    return REG.dataset(sentence.dataset_id)


class TestDatasetDependent:
    def test_prompts_always_full_list(self):
        strategy = PromptStrategy("dataset_dependent")
        for seed in range(5):
            s = _sentence(seed=seed)
            [ex] = make_training_examples(s, _spec(s), strategy, rng_stream(seed), REG)
            assert ex.prompts == _spec(s).entity_ids

    def test_one_null_pair_per_absent_type(self):
        strategy = PromptStrategy("dataset_dependent")
        s = _sentence(seed=3)
        [ex] = make_training_examples(s, _spec(s), strategy, rng_stream(0), REG)
        present = {m.type_id for m in s.mentions}
        absent = [t for t in _spec(s).entity_ids if t not in present]
        for t in absent:
            name = REG.entity(t).prompt_name
            assert ex.target.count(f"({name}):({NULL_PAYLOAD})") == 1


class TestRandom:
    def test_deterministic_per_seed(self):
        strategy = PromptStrategy("random")
        s = _sentence()
        a = make_training_examples(s, _spec(s), strategy, rng_stream(11, "x"), REG)
        b = make_training_examples(s, _spec(s), strategy, rng_stream(11, "x"), REG)
        assert [e.prompts for e in a] == [e.prompts for e in b]
        assert [e.source for e in a] == [e.source for e in b]

    def test_prompts_duplicate_free_subset(self):
        strategy = PromptStrategy("random")
        all_ids = {et.id for et in REG.entity_types}
        for seed in range(50):
            s = _sentence(seed=seed)
            [ex] = make_training_examples(s, _spec(s), strategy, rng_stream(seed, "r"), REG)
            assert len(set(ex.prompts)) == len(ex.prompts)
            assert set(ex.prompts) <= all_ids

    def test_every_entity_eventually_sampled(self):
        # seeded statistical check: full coverage over many draws
        strategy = PromptStrategy("random")
        s = _sentence()
        seen = set()
        for i in range(2000):
            [ex] = make_training_examples(s, _spec(s), strategy, rng_stream(0, "cov", i), REG)
            seen.update(ex.prompts)
        assert seen == {et.id for et in REG.entity_types}

    def test_full_37_entity_coverage_over_10k_draws(self):
        # with the full registry and k_max=37, 10,000 draws must hit every id
        from promptner.corpus import AnnotatedSentence
        from promptner.schema import main_registry

        big = main_registry()
        s = AnnotatedSentence("北京欢迎你", (), "msra")
        spec = big.dataset("msra")
        strategy = PromptStrategy("random", k_max=37)
        seen = set()
        for i in range(10_000):
            [ex] = make_training_examples(s, spec, strategy, rng_stream(1, "cov37", i), big)
            seen.update(ex.prompts)
            if len(seen) == 37 and i > 100:
                break
        assert seen == {et.id for et in big.entity_types}

    def test_k_max_respected(self):
        strategy = PromptStrategy("random", k_max=2)
        for i in range(30):
            s = _sentence(seed=i)
            [ex] = make_training_examples(s, _spec(s), strategy, rng_stream(1, i), REG)
            assert 1 <= len(ex.prompts) <= 2

    def test_k_max_out_of_range(self):
        s = _sentence()
        strategy = PromptStrategy("random", k_max=99)
        with pytest.raises(ValueError):
            make_training_examples(s, _spec(s), strategy, rng_stream(0), REG)


class TestRandomPlusExact:
    def test_two_examples_and_exact_has_no_null(self):
        strategy = PromptStrategy("random_plus_exact")
        s = _sentence(seed=8)
        assert s.mentions
        examples = make_training_examples(s, _spec(s), strategy, rng_stream(2), REG)
        assert len(examples) == 2
        exact = examples[1]
        assert set(exact.prompts) == {m.type_id for m in s.mentions}
        assert NULL_PAYLOAD not in exact.target

    def test_zero_mention_sentence_skips_exact(self):
        from promptner.corpus import AnnotatedSentence

        s = AnnotatedSentence("nothing going on here.", (), "synth_news")
        strategy = PromptStrategy("random_plus_exact")
        examples = make_training_examples(s, _spec(s), strategy, rng_stream(4), REG)
        assert len(examples) == 1  # only the random sibling


class TestInferencePrompts:
    def test_dataset_mode(self):
        assert make_inference_prompts(REG, dataset_id="synth_news") == [
            "name", "location", "time", "company",
        ]

    def test_explicit_mode_verbatim(self):
        assert make_inference_prompts(REG, explicit=["time"]) == ["time"]
        assert make_inference_prompts(REG, explicit=["location", "time"]) == [
            "location", "time",
        ]

    def test_explicit_empty_rejected(self):
        with pytest.raises(CodecError):
            make_inference_prompts(REG, explicit=[])

    def test_unknown_explicit_rejected(self):
        with pytest.raises(Exception, match="unknown entity id"):
            make_inference_prompts(REG, explicit=["martian"])

    def test_exactly_one_mode(self):
        with pytest.raises(CodecError):
            make_inference_prompts(REG)
        with pytest.raises(CodecError):
            make_inference_prompts(REG, dataset_id="synth_news", explicit=["time"])


def test_wrong_dataset_rejected():
    s = _sentence()
    other = REG.dataset("synth_shop")
    with pytest.raises(ValueError, match="belongs to"):
        make_training_examples(s, other, PromptStrategy("dataset_dependent"),
                               rng_stream(0), REG)
