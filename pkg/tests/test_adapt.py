import itertools

import numpy as np
import pytest

from promptner.adapt import (
    AdaptTrace,
    build_adapt_stream,
    prefix_split,
    select_adapt_checkpoint,
    split_at,
)
from promptner.rng import rng_stream


class TestPrefixSplit:
    def test_reconstruction_property(self):
        rng = rng_stream(0, "t")
        for text in ("The capital of China is Beijing.", "ab", "希望这个句子够长"):
            for _ in range(20):
                ex = prefix_split(text, rng)
                assert ex.source + ex.target == text
                assert ex.source and ex.target

    def test_stated_split_point(self):
        ex = split_at("The capital of China is Beijing.", 21)
        assert (ex.source, ex.target) == ("The capital of China ", "is Beijing.")

    def test_length_two_forced(self):
        ex = prefix_split("ab", rng_stream(1))
        assert (ex.source, ex.target) == ("a", "b")

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            prefix_split("x", rng_stream(1))

    def test_split_positions_uniform(self):
        # chi-square against uniform over {1..9} for a 10-char text
        text = "0123456789"
        rng = rng_stream(7, "uniform")
        counts = np.zeros(10)
        n = 9000
        for _ in range(n):
            counts[len(prefix_split(text, rng).source)] += 1
        expected = n / 9
        chi2 = ((counts[1:10] - expected) ** 2 / expected).sum()
        assert chi2 < 26.1  # chi2_{0.999, df=8}


class TestAdaptStream:
    def test_single_corpus_batch(self):
        texts = {"a": ["hello there", "more text", "and more", "again ok", "final!!"]}
        stream = build_adapt_stream(texts, batch_size=3, rng_seed=0)
        batch = next(stream)
        assert len(batch) == 3
        assert all(ex.dataset_id == "a" for ex in batch)
        assert all(ex.source + ex.target in texts["a"] for ex in batch)

    def test_deterministic(self):
        texts = {c: [f"{c} text number {i}" for i in range(6)] for c in "abcdefgh"}
        a = list(itertools.islice(build_adapt_stream(texts, 4, rng_seed=5), 10))
        b = list(itertools.islice(build_adapt_stream(texts, 4, rng_seed=5), 10))
        assert a == b

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            build_adapt_stream({"a": ["ab"]}, 0, rng_seed=0)

    def test_empty_corpora(self):
        with pytest.raises(ValueError):
            build_adapt_stream({}, 2, rng_seed=0)
        with pytest.raises(ValueError):
            build_adapt_stream({"a": []}, 2, rng_seed=0)


class TestSelectAdaptCheckpoint:
    def test_lowest_mean_wins(self):
        trace = AdaptTrace(
            steps=(2000, 4000, 6000, 8000),
            dataset_ids=("a", "b"),
            losses=np.array([[1.3, 1.2], [1.1, 1.15], [1.0, 1.0], [1.2, 1.1]]),
        )
        assert select_adapt_checkpoint(trace) == 6000

    def test_singleton(self):
        trace = AdaptTrace(steps=(100,), dataset_ids=("a",), losses=np.array([[2.0]]))
        assert select_adapt_checkpoint(trace) == 100

    def test_tie_breaks_earlier_exhaustive(self):
        # exhaustive over all 2-step matrices on a small loss grid
        grid = [0.5, 1.0, 1.5]
        for a1 in grid:
            for a2 in grid:
                for b1 in grid:
                    for b2 in grid:
                        trace = AdaptTrace(
                            steps=(10, 20),
                            dataset_ids=("x", "y"),
                            losses=np.array([[a1, a2], [b1, b2]]),
                        )
                        m1, m2 = (a1 + a2) / 2, (b1 + b2) / 2
                        want = 10 if m1 <= m2 else 20
                        assert select_adapt_checkpoint(trace) == want

    def test_permutation_invariant_in_dataset_axis(self):
        rng = rng_stream(3)
        losses = rng.random((5, 4))
        trace = AdaptTrace((1, 2, 3, 4, 5), ("a", "b", "c", "d"), losses)
        perm = [2, 0, 3, 1]
        shuffled = AdaptTrace(
            (1, 2, 3, 4, 5),
            tuple("abcd"[i] for i in perm),
            losses[:, perm],
        )
        assert select_adapt_checkpoint(trace) == select_adapt_checkpoint(shuffled)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            select_adapt_checkpoint(
                AdaptTrace(steps=(), dataset_ids=(), losses=np.zeros((0, 0)))
            )

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            AdaptTrace(steps=(1,), dataset_ids=("a",), losses=np.array([[np.nan]]))

    def test_csv_roundtrip(self, tmp_path):
        trace = AdaptTrace(
            steps=(10, 20), dataset_ids=("a", "b"),
            losses=np.array([[1.25, 0.5], [0.75, 2.0]]),
        )
        path = tmp_path / "trace.csv"
        trace.write_csv(path)
        again = AdaptTrace.read_csv(path)
        assert again.steps == trace.steps
        assert again.dataset_ids == trace.dataset_ids
        assert np.array_equal(again.losses, trace.losses)
