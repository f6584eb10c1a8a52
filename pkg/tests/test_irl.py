import numpy as np
import pytest

from tripletplan.core import RngStream
from tripletplan.dataio import RunRecord
from tripletplan.irl import IrlConfig, NegativeSampler, ranking_auc, train_reward
from tripletplan.synthenv import generate_corpus

IRL_CFG = IrlConfig(context_window=8, embed_dim=128, hidden=48, epochs=20)


class TestNegativeSampler:
    def test_hamming_distance_always_positive(self, rng):
        sampler = NegativeSampler((0.5, 0.3, 0.2), RngStream(0))
        for _ in range(500):
            expert = (rng.random(30) < 0.1).astype(float)
            neg = sampler.sample(expert)
            assert np.abs(neg - expert).sum() >= 1

    def test_negative_never_equals_positive(self, rng):
        sampler = NegativeSampler((0.5, 0.3, 0.2), RngStream(1))
        for _ in range(500):
            expert = (rng.random(30) < 0.1).astype(float)
            assert not (sampler.sample(expert) == expert).all()

    def test_flip_count_distribution_within_2pct(self):
        sampler = NegativeSampler((0.5, 0.3, 0.2), RngStream(2))
        expert = np.zeros(50)
        counts = np.zeros(4)
        n = 10_000
        for _ in range(n):
            neg = sampler.sample(expert)
            counts[int(neg.sum())] += 1
        freqs = counts[1:] / n
        np.testing.assert_allclose(freqs, [0.5, 0.3, 0.2], atol=0.02)

    def test_rejects_bad_distribution(self):
        with pytest.raises(ValueError):
            IrlConfig(flip_probs=(0.5, 0.5, 0.5))


class TestRankingAuc:
    def test_perfect_separation(self):
        assert ranking_auc([3.0, 2.5], [1.0, 0.5, 0.2]) == 1.0

    def test_reversed_separation(self):
        assert ranking_auc([0.1], [1.0, 2.0]) == 0.0

    def test_matches_brute_force_pairwise(self, rng):
        for _ in range(50):
            pos = rng.choice([0.1, 0.4, 0.7, 0.9], size=rng.integers(1, 10))
            neg = rng.choice([0.1, 0.4, 0.7, 0.9], size=rng.integers(1, 10))
            wins = sum(
                1.0 if p > n else (0.5 if p == n else 0.0) for p in pos for n in neg
            )
            brute = wins / (len(pos) * len(neg))
            assert ranking_auc(pos, neg) == pytest.approx(brute, abs=1e-12)

    def test_invariant_under_affine_transform(self, rng):
        pos = rng.normal(size=20)
        neg = rng.normal(size=25)
        base = ranking_auc(pos, neg)
        assert ranking_auc(3 * pos + 7, 3 * neg + 7) == pytest.approx(base, abs=1e-12)
        assert ranking_auc(np.exp(pos), np.exp(neg)) == pytest.approx(base, abs=1e-12)

    def test_requires_both_sides(self):
        with pytest.raises(ValueError):
            ranking_auc([], [1.0])


class TestTrainReward:
    def test_heldout_auc_high_on_synthetic(self, vocab, workflow):
        train_eps = generate_corpus(workflow, vocab, 14, 120, seed=61)
        val_eps = generate_corpus(workflow, vocab, 3, 120, seed=61, start_index=14)
        rec = RunRecord("irl", "h", 0)
        net, auc = train_reward(train_eps, val_eps, vocab, IRL_CFG, seed=0, record=rec)
        # the strict >= 0.9 criterion applies to the full desk preset and is
        # asserted in the acceptance suite; this fixture is a quarter of it
        assert auc >= 0.8
        assert rec.last("irl/heldout_auc") == auc

    def test_deterministic(self, vocab, workflow):
        train_eps = generate_corpus(workflow, vocab, 2, 60, seed=62)
        val_eps = generate_corpus(workflow, vocab, 1, 60, seed=62, start_index=2)
        cfg = IrlConfig(context_window=6, embed_dim=128, hidden=16, epochs=1)
        _, auc1 = train_reward(train_eps, val_eps, vocab, cfg, seed=3)
        _, auc2 = train_reward(train_eps, val_eps, vocab, cfg, seed=3)
        assert auc1 == auc2
