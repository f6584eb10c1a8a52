import time

import numpy as np
import pytest

from tripletplan.core import RngStream, encode_labels, project_labels
from tripletplan.evaluation import (
    ConstantScoreAdapter,
    EmptyDumpError,
    EvalReport,
    HorizonSlice,
    PlanningAdapter,
    UndefinedAPError,
    average_precision,
    bootstrap_ci,
    build_report,
    class_prevalence,
    horizon_sweep,
    load_dump,
    mean_ap,
    mean_ap_arrays,
    save_dump,
)
from tripletplan.synthenv import generate_corpus


def brute_force_ap(scores, labels):
    """O(n^2) oracle: rank each positive by pairwise comparisons under the
    documented tie rule (descending score, ascending original index)."""
    n = len(scores)
    ap_sum = 0.0
    n_pos = 0
    for i in range(n):
        if labels[i] <= 0:
            continue
        rank = 1
        hits = 1
        for j in range(n):
            if j == i:
                continue
            before = scores[j] > scores[i] or (scores[j] == scores[i] and j < i)
            if before:
                rank += 1
                if labels[j] > 0:
                    hits += 1
        ap_sum += hits / rank
        n_pos += 1
    return ap_sum / n_pos


class TestAveragePrecision:
    def test_hand_case(self):
        ap = average_precision([0.9, 0.8, 0.7], [1, 0, 1])
        assert ap == pytest.approx((1.0 + 2.0 / 3.0) / 2.0)

    def test_perfect_ranking(self, rng):
        for n_pos in (1, 3, 7):
            scores = np.concatenate([rng.uniform(0.6, 1.0, n_pos), rng.uniform(0.0, 0.4, 10)])
            labels = np.concatenate([np.ones(n_pos), np.zeros(10)])
            assert average_precision(scores, labels) == 1.0

    def test_no_positives_signals_undefined(self):
        with pytest.raises(UndefinedAPError):
            average_precision([0.3, 0.2], [0, 0])

    def test_matches_brute_force_oracle_1000_instances(self, rng):
        t0 = time.time()
        for _ in range(1000):
            n = int(rng.integers(2, 40))
            scores = rng.choice([0.1, 0.25, 0.5, 0.9], size=n)  # force ties
            labels = (rng.random(n) < 0.4).astype(float)
            if labels.sum() == 0:
                labels[int(rng.integers(0, n))] = 1.0
            got = average_precision(scores, labels)
            want = brute_force_ap(scores, labels)
            assert got == pytest.approx(want, abs=1e-12)
        assert time.time() - t0 < 30.0

    def test_tie_break_by_original_index(self):
        # constant scores: ranking equals index order
        labels = [0, 1, 1, 0]
        got = average_precision([0.5] * 4, labels)
        want = brute_force_ap([0.5] * 4, labels)
        assert got == pytest.approx(want, abs=1e-15)
        assert got == pytest.approx((1 / 2 + 2 / 3) / 2)

    def test_invariant_under_monotone_transform(self, rng):
        scores = rng.random(30)
        labels = (rng.random(30) < 0.3).astype(float)
        if labels.sum() == 0:
            labels[0] = 1
        base = average_precision(scores, labels)
        for f in (lambda s: 2 * s + 1, lambda s: s ** 3, lambda s: np.exp(s)):
            assert average_precision(f(scores), labels) == pytest.approx(base, abs=1e-12)


class TestMeanAp:
    def test_perfect_predictor_scores_one(self, vocab, rng):
        labels = (rng.random((50, 100)) < 0.03).astype(float)
        assert mean_ap_arrays(labels.copy(), labels, vocab, "IVT") == 1.0

    def test_constant_scores_follow_tie_rule(self, vocab, rng):
        labels = (rng.random((30, 100)) < 0.05).astype(float)
        scores = np.full((30, 100), 0.5)
        got = mean_ap_arrays(scores, labels, vocab, "IVT")
        aps = [
            brute_force_ap(scores[:, j], labels[:, j])
            for j in range(100)
            if labels[:, j].sum() > 0
        ]
        assert got == pytest.approx(np.mean(aps), abs=1e-12)

    def test_component_label_projection_any_rule(self, vocab, rng):
        labels = (rng.random((20, 100)) < 0.04).astype(float)
        proj = project_labels(labels, vocab, "I")
        groups = vocab.component_groups("I")
        for row in range(20):
            for inst in range(vocab.num_instruments):
                members = labels[row][groups == inst]
                assert proj[row, inst] == (1.0 if members.any() else 0.0)

    def test_empty_dump_rejected(self, vocab):
        with pytest.raises(EmptyDumpError):
            mean_ap_arrays(np.zeros((0, 100)), np.zeros((0, 100)), vocab, "IVT")

    def test_prevalence_beats_uniform_random_in_expectation(self, vocab, workflow):
        # seeded trial, sign test over 20 repeats
        wins = 0
        for k in range(20):
            eps = generate_corpus(workflow, vocab, 3, 60, seed=100 + k)
            labels = np.concatenate([encode_labels(ep.labels, vocab) for ep in eps])
            prev = class_prevalence(eps, vocab)
            prev_scores = np.tile(prev, (labels.shape[0], 1))
            rand_scores = RngStream(500 + k).rng.random(labels.shape)
            m_prev = mean_ap_arrays(prev_scores, labels, vocab, "IVT")
            m_rand = mean_ap_arrays(rand_scores, labels, vocab, "IVT")
            wins += m_prev >= m_rand
        assert wins >= 14  # one-sided sign test, p < 0.06 under fair coin


class _TruthAdapter(PlanningAdapter):
    """Scores every horizon with the ground-truth labels (for wiring tests)."""

    def __init__(self, vocab):
        self.vocab = vocab

    def plan(self, episode, max_h):
        truth = encode_labels(episode.labels, self.vocab)
        T, C = truth.shape
        out = np.zeros((T, max_h, C))
        for h in range(1, min(max_h, T - 1) + 1):
            out[: T - h, h - 1, :] = truth[h:]
        return out

    def recognition(self, episode):
        return encode_labels(episode.labels, self.vocab)


class TestHorizonSweep:
    def test_row_counts_match_counting_oracle(self, vocab, workflow):
        eps = generate_corpus(workflow, vocab, 3, 37, seed=8)
        dump = horizon_sweep(_TruthAdapter(vocab), eps, vocab, horizons=[1, 5, 10, 50])
        for h in (1, 5, 10):
            expected = sum(max(0, len(ep) - h) for ep in eps)
            assert dump[h].n_rows == expected
        assert 50 not in dump.slices  # longer than every episode
        assert dump["current"].n_rows == sum(len(ep) for ep in eps)

    def test_perfect_adapter_scores_one_everywhere(self, vocab, workflow):
        eps = generate_corpus(workflow, vocab, 2, 30, seed=9)
        dump = horizon_sweep(_TruthAdapter(vocab), eps, vocab, horizons=[1, 3])
        for h in (1, 3, "current"):
            assert mean_ap(dump, vocab, "IVT", h) == 1.0

    def test_h1_labels_are_next_frame(self, vocab, workflow):
        eps = generate_corpus(workflow, vocab, 1, 20, seed=10)
        dump = horizon_sweep(_TruthAdapter(vocab), eps, vocab, horizons=[1])
        truth = encode_labels(eps[0].labels, vocab)
        np.testing.assert_array_equal(dump[1].labels, truth[1:])

    def test_recognition_optional(self, vocab, workflow):
        eps = generate_corpus(workflow, vocab, 1, 20, seed=10)
        adapter = ConstantScoreAdapter(np.linspace(0, 1, vocab.num_classes), with_recognition=False)
        dump = horizon_sweep(adapter, eps, vocab, horizons=[1])
        assert "current" not in dump


class TestBootstrap:
    def _slice(self, vocab, rng, n_videos=6, frames=40):
        labels = (rng.random((n_videos * frames, 100)) < 0.05).astype(float)
        scores = labels * rng.uniform(0.5, 1.0, labels.shape) + rng.uniform(0, 0.4, labels.shape)
        vid = np.repeat(np.arange(n_videos), frames)
        return HorizonSlice(scores, labels, vid, [f"v{i}" for i in range(n_videos)])

    def test_reproducible_bounds(self, vocab, rng):
        sl = self._slice(vocab, rng)
        a = bootstrap_ci(sl, "IVT", vocab, n_resamples=100, seed=4)
        b = bootstrap_ci(sl, "IVT", vocab, n_resamples=100, seed=4)
        assert a == b

    def test_brackets_point_estimate(self, vocab, rng):
        sl = self._slice(vocab, rng)
        point = mean_ap_arrays(sl.scores, sl.labels, vocab, "IVT")
        lo, hi = bootstrap_ci(sl, "IVT", vocab, n_resamples=200, seed=1)
        assert lo <= point <= hi

    def test_identical_videos_zero_width(self, vocab, rng):
        # 4 copies of one video: every resample sees the same pooled rows
        labels = (rng.random((25, 100)) < 0.06).astype(float)
        scores = rng.random((25, 100))
        L = np.tile(labels, (4, 1))
        S = np.tile(scores, (4, 1))
        vid = np.repeat(np.arange(4), 25)
        sl = HorizonSlice(S, L, vid, list("abcd"))
        lo, hi = bootstrap_ci(sl, "IVT", vocab, n_resamples=50, seed=0)
        assert lo == pytest.approx(hi, abs=1e-12)

    def test_single_video_degenerate_flagged(self, vocab, rng):
        labels = (rng.random((30, 100)) < 0.05).astype(float)
        sl = HorizonSlice(rng.random((30, 100)), labels, np.zeros(30, dtype=np.int64), ["only"])
        with pytest.warns(UserWarning, match="single video"):
            lo, hi = bootstrap_ci(sl, "IVT", vocab, n_resamples=20, seed=0)
        assert lo == hi

    def test_fast_path_matches_materialized_resampling(self, vocab, rng):
        sl = self._slice(vocab, rng, n_videos=4, frames=15)
        fast = bootstrap_ci(sl, "IVT", vocab, n_resamples=64, seed=3)
        slow = bootstrap_ci(
            sl,
            lambda s, l: mean_ap_arrays(s, l, vocab, "IVT"),
            vocab,
            n_resamples=64,
            seed=3,
        )
        assert fast[0] == pytest.approx(slow[0], abs=1e-12)
        assert fast[1] == pytest.approx(slow[1], abs=1e-12)

    def test_coverage_on_known_mean(self):
        # mean metric over per-video normal draws; CI should cover the true
        # mean (0.5) in [90%, 99%] of 200 trials at the 95% level
        covered = 0
        trials = 200
        for k in range(trials):
            rng = np.random.default_rng(1000 + k)
            n_videos, frames = 12, 20
            rows = rng.normal(0.5, 0.2, size=(n_videos * frames, 1))
            sl = HorizonSlice(
                rows,
                np.ones_like(rows),
                np.repeat(np.arange(n_videos), frames),
                [f"v{i}" for i in range(n_videos)],
            )
            lo, hi = bootstrap_ci(sl, lambda s, l: float(s.mean()), n_resamples=300, seed=k)
            covered += lo <= 0.5 <= hi
        assert 0.90 * trials <= covered <= 0.99 * trials


class TestEvalReport:
    def test_round_trip(self, tmp_path):
        rep = EvalReport()
        rep.set("IVT", 1, 0.42, 0.40, 0.44)
        rep.set("I", "current", 0.9)
        rep.save(tmp_path / "r.json")
        back = EvalReport.load(tmp_path / "r.json")
        assert back.get("IVT", 1) == (0.42, 0.40, 0.44)
        assert back.get("I", "current") == (0.9, None, None)

    def test_ci_must_bracket(self):
        rep = EvalReport()
        with pytest.raises(ValueError):
            rep.set("IVT", 1, 0.5, 0.6, 0.7)

    def test_render_has_all_components(self, vocab, workflow):
        eps = generate_corpus(workflow, vocab, 2, 25, seed=3)
        dump = horizon_sweep(_TruthAdapter(vocab), eps, vocab, horizons=[1, 2])
        rep = build_report(dump, vocab)
        text = rep.render()
        for comp in ("I", "V", "T", "IV", "IT", "IVT"):
            assert comp in text


class TestDumpPersistence:
    def test_save_load_round_trip(self, vocab, workflow, tmp_path):
        eps = generate_corpus(workflow, vocab, 2, 20, seed=12)
        dump = horizon_sweep(_TruthAdapter(vocab), eps, vocab, horizons=[1, 3])
        save_dump(dump, tmp_path / "dump")
        back = load_dump(tmp_path / "dump", vocab)
        assert set(back.slices) == set(dump.slices)
        for h in dump.slices:
            np.testing.assert_array_equal(back[h].labels, dump[h].labels)
            np.testing.assert_allclose(back[h].scores, dump[h].scores, atol=1e-7)
            # float32 storage: mAP identical within rounding
            a = mean_ap_arrays(back[h].scores, back[h].labels, vocab, "IVT")
            b = mean_ap_arrays(dump[h].scores, dump[h].labels, vocab, "IVT")
            assert a == pytest.approx(b, abs=1e-6)
