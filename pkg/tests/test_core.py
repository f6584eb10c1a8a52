import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripletplan.core import (
    COMPONENTS,
    FrameLabel,
    RngStream,
    VocabError,
    build_vocab,
    decode_multihot,
    default_vocab,
    encode_multihot,
    project_components,
    project_labels,
    vocab_from_json,
    vocab_to_json,
)


class TestVocab:
    def test_default_is_100_classes(self, vocab):
        assert vocab.num_classes == 100
        assert vocab.num_instruments == 6
        assert vocab.num_verbs == 10
        assert vocab.num_targets == 15
        assert vocab.phase_count == 7

    def test_triplets_in_range_and_unique(self, vocab):
        seen = set()
        for (i, v, t) in vocab.valid_triplets:
            assert 0 <= i < vocab.num_instruments
            assert 0 <= v < vocab.num_verbs
            assert 0 <= t < vocab.num_targets
            seen.add((i, v, t))
        assert len(seen) == vocab.num_classes

    def test_class_id_round_trip(self, vocab):
        for cid in range(vocab.num_classes):
            trip = vocab.triplet(cid)
            assert vocab.class_of(trip.instrument_id, trip.verb_id, trip.target_id) == cid

    def test_every_component_value_covered(self, vocab):
        tri = np.array(vocab.valid_triplets)
        assert set(tri[:, 0]) == set(range(vocab.num_instruments))
        assert set(tri[:, 1]) == set(range(vocab.num_verbs))
        assert set(tri[:, 2]) == set(range(vocab.num_targets))

    def test_duplicate_triplets_rejected(self):
        from tripletplan.core import TripletVocab

        with pytest.raises(VocabError):
            TripletVocab(2, 2, 2, [(0, 0, 0), (0, 0, 0)], phase_count=2)

    def test_out_of_range_triplet_rejected(self):
        from tripletplan.core import TripletVocab

        with pytest.raises(VocabError):
            TripletVocab(2, 2, 2, [(0, 0, 5)], phase_count=2)

    def test_json_round_trip(self, vocab):
        assert vocab_from_json(vocab_to_json(vocab)) == vocab

    def test_shipped_default_matches_builder(self):
        assert default_vocab() == build_vocab()


class TestMultihot:
    def test_empty_frame_is_all_zero(self, vocab):
        vec = encode_multihot(FrameLabel(frozenset()), vocab)
        assert vec.shape == (100,)
        assert not vec.any()

    def test_two_active_classes(self, vocab):
        vec = encode_multihot(FrameLabel(frozenset({0, 99})), vocab)
        assert vec[0] == 1.0 and vec[99] == 1.0
        assert vec.sum() == 2.0

    def test_out_of_range_reports_offender(self, vocab):
        with pytest.raises(VocabError, match="250"):
            encode_multihot(FrameLabel(frozenset({250})), vocab)

    @settings(max_examples=200, deadline=None)
    @given(st.sets(st.integers(min_value=0, max_value=99), max_size=3), st.integers(0, 6))
    def test_round_trip_bijection(self, active, phase):
        vocab = default_vocab()
        label = FrameLabel(frozenset(active), phase_id=phase)
        decoded = decode_multihot(encode_multihot(label, vocab), vocab, phase_id=phase)
        assert decoded.active_classes == label.active_classes
        assert decoded.phase_id == phase

    def test_round_trip_1000_random_frames(self, vocab, rng):
        # brute-force decode: scan every coordinate
        for _ in range(1000):
            active = frozenset(rng.choice(100, size=rng.integers(0, 4), replace=False).tolist())
            vec = encode_multihot(FrameLabel(active), vocab)
            brute = frozenset(i for i in range(100) if vec[i] == 1.0)
            assert brute == active


class TestProjection:
    def test_instrument_takes_max(self, tiny_vocab):
        scores = np.zeros(tiny_vocab.num_classes)
        # find two triplets sharing instrument 0
        ids = [c for c, (i, _, _) in enumerate(tiny_vocab.valid_triplets) if i == 0][:2]
        scores[ids[0]] = 0.9
        scores[ids[1]] = 0.4
        out = project_components(scores, tiny_vocab, "I")
        assert out[0] == pytest.approx(0.9)

    def test_ivt_identity(self, vocab, rng):
        scores = rng.random(100)
        out = project_components(scores, vocab, "IVT")
        np.testing.assert_array_equal(out, scores)

    def test_matches_exhaustive_scan(self, vocab, rng):
        # brute force: for each component value, max over the triplet table
        for component in COMPONENTS:
            scores = rng.random(100)
            got = project_components(scores, vocab, component)
            size = vocab.component_size(component)
            expected = np.zeros(size)
            for value in range(size):
                best = -np.inf
                for cid, (i, v, t) in enumerate(vocab.valid_triplets):
                    key = {
                        "I": i,
                        "V": v,
                        "T": t,
                        "IV": i * vocab.num_verbs + v,
                        "IT": i * vocab.num_targets + t,
                        "IVT": cid,
                    }[component]
                    if key == value:
                        best = max(best, scores[cid])
                expected[value] = 0.0 if best == -np.inf else best
            np.testing.assert_allclose(got, expected)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 99), st.floats(min_value=0.0, max_value=1.0))
    def test_monotone_raising_one_score(self, cls, bump):
        vocab = default_vocab()
        rng = np.random.default_rng(cls)
        scores = rng.random(100)
        for component in COMPONENTS:
            before = project_components(scores, vocab, component)
            raised = scores.copy()
            raised[cls] = min(1.0, raised[cls] + bump)
            after = project_components(raised, vocab, component)
            assert (after >= before - 1e-12).all()

    def test_label_projection_any_rule(self, vocab, rng):
        labels = (rng.random(100) < 0.05).astype(float)
        for component in COMPONENTS:
            got = project_labels(labels, vocab, component)
            groups = vocab.component_groups(component)
            for value in range(vocab.component_size(component)):
                members = [c for c in range(100) if groups[c] == value]
                expected = 1.0 if any(labels[c] > 0 for c in members) else 0.0
                assert got[value] == expected

    def test_wrong_length_rejected(self, vocab):
        with pytest.raises(VocabError):
            project_components(np.zeros(99), vocab, "I")

    def test_unknown_component_rejected(self, vocab):
        with pytest.raises(VocabError):
            project_components(np.zeros(100), vocab, "X")


class TestRngStream:
    def test_same_key_same_draws(self):
        a = RngStream(42, 7).rng.random(10_000)
        b = RngStream(42, 7).rng.random(10_000)
        np.testing.assert_array_equal(a, b)

    def test_different_stream_differs(self):
        a = RngStream(42, 7).rng.random(100)
        b = RngStream(42, 8).rng.random(100)
        assert not np.array_equal(a, b)

    def test_child_streams_stable_and_distinct(self):
        root = RngStream(5)
        c1 = root.child("alpha")
        c2 = root.child("alpha")
        c3 = root.child("beta")
        assert (c1.seed, c1.stream_id) == (c2.seed, c2.stream_id)
        assert c1.stream_id != c3.stream_id
        np.testing.assert_array_equal(c1.rng.random(64), c2.rng.random(64))
