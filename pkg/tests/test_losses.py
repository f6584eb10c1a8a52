import math

import numpy as np
import pytest

from tripletplan import nn
from tripletplan.nn.tensor import Tensor


class TestMultilabelBce:
    def test_zero_logits_give_ln2(self, rng):
        z = Tensor(np.zeros((3, 7)))
        y = (rng.random((3, 7)) < 0.5).astype(float)
        assert nn.multilabel_bce(z, y).item() == pytest.approx(math.log(2.0), abs=1e-12)

    def test_matches_high_precision_reference(self, rng):
        # direct formula in float64 on moderate logits
        z = rng.normal(size=(5, 9)) * 3
        y = (rng.random((5, 9)) < 0.3).astype(float)
        p = 1.0 / (1.0 + np.exp(-z))
        ref = -(y * np.log(p) + (1 - y) * np.log1p(-p)).mean()
        got = nn.multilabel_bce(Tensor(z), y).item()
        assert got == pytest.approx(ref, rel=1e-10)

    def test_stable_at_extreme_logits(self):
        z = Tensor(np.array([[500.0, -500.0]]))
        y = np.array([[1.0, 0.0]])
        assert nn.multilabel_bce(z, y).item() == pytest.approx(0.0, abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            nn.multilabel_bce(Tensor(np.array([np.inf])), np.array([1.0]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            nn.multilabel_bce(Tensor(np.zeros((2, 3))), np.zeros((3, 2)))


class TestSoftmaxCe:
    def test_uniform_logits(self):
        z = Tensor(np.zeros((4, 5)))
        loss = nn.softmax_ce(z, np.array([0, 1, 2, 3]))
        assert loss.item() == pytest.approx(math.log(5.0), abs=1e-12)

    def test_matches_reference(self, rng):
        z = rng.normal(size=(6, 8)) * 2
        cls = rng.integers(0, 8, size=6)
        shifted = z - z.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        ref = -logp[np.arange(6), cls].mean()
        assert nn.softmax_ce(Tensor(z), cls).item() == pytest.approx(ref, rel=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            nn.softmax_ce(Tensor(np.full((2, 3), np.nan)), np.array([0, 1]))


class TestMse:
    def test_identity_is_zero(self, rng):
        x = rng.normal(size=(4, 4))
        assert nn.mse(Tensor(x), x).item() == 0.0

    def test_matches_reference(self, rng):
        a = rng.normal(size=(5, 3))
        b = rng.normal(size=(5, 3))
        assert nn.mse(Tensor(a), b).item() == pytest.approx(((a - b) ** 2).mean(), rel=1e-12)

    def test_non_negative(self, rng):
        for _ in range(20):
            a = rng.normal(size=7)
            b = rng.normal(size=7)
            assert nn.mse(Tensor(a), b).item() >= 0.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            nn.mse(Tensor(np.array([1.0, np.inf])), np.zeros(2))
