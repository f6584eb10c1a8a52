"""Parity between the compiled kernel extension and the pure-numpy
fallback, plus kernel-level oracles."""

import numpy as np
import pytest

from tripletplan._kernels import available_backends, pure

BACKENDS = available_backends()
HAVE_COMPILED = "compiled" in BACKENDS

needs_compiled = pytest.mark.skipif(not HAVE_COMPILED, reason="extension not built")


@needs_compiled
class TestParity:
    def test_lstm_forward_backward(self, rng):
        fast = BACKENDS["compiled"]
        B, T, H = 5, 9, 7
        pre = rng.normal(size=(B, T, 4 * H))
        w = rng.normal(size=(H, 4 * H)) * 0.3
        h1, c1, g1 = pure.lstm_forward(pre, w)
        h2, c2, g2 = fast.lstm_forward(pre, w)
        np.testing.assert_allclose(h1, h2, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(c1, c2, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-12)
        dh = rng.normal(size=(B, T, H))
        dp1, dw1 = pure.lstm_backward(dh, h1, c1, g1, w)
        dp2, dw2 = fast.lstm_backward(dh, h2, c2, g2, w)
        np.testing.assert_allclose(dp1, dp2, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(dw1, dw2, rtol=1e-9, atol=1e-12)

    def test_gae(self, rng):
        fast = BACKENDS["compiled"]
        r = rng.random(50)
        v = rng.random(51)
        d = (rng.random(50) < 0.2).astype(np.float64)
        a1, ret1 = pure.gae_scan(r, v, d, 0.97, 0.9)
        a2, ret2 = fast.gae_scan(r, v, d, 0.97, 0.9)
        np.testing.assert_allclose(a1, a2, rtol=1e-12)
        np.testing.assert_allclose(ret1, ret2, rtol=1e-12)

    def test_adam(self, rng):
        fast = BACKENDS["compiled"]
        p1 = rng.normal(size=100)
        p2 = p1.copy()
        g = rng.normal(size=100)
        m1, v1 = np.zeros(100), np.zeros(100)
        m2, v2 = np.zeros(100), np.zeros(100)
        for t in range(1, 6):
            pure.adam_step(p1, g, m1, v1, t, 1e-2, 0.9, 0.999, 1e-8)
            fast.adam_step(p2, g, m2, v2, t, 1e-2, 0.9, 0.999, 1e-8)
        np.testing.assert_allclose(p1, p2, rtol=1e-13)
        np.testing.assert_allclose(m1, m2, rtol=1e-13)
        np.testing.assert_allclose(v1, v2, rtol=1e-13)

    def test_ap_weighted(self, rng):
        fast = BACKENDS["compiled"]
        for _ in range(50):
            n = int(rng.integers(1, 60))
            labels = (rng.random(n) < 0.3).astype(np.float64)
            weights = rng.integers(0, 4, size=n)
            a = pure.ap_weighted(labels, weights)
            b = fast.ap_weighted(labels, weights)
            if np.isnan(a):
                assert np.isnan(b)
            else:
                assert a == pytest.approx(b, abs=1e-12)


class TestApWeightedOracle:
    """ap_weighted must equal plain AP of the materialized duplicated rows."""

    @staticmethod
    def _plain_ap(labels):
        # rows already in rank order; AP = mean precision at positives
        y = np.asarray(labels) > 0
        if not y.any():
            return float("nan")
        cum = np.cumsum(y)
        prec = cum / np.arange(1, len(y) + 1)
        return float(prec[y].mean())

    def test_against_duplication(self, rng):
        for impl in BACKENDS.values():
            for _ in range(100):
                n = int(rng.integers(1, 40))
                labels = (rng.random(n) < 0.4).astype(np.float64)
                weights = rng.integers(0, 5, size=n)
                got = impl.ap_weighted(labels, weights)
                expanded = np.repeat(labels, weights)
                want = self._plain_ap(expanded)
                if np.isnan(want):
                    assert np.isnan(got)
                else:
                    assert got == pytest.approx(want, abs=1e-12)

    def test_unit_weights_reduce_to_plain_ap(self, rng):
        labels = (rng.random(200) < 0.2).astype(np.float64)
        weights = np.ones(200, dtype=np.int64)
        for impl in BACKENDS.values():
            assert impl.ap_weighted(labels, weights) == pytest.approx(self._plain_ap(labels), abs=1e-12)
