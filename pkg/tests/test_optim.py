import numpy as np
import pytest

from tripletplan import nn
from tripletplan.nn.tensor import Tensor


def reference_adam(theta, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Textbook recurrence on scalars, evaluated independently."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        theta -= lr * mhat / (np.sqrt(vhat) + eps)
    return theta


class TestAdam:
    def test_rejects_non_positive_lr(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ValueError):
            nn.Adam({"p": p}, lr=0.0)

    def test_zero_gradient_first_step_keeps_params(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = nn.Adam({"p": p}, lr=0.1)
        p.grad = np.zeros(2)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_none_gradient_skipped(self):
        p = Tensor(np.array([3.0]), requires_grad=True)
        opt = nn.Adam({"p": p}, lr=0.1)
        opt.step()
        assert p.data[0] == 3.0

    def test_first_step_bias_corrected(self):
        # g=1, lr=0.1: the bias-corrected first step is -lr * 1/(1+eps)
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = nn.Adam({"p": p}, lr=0.1)
        p.grad = np.ones(1)
        opt.step()
        assert p.data[0] == pytest.approx(-0.1, abs=1e-9)

    def test_matches_reference_recurrence_to_1e12(self, rng):
        grads = rng.normal(size=20)
        p = Tensor(np.array([0.7]), requires_grad=True)
        opt = nn.Adam({"p": p}, lr=3e-3)
        for g in grads:
            p.grad = np.array([g])
            opt.step()
        want = reference_adam(0.7, grads, lr=3e-3)
        assert p.data[0] == pytest.approx(want, abs=1e-12)

    def test_quadratic_descent_100_steps(self):
        theta = Tensor(np.array([1.0]), requires_grad=True)
        opt = nn.Adam({"theta": theta}, lr=0.05)
        for _ in range(100):
            loss = (theta * theta).sum()
            theta.grad = None
            loss.backward()
            opt.step()
        assert abs(theta.data[0]) < 0.05
