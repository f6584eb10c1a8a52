"""Autodiff engine unit tests: analytic cases, broadcasting, graph shapes."""

import numpy as np
import pytest

from tripletplan import nn
from tripletplan.nn.tensor import Tensor, _unbroadcast


def numeric_grad(f, x: Tensor, h=1e-6):
    flat = x.data.reshape(-1)
    g = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f().item()
        flat[i] = orig - h
        down = f().item()
        flat[i] = orig
        g[i] = (up - down) / (2 * h)
    return g.reshape(x.data.shape)


class TestBasics:
    def test_square_derivative(self):
        x = Tensor(3.0, requires_grad=True)
        y = x * x
        y.backward()
        assert x.grad == pytest.approx(6.0)

    def test_identity_matmul_grad_all_ones(self):
        w = Tensor(np.random.default_rng(0).normal(size=(4, 4)), requires_grad=True)
        eye = Tensor(np.eye(4))
        out = (eye @ w).sum()
        out.backward()
        np.testing.assert_allclose(w.grad, np.ones((4, 4)))

    def test_unused_parameter_gets_no_grad(self):
        x = Tensor(2.0, requires_grad=True)
        unused = Tensor(5.0, requires_grad=True)
        (x * 3.0).backward()
        assert unused.grad is None

    def test_diamond_graph_accumulates(self):
        x = Tensor(2.0, requires_grad=True)
        y = x * x + x * x  # two paths
        y.backward()
        assert x.grad == pytest.approx(8.0)

    def test_shared_input_to_add_both_sides(self):
        x = Tensor(np.ones(3), requires_grad=True)
        (x + x).sum().backward()
        np.testing.assert_allclose(x.grad, 2 * np.ones(3))

    def test_add_aliasing_guard(self):
        # both parents of add get gradients that must stay independent
        a = Tensor(np.ones(4), requires_grad=True)
        b = Tensor(np.ones(4), requires_grad=True)
        c = a + b
        d = (c * 2.0).sum() + a.sum()
        d.backward()
        np.testing.assert_allclose(a.grad, 3 * np.ones(4))
        np.testing.assert_allclose(b.grad, 2 * np.ones(4))

    def test_shape_mismatch_names_shapes(self):
        with pytest.raises(nn.ShapeMismatch, match=r"\(2, 3\)"):
            Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 3)))

    def test_backward_requires_scalar(self):
        x = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ValueError):
            (x * 2.0).backward()

    def test_no_grad_builds_no_tape(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with nn.no_grad():
            y = (x * 2.0).sum()
        assert y._backward is None and y._parents == ()


class TestBroadcasting:
    def test_unbroadcast_sums_leading_axes(self):
        g = np.ones((5, 4, 3))
        out = _unbroadcast(g, (4, 3))
        np.testing.assert_allclose(out, 5 * np.ones((4, 3)))

    def test_unbroadcast_sums_kept_axes(self):
        g = np.ones((5, 4, 3))
        out = _unbroadcast(g, (4, 1))
        np.testing.assert_allclose(out, 15 * np.ones((4, 1)))

    @pytest.mark.parametrize("shape_a,shape_b", [((3, 4), (4,)), ((2, 3, 4), (3, 4)), ((5, 1), (1, 6))])
    def test_add_mul_broadcast_grads(self, shape_a, shape_b, rng):
        a = Tensor(rng.normal(size=shape_a), requires_grad=True)
        b = Tensor(rng.normal(size=shape_b), requires_grad=True)
        ((a * b + b) ** 2.0).sum().backward()
        ga, gb = a.grad.copy(), b.grad.copy()
        a.grad = b.grad = None
        na = numeric_grad(lambda: ((a * b + b) ** 2.0).sum(), a)
        nb = numeric_grad(lambda: ((a * b + b) ** 2.0).sum(), b)
        np.testing.assert_allclose(ga, na, rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(gb, nb, rtol=1e-5, atol=1e-7)


class TestOpGradients:
    CASES = {
        "exp": lambda t: nn.exp(t).sum(),
        "log": lambda t: nn.log(t * t + 1.0).sum(),
        "tanh": lambda t: nn.tanh(t).sum(),
        "sigmoid": lambda t: nn.sigmoid(t).sum(),
        "logsigmoid": lambda t: nn.logsigmoid(t).sum(),
        "relu_shifted": lambda t: nn.relu(t + 5.0).sum(),  # away from the kink
        "softmax": lambda t: (nn.softmax(t, axis=-1) ** 2.0).sum(),
        "mean": lambda t: (t.mean(axis=0) ** 2.0).sum(),
        "slice": lambda t: (t[1:, :2] ** 2.0).sum(),
        "transpose": lambda t: (nn.transpose(t, (1, 0)) ** 3.0).sum(),
        "flip": lambda t: (nn.flip(t, 0) * np.arange(12).reshape(3, 4)).sum(),
        "reshape": lambda t: (nn.reshape(t, (4, 3)) ** 2.0).sum(),
        "minimum": lambda t: nn.minimum(t, 0.2).sum(),
        "clip": lambda t: nn.clip(t * 2.0, -0.5, 0.5).sum(),
    }

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_matches_numeric(self, name, rng):
        f = self.CASES[name]
        x = Tensor(rng.normal(size=(3, 4)) + 0.1, requires_grad=True)
        f(x).backward()
        analytic = x.grad.copy()
        x.grad = None
        numeric = numeric_grad(lambda: f(x), x)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    def test_concat_grads(self, rng):
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        nn.concat([a, b], axis=1).sum().backward()
        np.testing.assert_allclose(a.grad, np.ones((2, 3)))
        np.testing.assert_allclose(b.grad, np.ones((2, 2)))

    def test_gather_rows_accumulates_duplicates(self):
        table = Tensor(np.zeros((5, 2)), requires_grad=True)
        idx = np.array([1, 1, 3])
        nn.gather_rows(table, idx).sum().backward()
        expected = np.zeros((5, 2))
        expected[1] = 2.0
        expected[3] = 1.0
        np.testing.assert_allclose(table.grad, expected)

    def test_masked_fill_blocks_gradient(self, rng):
        x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        mask = np.eye(3, dtype=bool)
        nn.masked_fill(x, mask, -np.inf).sum().backward()
        assert (x.grad[mask] == 0).all()
        assert (x.grad[~mask] == 1).all()

    def test_matmul_batched(self, rng):
        a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        ((a @ b) ** 2.0).sum().backward()
        ga = a.grad.copy()
        a.grad = b.grad = None
        na = numeric_grad(lambda: ((a @ b) ** 2.0).sum(), a)
        np.testing.assert_allclose(ga, na, rtol=1e-4, atol=1e-6)
