"""Unit checks for the autodiff core: every primitive's backward against
central differences, plus graph mechanics (fan-out, no_grad, broadcasting)."""

import numpy as np
import pytest

from evocap.tensor import Tensor, as_tensor, concat, no_grad, parameter, softmax


def fd_grad(f, leaf, h=1e-6):
    num = np.zeros_like(leaf.data)
    flat = leaf.data.reshape(-1)
    out = num.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(f().data)
            flat[i] = orig - h
            lo = float(f().data)
            flat[i] = orig
            out[i] = (hi - lo) / (2 * h)
    return num


def check(f, *leaves, tol=1e-7):
    for leaf in leaves:
        leaf.zero_grad()
    f().backward()
    for leaf in leaves:
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        numeric = fd_grad(f, leaf)
        np.testing.assert_allclose(analytic, numeric, rtol=tol, atol=tol)


class TestPrimitiveGradients:
    def test_add_mul_broadcast(self, rng):
        a = parameter(rng.standard_normal((3, 4)))
        b = parameter(rng.standard_normal((1, 4)))
        c = parameter(rng.standard_normal(()))
        check(lambda: ((a + b) * c + a * a).sum(), a, b, c)

    def test_sub_div(self, rng):
        a = parameter(rng.standard_normal((2, 3)))
        b = parameter(rng.uniform(1.0, 2.0, (2, 3)))
        check(lambda: ((a - b) / b).sum(), a, b)

    def test_matmul(self, rng):
        a = parameter(rng.standard_normal((3, 4)))
        b = parameter(rng.standard_normal((4, 2)))
        r = rng.standard_normal((3, 2))
        check(lambda: ((a @ b) * r).sum(), a, b)

    def test_matmul_vector(self, rng):
        a = parameter(rng.standard_normal((5, 3)))
        v = parameter(rng.standard_normal(3))
        r = rng.standard_normal(5)
        check(lambda: ((a @ v) * r).sum(), a, v)

    def test_reductions(self, rng):
        a = parameter(rng.standard_normal((3, 4)))
        r = rng.standard_normal((1, 4))
        check(lambda: (a.sum(axis=0, keepdims=True) * r).sum(), a)
        check(lambda: (a.mean(axis=1) * np.arange(3)).sum(), a)

    def test_pointwise(self, rng):
        a = parameter(rng.standard_normal((4, 4)) * 0.5)
        check(lambda: a.tanh().sum(), a)
        check(lambda: a.sigmoid().sum(), a)
        check(lambda: a.exp().sum(), a)
        b = parameter(rng.uniform(0.5, 2.0, (3, 3)))
        check(lambda: b.log().sum(), b)
        check(lambda: b.sqrt().sum(), b)

    def test_relu_away_from_kink(self, rng):
        a = parameter(rng.standard_normal((4, 4)) + 3.0)
        check(lambda: a.relu().sum(), a)
        b = parameter(-np.abs(rng.standard_normal((4, 4))) - 1.0)
        b.zero_grad()
        b.relu().sum().backward()
        assert np.all(b.grad == 0.0)

    def test_reshape_transpose_getitem(self, rng):
        a = parameter(rng.standard_normal((3, 4)))
        r = rng.standard_normal((4, 3))
        check(lambda: (a.reshape(2, 6).reshape(3, 4).T * r).sum(), a)
        check(lambda: (a[1:, :2] * 2.0).sum(), a)

    def test_gather_rows(self, rng):
        table = parameter(rng.standard_normal((6, 3)))
        idx = np.array([1, 1, 4])
        r = rng.standard_normal((3, 3))
        check(lambda: (table[idx] * r).sum(), table)

    def test_concat(self, rng):
        a = parameter(rng.standard_normal((2, 3)))
        b = parameter(rng.standard_normal((4, 3)))
        r = rng.standard_normal((6, 3))
        check(lambda: (concat([a, b], axis=0) * r).sum(), a, b)

    def test_softmax_axes(self, rng):
        a = parameter(rng.standard_normal((3, 5)))
        r = rng.standard_normal((3, 5))
        check(lambda: (softmax(a, axis=-1) * r).sum(), a)
        check(lambda: (softmax(a, axis=0) * r).sum(), a)

    def test_masked_softmax(self, rng):
        a = parameter(rng.standard_normal((3, 5)))
        mask = np.array([[1, 0, 1, 1, 0], [1, 1, 1, 1, 1], [0, 0, 1, 0, 0]], dtype=float)
        r = rng.standard_normal((3, 5))
        check(lambda: (softmax(a, axis=-1, mask=mask) * r).sum(), a)

    def test_clamp_min(self, rng):
        a = parameter(np.array([0.5, 2.0, 3.0]))
        check(lambda: a.clamp_min(1.0).log().sum(), a)


class TestGraphMechanics:
    def test_fanout_accumulates(self):
        a = parameter(np.array(2.0))
        out = a * a + a * 3.0
        out.backward()
        assert a.grad == pytest.approx(2 * 2.0 + 3.0)

    def test_backward_requires_scalar(self):
        a = parameter(np.ones((2, 2)))
        with pytest.raises(ValueError):
            (a * 2).backward()

    def test_no_grad_blocks_graph(self):
        a = parameter(np.array(1.5))
        with no_grad():
            out = a * a
        assert not out.requires_grad
        out2 = a * a
        out2.backward()
        assert a.grad == pytest.approx(3.0)

    def test_detach(self):
        a = parameter(np.array(2.0))
        out = a.detach() * a
        out.backward()
        assert a.grad == pytest.approx(2.0)

    def test_dtype_is_float64(self):
        t = as_tensor(np.float32([1, 2]))
        assert t.data.dtype == np.float64

    def test_deep_chain_iterative_topo(self):
        a = parameter(np.array(1.0))
        out = a
        for _ in range(3000):
            out = out + 1.0
        out.backward()
        assert a.grad == pytest.approx(1.0)

    def test_softmax_nan_raises(self):
        with pytest.raises(ValueError):
            softmax(Tensor(np.array([[np.nan, 0.0]])))

    def test_softmax_fully_masked_row_raises(self):
        with pytest.raises(ValueError):
            softmax(Tensor(np.zeros((2, 3))), mask=np.array([[1, 1, 1], [0, 0, 0]]))
