"""Finite-difference checks for the structured tape operations."""

import numpy as np
import pytest

from gsatts import tape
from gsatts.training import numeric_gradient_elements, relative_error


def check_gradient(loss_fn, params, tol=1e-7, eps=1e-6):
    for p in params:
        p.grad = None
    loss_fn().backward()
    for p in params:
        numeric = numeric_gradient_elements(loss_fn, p, list(range(p.data.size)), eps)
        analytic = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)
        assert relative_error(analytic, numeric) <= tol


def test_broadcast_add_mul():
    rng = np.random.default_rng(0)
    a = tape.parameter(rng.standard_normal((4, 3)))
    b = tape.parameter(rng.standard_normal(3))
    proj = tape.constant(rng.standard_normal((4, 3)))
    check_gradient(lambda: tape.tsum((a + b) * (a * b) * proj), [a, b])


def test_div_and_sqrt():
    rng = np.random.default_rng(1)
    a = tape.parameter(rng.uniform(0.5, 2.0, (3, 3)))
    b = tape.parameter(rng.uniform(0.5, 2.0, (3, 1)))
    proj = tape.constant(rng.standard_normal((3, 3)))
    check_gradient(lambda: tape.tsum(tape.sqrt(a) / b * proj), [a, b])


def test_scale_shift_dtype_preserved():
    x = tape.constant(np.ones((2, 2), dtype=np.float32))
    out = (x * 2.0 + 1.0) / 4.0 - 0.5
    assert out.dtype == np.float32


def test_getitem_scatter():
    rng = np.random.default_rng(2)
    a = tape.parameter(rng.standard_normal((5, 4)))
    proj = tape.constant(rng.standard_normal((2, 2)))
    check_gradient(lambda: tape.tsum(a[1:3, 0:2] * proj), [a])


def test_concat():
    rng = np.random.default_rng(3)
    parts = [tape.parameter(rng.standard_normal((2, 3))) for _ in range(3)]
    proj = tape.constant(rng.standard_normal((6, 3)))
    check_gradient(lambda: tape.tsum(tape.concat(parts, axis=0) * proj), parts)


def test_gather_rows_accumulates_repeats():
    rng = np.random.default_rng(4)
    table = tape.parameter(rng.standard_normal((6, 3)))
    ids = np.array([0, 2, 2, 5])
    proj = tape.constant(rng.standard_normal((4, 3)))
    check_gradient(lambda: tape.tsum(tape.gather_rows(table, ids) * proj), [table])


def test_repeat_rows():
    rng = np.random.default_rng(5)
    x = tape.parameter(rng.standard_normal((4, 3)))
    counts = np.array([2, 0, 3, 1])
    proj = tape.constant(rng.standard_normal((6, 3)))
    check_gradient(lambda: tape.tsum(tape.repeat_rows(x, counts) * proj), [x])


def test_conv1d_same():
    rng = np.random.default_rng(6)
    x = tape.parameter(rng.standard_normal((7, 3)))
    w = tape.parameter(rng.standard_normal((5, 3, 4)) * 0.3)
    b = tape.parameter(rng.standard_normal(4) * 0.1)
    proj = tape.constant(rng.standard_normal((7, 4)))
    check_gradient(lambda: tape.tsum(tape.conv1d_same(x, w, b) * proj), [x, w, b])


def test_softmax_rows():
    rng = np.random.default_rng(7)
    z = rng.standard_normal((4, 5)) * 10
    out = tape.softmax(tape.constant(z))
    assert np.allclose(out.data.sum(axis=-1), 1.0)
    assert np.allclose(out.data, np.exp(z - z.max(-1, keepdims=True))
                       / np.exp(z - z.max(-1, keepdims=True)).sum(-1, keepdims=True))


def test_activations():
    rng = np.random.default_rng(8)
    x = tape.parameter(rng.standard_normal(20))
    proj = tape.constant(rng.standard_normal(20))
    for fn in (tape.exp, tape.tanh, tape.sigmoid, tape.gelu):
        check_gradient(lambda fn=fn: tape.tsum(fn(x) * proj), [x])


def test_relu_gradient_off_kink():
    x = tape.parameter(np.array([-1.0, 2.0, -0.5, 3.0]))
    proj = tape.constant(np.array([1.0, 1.0, 1.0, 1.0]))
    check_gradient(lambda: tape.tsum(tape.relu(x) * proj), [x])


def test_shared_node_gradient_accumulates():
    a = tape.parameter(np.array([2.0]))
    out = a * a + a * 3.0
    out.backward()
    assert np.allclose(a.grad, [2 * 2.0 + 3.0])


def test_backward_through_reused_subgraph():
    rng = np.random.default_rng(9)
    a = tape.parameter(rng.standard_normal((3, 3)))
    proj = tape.constant(rng.standard_normal((3, 3)))

    def loss_fn():
        shared = tape.tanh(a)
        return tape.tsum((shared @ shared) * proj)

    check_gradient(loss_fn, [a])
