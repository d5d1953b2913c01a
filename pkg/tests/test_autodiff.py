import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jwdm import autodiff as ad
from jwdm.autodiff import DomainError, Graph, ShapeError, forward_op

from helpers import numeric_grad, rel_error


def test_matmul_example():
    g = Graph()
    a = g.constant([[1.0, 2.0], [3.0, 4.0]])
    b = g.constant([[5.0], [6.0]])
    out = a @ b
    np.testing.assert_array_equal(out.data, [[17.0], [39.0]])
    g.backward(ad.tsum(out))
    np.testing.assert_array_equal(a.grad, [[5.0, 6.0], [5.0, 6.0]])
    np.testing.assert_array_equal(b.grad, [[4.0], [6.0]])


def test_relu_example():
    g = Graph()
    x = g.constant([-1.0, 0.0, 2.0])
    y = ad.relu(x)
    np.testing.assert_array_equal(y.data, [0.0, 0.0, 2.0])
    g.backward(ad.tsum(y))
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_sigmoid_example():
    g = Graph()
    x = g.constant([0.0])
    y = ad.sigmoid(x)
    assert y.item() == 0.5
    g.backward(y)
    assert x.grad[0] == 0.25


def test_square_gradient_is_twice_x():
    g = Graph()
    x = g.constant([3.0, -1.5])
    g.backward(ad.tsum(x * x))
    np.testing.assert_array_equal(x.grad, [6.0, -3.0])


def test_mean_abs_gradient_and_subgradient_at_zero():
    g = Graph()
    x = g.constant([-2.0, 0.0, 4.0, 1.0])
    g.backward(ad.mean(ad.tabs(x)))
    np.testing.assert_array_equal(x.grad, [-0.25, 0.0, 0.25, 0.25])


def test_log_domain_error():
    g = Graph()
    with pytest.raises(DomainError):
        ad.log(g.constant([1.0, 0.0]))
    with pytest.raises(DomainError):
        ad.log(g.constant([-3.0]))


def test_backward_needs_scalar():
    g = Graph()
    x = g.constant([1.0, 2.0])
    with pytest.raises(ShapeError):
        g.backward(x * 2.0)


def test_matmul_shape_mismatch():
    g = Graph()
    with pytest.raises(ShapeError):
        g.constant(np.ones((2, 3))) @ g.constant(np.ones((2, 3)))


def test_incompatible_broadcast():
    g = Graph()
    with pytest.raises(ShapeError):
        g.constant(np.ones((2, 3))) + g.constant(np.ones((4,)))


def test_unknown_op_and_arity():
    g = Graph()
    x = g.constant([1.0])
    with pytest.raises(ValueError):
        forward_op("softmax", [x])
    with pytest.raises(ValueError):
        forward_op("add", [x])


def test_cross_graph_mixing_rejected():
    a = Graph().constant([1.0])
    b = Graph().constant([1.0])
    with pytest.raises(ValueError):
        a + b


def test_unreachable_tensors_get_zero_grad():
    g = Graph()
    x = g.constant([1.0, 2.0])
    unused = g.constant([5.0])
    g.backward(ad.tsum(x))
    np.testing.assert_array_equal(unused.grad, [0.0])


def test_param_leaf_is_shared_per_name_and_references_array():
    w = np.array([[2.0]])
    g = Graph()
    p1 = g.param("w", w)
    p2 = g.param("w", w)
    assert p1 is p2
    x = g.constant([[3.0]])
    g.backward(ad.tsum(x @ p1 + x @ p2))
    np.testing.assert_array_equal(g.param_grads()["w"], [[6.0]])
    assert p1.data is w


def test_param_requires_float64():
    with pytest.raises(TypeError):
        Graph().param("w", np.ones(2, dtype=np.float32))


def test_constant_copies_input():
    src = np.array([1.0, 2.0])
    t = Graph().constant(src)
    src[0] = 99.0
    assert t.data[0] == 1.0


def test_broadcast_bias_gradient_is_summed():
    g = Graph()
    x = g.constant(np.arange(6.0).reshape(3, 2))
    b = g.constant(np.array([1.0, -1.0]))
    g.backward(ad.tsum(x + b))
    np.testing.assert_array_equal(b.grad, [3.0, 3.0])


def test_leaky_relu_slope():
    g = Graph()
    x = g.constant([-2.0, 3.0])
    y = ad.leaky_relu(x, 0.1)
    np.testing.assert_allclose(y.data, [-0.2, 3.0])
    g.backward(ad.tsum(y))
    np.testing.assert_allclose(x.grad, [0.1, 1.0])


def test_clip_passes_gradient_only_inside():
    g = Graph()
    x = g.constant([-1.0, 0.5, 2.0])
    g.backward(ad.tsum(ad.clip(x, 0.0, 1.0)))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


def test_scalar_multiplication_uses_scale():
    g = Graph()
    x = g.constant([1.0, 2.0])
    y = 3.0 * x
    assert g.records[-1].kind == "scale"
    g.backward(ad.tsum(y))
    np.testing.assert_array_equal(x.grad, [3.0, 3.0])


def test_gradient_accumulates_over_fanout():
    g = Graph()
    x = g.constant([2.0])
    y = x * x + x * 3.0 - x
    g.backward(y)
    assert x.grad[0] == pytest.approx(2 * 2.0 + 3.0 - 1.0)


def test_records_are_in_insertion_order():
    g = Graph()
    x = g.constant([1.0])
    ad.tanh(ad.sigmoid(x))
    assert [r.kind for r in g.records] == ["sigmoid", "tanh"]
    assert g.records[0].output < g.records[1].output


_finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 2), elements=_finite), arrays(np.float64, (2, 4), elements=_finite))
def test_smooth_composition_matches_finite_differences(a, b):
    g = Graph()
    ta, tb = g.constant(a), g.constant(b)
    h = ta @ tb
    g.backward(ad.mean(ad.tanh(h) * ad.sigmoid(h)))
    a_work, b_work = a.copy(), b.copy()

    def fa():
        g2 = Graph()
        h2 = g2.constant(a_work) @ g2.constant(b)
        return ad.mean(ad.tanh(h2) * ad.sigmoid(h2)).item()

    def fb():
        g2 = Graph()
        h2 = g2.constant(a) @ g2.constant(b_work)
        return ad.mean(ad.tanh(h2) * ad.sigmoid(h2)).item()

    assert rel_error(ta.grad, numeric_grad(fa, a_work)) < 1e-4
    assert rel_error(tb.grad, numeric_grad(fb, b_work)) < 1e-4


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4,), elements=_finite), st.floats(0.5, 4.0))
def test_scale_and_sub_are_linear(x, k):
    g = Graph()
    t = g.constant(x)
    g.backward(ad.tsum(ad.scale(t, k) - t))
    np.testing.assert_allclose(t.grad, np.full(4, k - 1.0), rtol=0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(0.01, 5.0)))
def test_log_gradient_is_reciprocal(x):
    g = Graph()
    t = g.constant(x)
    g.backward(ad.tsum(ad.log(t)))
    np.testing.assert_allclose(t.grad, 1.0 / x, rtol=1e-15)
