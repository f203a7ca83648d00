"""Engine-level checks: every backward rule against central differences,
stop-gradient semantics, and graph bookkeeping corner cases."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

import collapselab.autodiff as ad
from collapselab.errors import ContractError, EvaluationError, ShapeError


def test_constant_has_no_grad_path(rng):
    c = ad.constant(rng.standard_normal(4))
    assert not c.requires_grad
    p = ad.param(rng.standard_normal(4))
    loss = ad.sum_all(ad.add(p, c))
    grads = ad.backward(loss)
    assert c not in grads
    np.testing.assert_array_equal(grads[p], np.ones(4))


def test_param_data_is_float64_contiguous():
    p = ad.param([[1, 2], [3, 4]])
    assert p.data.dtype == np.float64
    assert p.data.flags["C_CONTIGUOUS"]


def test_quadratic_exact_gradient(rng):
    x = ad.param(rng.standard_normal(7))
    loss = ad.sum_all(ad.square(x))
    g = ad.backward(loss)[x]
    np.testing.assert_allclose(g, 2.0 * x.data, rtol=0, atol=1e-14)


def test_backward_rejects_vector_root(rng):
    x = ad.param(rng.standard_normal(3))
    with pytest.raises(ContractError):
        ad.backward(ad.square(x))


@pytest.mark.parametrize(
    "build",
    [
        lambda x: ad.sum_all(ad.relu(x)),
        lambda x: ad.mean_all(ad.square(x)),
        lambda x: ad.frobenius_norm(x),
        lambda x: ad.sum_all(ad.l2_normalize_rows(x)),
        lambda x: ad.sum_all(ad.square(ad.mean_rows(x))),
        lambda x: ad.sum_all(ad.square(ad.log_softmax_rows(x))),
        lambda x: ad.sum_all(ad.matmul(x, ad.transpose(x))),
        lambda x: ad.sum_all(ad.square(ad.matmul(x, ad.transpose(x)))),
    ],
    ids=["relu", "mean_sq", "fro", "l2rows", "meanrows", "logsoftmax", "gram", "gram_sq"],
)
def test_matrix_ops_match_finite_differences(build, rng):
    # offset away from relu kinks; the other ops are smooth everywhere
    x = ad.param(rng.standard_normal((4, 6)) + 0.3)
    assert ad.grad_check(lambda: build(x), [x]) < 1e-6


def test_two_arg_ops_match_finite_differences(rng):
    a = ad.param(rng.standard_normal((3, 5)))
    b = ad.param(rng.standard_normal((5, 4)))
    v = ad.param(rng.standard_normal(5))
    w = ad.param(rng.standard_normal(5))
    assert ad.grad_check(lambda: ad.sum_all(ad.matmul(a, b)), [a, b]) < 1e-6
    assert ad.grad_check(lambda: ad.dot(v, w), [v, w]) < 1e-6
    assert ad.grad_check(lambda: ad.sum_all(ad.mul(v, w)), [v, w]) < 1e-6


def test_shared_node_through_two_paths(rng):
    """A node feeding one op both directly and through an intermediate
    must collect both contributions (the gram diamond)."""
    v = ad.param(rng.standard_normal((3, 4)))
    loss = ad.sum_all(ad.matmul(v, ad.transpose(v)))
    g = ad.backward(loss)[v]
    ones = np.ones((3, 3))
    np.testing.assert_allclose(g, 2.0 * ones @ v.data, rtol=1e-12)


def test_same_node_twice_in_one_op(rng):
    x = ad.param(rng.standard_normal(5))
    g = ad.backward(ad.sum_all(ad.mul(x, x)))[x]
    np.testing.assert_allclose(g, 2.0 * x.data, rtol=1e-12)


def test_broadcast_row_bias(rng):
    m = ad.param(rng.standard_normal((4, 3)))
    b = ad.param(rng.standard_normal(3))
    assert ad.grad_check(lambda: ad.sum_all(ad.square(ad.add(m, b))), [m, b]) < 1e-6


def test_relu_subgradient_zero_at_kink():
    x = ad.param(np.array([0.0, -1.0, 2.0]))
    g = ad.backward(ad.sum_all(ad.relu(x)))[x]
    np.testing.assert_array_equal(g, [0.0, 0.0, 1.0])


def test_stop_gradient_prunes_leaf(rng):
    x = ad.param(rng.standard_normal(4))
    loss = ad.sum_all(ad.stop_gradient(x))
    assert x not in ad.backward(loss)


def test_stop_gradient_identity_forward(rng):
    x = ad.param(rng.standard_normal(4))
    s = ad.stop_gradient(x)
    assert np.array_equal(s.data, x.data)
    assert not s.requires_grad


def test_x_times_sg_x_gradient_is_x_bitwise():
    x = ad.param(np.array([1.7, -2.3, 0.4]))
    g = ad.backward(ad.sum_all(ad.mul(x, ad.stop_gradient(x))))[x]
    assert np.array_equal(g, x.data)


def test_log_softmax_rows_values(rng):
    raw = rng.standard_normal((3, 5))
    out = ad.log_softmax_rows(ad.constant(raw)).data
    ref = raw - np.log(np.exp(raw).sum(axis=1, keepdims=True))
    np.testing.assert_allclose(out, ref, atol=1e-12)
    # stable under large offsets
    out2 = ad.log_softmax_rows(ad.constant(raw + 500.0)).data
    np.testing.assert_allclose(out2, ref, atol=1e-9)


def test_l2_normalize_unit_output(rng):
    v = ad.param(rng.standard_normal(6))
    n = ad.l2_normalize(v)
    assert abs(np.linalg.norm(n.data) - 1.0) < 1e-12
    assert ad.grad_check(lambda: ad.sum_all(ad.square(ad.l2_normalize(v))), [v]) < 1e-6


def test_backward_deterministic(rng):
    x = ad.param(rng.standard_normal((4, 4)))

    def run():
        loss = ad.sum_all(ad.square(ad.matmul(x, ad.transpose(x))))
        return ad.backward(loss)[x]

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_grad_check_raises_on_nonfinite():
    x = ad.param(np.array([0.0]))

    def bad():
        # 1/x style blowup via normalize of a zero vector is guarded upstream,
        # so force a nan directly
        return ad.sum_all(ad.mul(x, ad.constant(np.array([np.inf]))))

    with pytest.raises(EvaluationError):
        ad.grad_check(bad, [x])


def test_grad_check_tol_enforcement(rng):
    x = ad.param(rng.standard_normal(3))
    err = ad.grad_check(lambda: ad.sum_all(ad.square(x)), [x], tol=1e-6)
    assert err < 1e-6


def test_reshape_and_transpose_round_trip(rng):
    x = ad.param(rng.standard_normal((2, 6)))
    y = ad.reshape(x, (3, 4))
    assert y.shape == (3, 4)
    assert ad.grad_check(lambda: ad.sum_all(ad.square(ad.reshape(x, (3, 4)))), [x]) < 1e-6
    with pytest.raises(ShapeError):
        ad.reshape(x, (5, 5))


@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_add_is_elementwise(rows, cols, seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((rows, cols)), r.standard_normal((rows, cols))
    out = ad.add(ad.constant(a), ad.constant(b)).data
    np.testing.assert_array_equal(out, a + b)


@given(st.integers(0, 2**31 - 1))
def test_sum_gradient_is_ones(seed):
    r = np.random.default_rng(seed)
    x = ad.param(r.standard_normal((3, 3)))
    g = ad.backward(ad.sum_all(x))[x]
    np.testing.assert_array_equal(g, np.ones((3, 3)))
