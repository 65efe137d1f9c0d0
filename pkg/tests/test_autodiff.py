import math

import numpy as np
import pytest

from graphere import autodiff as ad
from graphere.autodiff import Tensor
from graphere.gradcheck import check_gradients, numeric_grad, rel_error

RNG = np.random.default_rng(12345)


def t(arr, grad=True):
    return Tensor(arr, requires_grad=grad)


# ---------------------------------------------------------------------------
# forward values

def test_matmul_identity():
    a = t(np.eye(2))
    b = t([[1.0, 2.0], [3.0, 4.0]])
    out = ad.matmul(a, b)
    np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])


def test_matmul_zero_selection():
    out = ad.matmul(t([[1.0, 0.0]]), t([[0.0], [5.0]]))
    np.testing.assert_array_equal(out.data, [[0.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ad.ShapeMismatchError, match=r"\(2, 3\).*\(2, 2\)"):
        ad.matmul(t(np.ones((2, 3))), t(np.ones((2, 2))))


def test_softmax_uniform_logits():
    out = ad.softmax_rows(t([[0.0, 0.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.5]])


def test_softmax_shift_invariance_no_overflow():
    out = ad.softmax_rows(t([[1000.0, 1000.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.5]])


def test_softmax_hand_value():
    out = ad.softmax_rows(t([[math.log(1.0), math.log(3.0)]]))
    np.testing.assert_allclose(out.data, [[0.25, 0.75]], atol=1e-12)


def test_softmax_rows_sum_to_one_and_open_interval():
    x = t(RNG.normal(size=(6, 9)) * 10)
    y = ad.softmax_rows(x).data
    np.testing.assert_allclose(y.sum(axis=1), np.ones(6), atol=1e-12)
    assert (y > 0).all() and (y < 1).all()


def test_softmax_nan_input_rejected():
    with pytest.raises(ValueError, match="NaN"):
        ad.softmax_rows(t([[0.0, float("nan")]]))


def test_leaky_relu_values():
    x = t([[2.0, -1.0, 0.0]])
    out = ad.leaky_relu(x, 0.01)
    np.testing.assert_array_equal(out.data, [[2.0, -0.01, 0.0]])


def test_leaky_relu_slope_validation():
    with pytest.raises(ValueError):
        ad.leaky_relu(t([[1.0]]), 1.5)


def test_cross_entropy_uniform_logits():
    logits = t(np.zeros((3, 4)))
    loss = ad.cross_entropy_from_logits(logits, [0, 2, 3])
    assert loss.item() == pytest.approx(math.log(4.0), abs=1e-12)


def test_cross_entropy_saturated_correct():
    logits = np.zeros((2, 3))
    logits[0, 1] = 100.0
    logits[1, 0] = 100.0
    loss = ad.cross_entropy_from_logits(t(logits), [1, 0])
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_matches_two_step_oracle():
    # oracle: explicit softmax then -log of the picked probability
    logits = RNG.normal(size=(5, 3))
    labels = RNG.integers(0, 3, size=5)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = e / e.sum(axis=1, keepdims=True)
    expected = float(-np.log(probs[np.arange(5), labels]).mean())
    loss = ad.cross_entropy_from_logits(t(logits.copy()), labels)
    assert loss.item() == pytest.approx(expected, abs=1e-12)


def test_cross_entropy_label_out_of_range_names_row():
    with pytest.raises(ValueError, match="row 1"):
        ad.cross_entropy_from_logits(t(np.zeros((2, 3))), [0, 7])


def test_backward_sum_gives_ones():
    w = t([1.0, 2.0, 3.0])
    w.sum().backward()
    np.testing.assert_array_equal(w.grad, [1.0, 1.0, 1.0])


def test_backward_quadratic():
    w = t([1.0, 2.0, 3.0])
    (w * w).sum().backward()
    np.testing.assert_array_equal(w.grad, [2.0, 4.0, 6.0])


def test_backward_rejects_non_scalar():
    w = t([[1.0, 2.0]])
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(w)


def test_backward_fanout_accumulates_both_paths():
    # y = sum(x*x) + sum(3*x): dy/dx = 2x + 3, also verified numerically
    x = t([1.0, -2.0, 0.5])

    def build():
        return ad.add((x * x).sum(), ad.scale(x, 3.0).sum())

    errs = check_gradients(build, {"x": x})
    assert errs["x"] <= 1e-8
    build().backward()


def test_dropout_eval_identity():
    x = t(RNG.normal(size=(4, 4)))
    assert ad.dropout(x, 0.7, training=False, rng_seed=0) is x


def test_dropout_zero_rate_identity():
    x = t(RNG.normal(size=(4, 4)))
    assert ad.dropout(x, 0.0, training=True, rng_seed=0) is x


def test_dropout_rate_one_rejected():
    with pytest.raises(ValueError):
        ad.dropout(t([[1.0]]), 1.0, training=True, rng_seed=0)


def test_dropout_preserves_mean():
    x = Tensor(np.ones(100_000))
    y = ad.dropout(t(np.ones(100_000)), 0.3, training=True, rng_seed=99)
    assert 0.98 <= y.data.mean() <= 1.02
    assert x.data.mean() == 1.0


def test_dropout_deterministic_per_seed():
    x = t(np.ones((8, 8)))
    a = ad.dropout(x, 0.5, training=True, rng_seed=7).data
    b = ad.dropout(x, 0.5, training=True, rng_seed=7).data
    np.testing.assert_array_equal(a, b)


def test_masked_softmax_zero_row_convention():
    x = t(RNG.normal(size=(2, 3)))
    mask = np.array([[1, 1, 0], [0, 0, 0]])
    y = ad.masked_softmax_rows(x, mask).data
    assert y[0].sum() == pytest.approx(1.0, abs=1e-12)
    assert y[0, 2] == 0.0
    np.testing.assert_array_equal(y[1], [0.0, 0.0, 0.0])


def test_row_normalize_unit_norm_and_zero_rows():
    x = t(np.array([[3.0, 4.0], [0.0, 0.0]]))
    y = ad.row_normalize(x).data
    np.testing.assert_allclose(y[0], [0.6, 0.8], atol=1e-12)
    np.testing.assert_array_equal(y[1], [0.0, 0.0])


def test_set_diag_one():
    x = t(np.full((3, 3), 0.5))
    y = ad.set_diag_one(x)
    assert np.array_equal(np.diag(y.data), np.ones(3))
    loss = y.sum()
    loss.backward()
    assert np.array_equal(np.diag(x.grad), np.zeros(3))
    assert x.grad[0, 1] == 1.0


# ---------------------------------------------------------------------------
# finite-difference gradient suite: every differentiable op, h=1e-5, rel err <= 1e-6

from graphere.gradcheck import OP_TOLERANCE, op_gradient_cases

OP_CASES = op_gradient_cases()


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradient_matches_finite_differences(name):
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    build, inputs = OP_CASES[name](rng)
    errs = check_gradients(build, inputs, h=1e-5)
    for input_name, err in errs.items():
        assert err <= OP_TOLERANCE, f"{name}/{input_name}: rel err {err:.3e}"


def test_matmul_grad_against_explicit_finite_differences():
    # the spec-level oracle: grad of sum(A @ B) via central differences
    rng = np.random.default_rng(0)
    a = t(rng.normal(size=(3, 4)))
    b = t(rng.normal(size=(4, 2)))

    def build():
        return ad.matmul(a, b).sum()

    loss = build()
    loss.backward()
    ga = a.grad.copy()
    num = numeric_grad(lambda: float(build().data), a.data, h=1e-5)
    assert rel_error(ga, num) <= 1e-7
