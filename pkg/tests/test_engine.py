"""Autodiff engine: op gradients vs finite differences, tape semantics, Adam."""

import numpy as np
import pytest

from confae.engine import (
    Adam,
    GraphError,
    Tape,
    Tensor,
    abs_,
    conv2d,
    conv_transpose2d,
    crop2d,
    dense,
    grad_check,
    leaky_relu,
    mean,
    no_grad,
    permute,
    reshape,
    sigmoid,
    sqrt,
    square,
)


def t(arr, rg=True):
    return Tensor(np.asarray(arr, dtype=np.float32), requires_grad=rg)


# -- hand-computed forward values ---------------------------------------------

def test_conv2d_scalar_kernel():
    x = t(np.ones((1, 1, 3, 3)))
    w = t(np.full((1, 1, 1, 1), 2.0))
    out = conv2d(x, w, stride=1, padding=0)
    np.testing.assert_array_equal(out.data, np.full((1, 1, 3, 3), 2.0, dtype=np.float32))


def test_conv2d_zero_input():
    x = t(np.zeros((2, 3, 5, 5)))
    w = t(np.random.default_rng(0).standard_normal((4, 3, 3, 3)))
    out = conv2d(x, w, stride=1, padding=1)
    assert out.shape == (2, 4, 5, 5)
    np.testing.assert_array_equal(out.data, 0.0)


def test_conv2d_hand_sum():
    x = t(np.arange(1.0, 10.0).reshape(1, 1, 3, 3))
    w = t(np.ones((1, 1, 3, 3)))
    out = conv2d(x, w, stride=1, padding=0)
    assert out.shape == (1, 1, 1, 1)
    assert out.item() == 45.0


def test_conv2d_output_size_formula():
    x = t(np.zeros((1, 2, 11, 9)))
    w = t(np.zeros((5, 2, 3, 3)))
    out = conv2d(x, w, stride=2, padding=1)
    assert out.shape == (1, 5, (11 + 2 - 3) // 2 + 1, (9 + 2 - 3) // 2 + 1)


def test_conv2d_shape_errors():
    with pytest.raises(ValueError, match="channel"):
        conv2d(t(np.zeros((1, 2, 4, 4))), t(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ValueError, match="larger than"):
        conv2d(t(np.zeros((1, 1, 2, 2))), t(np.zeros((1, 1, 5, 5))))


def test_dense_identity_and_bias():
    x = t([[1.0, 2.0], [3.0, 4.0]])
    w = t(np.eye(2))
    b = t([0.0, 0.0])
    np.testing.assert_array_equal(dense(x, w, b).data, x.data)
    wz = t(np.zeros((2, 3)))
    b3 = t([5.0, 6.0, 7.0])
    out = dense(x, wz, b3)
    np.testing.assert_array_equal(out.data, np.tile(b3.data, (2, 1)))


def test_dense_hand_product():
    out = dense(t([[1.0, 2.0]]), t([[1.0], [1.0]]), t([1.0]))
    assert out.data.shape == (1, 1)
    assert out.item() == 4.0


def test_dense_mismatch():
    with pytest.raises(ValueError, match="dense shape"):
        dense(t(np.zeros((2, 3))), t(np.zeros((4, 2))))


# -- backward semantics --------------------------------------------------------

def test_backward_quadratic():
    with Tape() as tape:
        x = t([1.0, 2.0, 3.0])
        loss = mean(square(x)) * 3.0  # sum(x^2)
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0], rtol=1e-6)


def test_backward_constant_wrt_input():
    with Tape():
        x = t([1.0, 2.0])
        y = t([5.0, 5.0])
        loss = mean(y * y)
    loss.backward()
    assert x.grad is None
    assert y.grad is not None


def test_backward_accumulates_on_second_call():
    with Tape():
        x = t([1.0, 2.0])
        loss = mean(square(x))
    loss.backward()
    g1 = x.grad.copy()
    loss.backward()
    np.testing.assert_allclose(x.grad, 2.0 * g1, rtol=1e-6)


def test_backward_linearity():
    rng = np.random.default_rng(3)
    xv = rng.standard_normal(6).astype(np.float32)

    def run(which):
        with Tape():
            x = t(xv)
            l1 = mean(square(x))
            l2 = mean(abs_(x)) * 2.0
            loss = {"a": l1, "b": l2, "sum": l1 + l2}[which]
        loss.backward()
        return x.grad

    np.testing.assert_allclose(run("sum"), run("a") + run("b"), rtol=1e-5)


def test_backward_errors():
    with Tape():
        x = t([1.0, 2.0])
        y = square(x)
    with pytest.raises(ValueError, match="scalar"):
        y.backward()
    z = t([1.0])  # leaf, no graph
    with pytest.raises(GraphError):
        z.backward()
    with no_grad():
        with Tape():
            q = square(t([2.0]))
    with pytest.raises(GraphError):
        q.backward()


def test_gradient_contributions_sum_for_shared_input():
    # d appears in two branches; contributions must accumulate, not overwrite
    with Tape():
        d = t([1.0, 2.0])
        loss = mean(square(d)) + mean(d * 3.0)
    loss.backward()
    np.testing.assert_allclose(d.grad, [1.0 + 1.5, 2.0 + 1.5], rtol=1e-6)


# -- finite-difference property test over the whole op set ---------------------

def _composite(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((2, 1, 8, 8)).astype(np.float32), requires_grad=True)
    w1 = Tensor(0.5 * rng.standard_normal((3, 1, 3, 3)).astype(np.float32), requires_grad=True)
    wt = Tensor(0.5 * rng.standard_normal((3, 2, 3, 3)).astype(np.float32), requires_grad=True)
    wd = Tensor(0.5 * rng.standard_normal((8, 4)).astype(np.float32), requires_grad=True)
    bd = Tensor(0.1 * rng.standard_normal(4).astype(np.float32), requires_grad=True)

    def fn(x_, w1_, wt_, wd_, bd_):
        h = leaky_relu(conv2d(x_, w1_, stride=2, padding=1))        # (2,3,4,4)
        u = sigmoid(conv_transpose2d(h, wt_, 2, 1, 1))              # (2,2,8,8)
        u = crop2d(u, 4, 4)                                         # (2,2,4,4)
        u = permute(u, (0, 2, 3, 1))                                # (2,4,4,2)
        flat = reshape(u, (2 * 4, 8))
        z = dense(flat, wd_, bd_)
        # keep the |.| argument away from its kink: finite differences are
        # invalid within `step` of a non-smooth point
        return mean(abs_(sigmoid(z) + 0.5)) + sqrt(mean(square(z)) + 1e-6)

    return fn, [x, w1, wt, wd, bd], ["x", "w1", "wt", "wd", "bd"]


@pytest.mark.parametrize("seed", range(100))
def test_autodiff_matches_finite_differences(seed):
    # step 1e-5 (not the 1e-3 default) keeps central differences valid near
    # the leaky-relu kink; the float64 shadow keeps roundoff far below tol
    fn, params, names = _composite(seed)
    report = grad_check(fn, params, step=1e-5, max_elems_per_param=4,
                        names=names, seed=seed)
    assert report.max_rel_error < 1e-3, str(report)


@pytest.mark.parametrize("sign", [-1.0, 1.0])
def test_abs_gradient_both_branches(sign):
    rng = np.random.default_rng(17)
    x = Tensor((sign * (1.0 + rng.random(12))).astype(np.float32), requires_grad=True)

    def fn(x_):
        return mean(abs_(x_) * abs_(x_) + abs_(x_))

    report = grad_check(fn, [x], step=1e-3)
    assert report.max_rel_error < 1e-5


def test_gradcheck_identity_net_is_exact():
    def fn(x):
        return mean(x)
    x = Tensor(np.random.default_rng(0).standard_normal(10).astype(np.float32),
               requires_grad=True)
    report = grad_check(fn, [x], step=1e-3)
    assert report.max_rel_error < 1e-9


def test_gradcheck_conv_only_net():
    rng = np.random.default_rng(7)
    x = Tensor(rng.standard_normal((1, 2, 6, 6)).astype(np.float32), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)).astype(np.float32), requires_grad=True)

    def fn(x_, w_):
        return mean(square(conv2d(x_, w_, stride=1, padding=1)))

    report = grad_check(fn, [x, w], step=1e-3)
    assert report.max_rel_error < 1e-4


# -- determinism ----------------------------------------------------------------

def test_forward_bit_determinism():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((4, 1, 16, 16)).astype(np.float32)
    w = rng.standard_normal((8, 1, 3, 3)).astype(np.float32)
    a = conv2d(Tensor(x), Tensor(w), 2, 1).data
    b = conv2d(Tensor(x), Tensor(w), 2, 1).data
    assert a.tobytes() == b.tobytes()


# -- Adam -----------------------------------------------------------------------

def test_adam_zero_grad_no_move():
    p = Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros(2, dtype=np.float32)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_adam_descends_against_gradient_sign():
    p = Tensor(np.array([0.0], dtype=np.float32), requires_grad=True)
    opt = Adam([p], lr=0.05)
    for _ in range(3):
        p.grad = np.array([2.5], dtype=np.float32)
        opt.step()
    assert p.data[0] < 0.0


def test_adam_missing_grad_raises():
    p = Tensor(np.zeros(2, dtype=np.float32), requires_grad=True)
    opt = Adam([p])
    with pytest.raises(RuntimeError, match="missing gradient"):
        opt.step()


def test_adam_minimizes_quadratic():
    target = 3.0
    p = Tensor(np.array([-1.0], dtype=np.float32), requires_grad=True)
    opt = Adam([p], lr=1e-2)
    for _ in range(2000):
        with Tape():
            diff = p - target
            loss = mean(square(diff))
        loss.backward()
        opt.step()
    assert abs(p.data[0] - target) < 1e-3
