import numpy as np
import pytest

from nopkit import tensor_ops as T
from nopkit.autodiff import AutodiffError, Param, Tape, Var
from gradcheck import check_gradients
from oracles import naive_spectral_multiply_1d, naive_spectral_multiply_2d


def test_record_add_backward_distributes_seed():
    tape = Tape()
    x = Param("x", np.array([1.0, 2.0]))
    y = Param("y", np.array([3.0, 4.0]))
    tape.add(x, y)
    g = np.array([0.5, -2.0])
    tape.backward(g)
    np.testing.assert_array_equal(x.grad, g)
    np.testing.assert_array_equal(y.grad, g)


def test_gelu_backward_matches_analytic_derivative():
    tape = Tape()
    x = Param("x", np.array([1.0]))
    tape.sum_all(tape.gelu(x))
    tape.backward(np.asarray(1.0))
    # Phi(1) + phi(1) = 0.841344746... + 0.241970725... = 1.083315471...
    assert abs(float(x.grad[0]) - 1.0833154705876864) < 1e-12


def test_sum_of_squares_gradient():
    p = Param("p", np.array([1.0, -2.0, 3.0]))
    tape = Tape()
    tape.sum_all(tape.mul(p, p))
    tape.backward(np.asarray(1.0))
    np.testing.assert_allclose(p.grad, 2 * p.value)


def test_unsupported_primitive_rejected():
    tape = Tape()
    with pytest.raises(AutodiffError, match="unsupported primitive"):
        tape.apply("matmul", Var(np.zeros(2)), Var(np.zeros(2)))


def test_apply_dispatch_matches_method():
    tape = Tape()
    x = Var(np.array([1.0, 2.0]))
    out = tape.apply("add", x, x)
    np.testing.assert_array_equal(out.value, [2.0, 4.0])


def test_backward_seed_shape_mismatch():
    tape = Tape()
    x = Param("x", np.zeros((2, 3)))
    tape.gelu(x)
    with pytest.raises(AutodiffError, match="seed shape"):
        tape.backward(np.zeros(5))


def test_backward_linearity_and_determinism():
    rng = np.random.default_rng(0)
    x = Param("x", rng.normal(size=(4,)))
    proj1, proj2 = rng.normal(size=4), rng.normal(size=4)

    def run(proj):
        x.zero_grad()
        tape = Tape()
        tape.sum_all(tape.cmul(tape.gelu(x), proj))
        tape.backward(np.asarray(1.0))
        return x.grad.copy()

    g1, g2, g12 = run(proj1), run(proj2), run(proj1 + proj2)
    np.testing.assert_allclose(g1 + g2, g12, rtol=1e-12)
    # bitwise repeatability over the same tape
    x.zero_grad()
    tape = Tape()
    tape.sum_all(tape.gelu(x))
    tape.backward(np.asarray(1.0))
    first = x.grad.copy()
    x.zero_grad()
    tape.backward(np.asarray(1.0))
    assert np.array_equal(first, x.grad)


def test_shared_input_accumulates_both_paths():
    x = Param("x", np.array([2.0]))
    tape = Tape()
    y = tape.gelu(x)
    tape.sum_all(tape.add(y, y))
    tape.backward(np.asarray(1.0))
    assert abs(float(x.grad[0]) - 2 * float(T.gelu_grad(np.array([2.0]))[0])) < 1e-12


@pytest.mark.parametrize("op", ["add", "sub", "mul"])
def test_elementwise_gradients(op):
    rng = np.random.default_rng(1)
    a = Param("a", rng.normal(size=(2, 5, 3)))
    b = Param("b", rng.normal(size=(2, 5, 3)))
    check_gradients(lambda t: getattr(t, op)(a, b), [a, b], rng)


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(2)
    vals = rng.normal(size=(3, 8, 2))
    vals[np.abs(vals) < 0.1] += 0.2
    x = Param("x", vals)
    check_gradients(lambda t: t.relu(x), [x], rng)


@pytest.mark.parametrize("stride,padding", [(1, "circular"), (1, "zero"), (2, "circular"), (2, "zero")])
def test_conv1d_gradients(stride, padding):
    rng = np.random.default_rng(3)
    x = Param("x", rng.normal(size=(2, 9, 2)))
    w = Param("w", rng.normal(size=(3, 2, 3)))
    b = Param("b", rng.normal(size=(3,)))
    check_gradients(lambda t: t.conv(x, w, b, stride=stride, padding=padding), [x, w, b], rng)


@pytest.mark.parametrize("stride,padding", [(1, "circular"), (2, "zero")])
def test_conv2d_gradients(stride, padding):
    rng = np.random.default_rng(4)
    x = Param("x", rng.normal(size=(2, 6, 5, 2)))
    w = Param("w", rng.normal(size=(3, 3, 2, 2)))
    check_gradients(lambda t: t.conv(x, w, stride=stride, padding=padding), [x, w], rng)


def test_conv_size1_gradients():
    rng = np.random.default_rng(5)
    x = Param("x", rng.normal(size=(2, 7, 3)))
    w = Param("w", rng.normal(size=(1, 3, 4)))
    b = Param("b", rng.normal(size=(4,)))
    check_gradients(lambda t: t.conv(x, w, b, stride=1, padding=T.ZERO), [x, w, b], rng)


@pytest.mark.parametrize("padding,target", [("circular", 16), ("zero", 15), ("circular", 15)])
def test_conv_transpose_gradients(padding, target):
    rng = np.random.default_rng(6)
    x = Param("x", rng.normal(size=(2, 8, 2)))
    w = Param("w", rng.normal(size=(3, 3, 2)))
    check_gradients(lambda t: t.conv_transpose(x, w, (target,), padding=padding), [x, w], rng)


@pytest.mark.parametrize("d", [12, 13])
def test_fourier_roundtrip_gradients(d):
    rng = np.random.default_rng(7)
    x = Param("x", rng.normal(size=(2, d, 2)))
    mask = rng.normal(size=(d // 2 + 1, 1))

    def build(t):
        return t.irfft(t.cmul(t.rfft(x), mask), (d,))

    check_gradients(build, [x], rng)


def test_fourier_roundtrip_gradients_2d():
    rng = np.random.default_rng(8)
    x = Param("x", rng.normal(size=(1, 6, 7, 2)))
    mask = rng.normal(size=(6, 7 // 2 + 1, 1))

    def build(t):
        return t.irfft(t.cmul(t.rfft(x), mask), (6, 7))

    check_gradients(build, [x], rng)


@pytest.mark.parametrize("d,k_max", [(8, 3), (8, 5), (9, 4), (16, 4)])
def test_spectral_multiply_matches_naive_oracle_1d(d, k_max):
    rng = np.random.default_rng(9)
    c = 2
    x = rng.normal(size=(2, d, c))
    w_re = rng.normal(size=(k_max, c, c))
    w_im = rng.normal(size=(k_max, c, c))
    tape = Tape(grad=False)
    out = tape.spectral_multiply(Var(x), Var(w_re), Var(w_im), k_max).value
    ref = naive_spectral_multiply_1d(x, w_re, w_im, k_max)
    np.testing.assert_allclose(out, ref, atol=1e-10)


@pytest.mark.parametrize("d1,d2,k_max", [(8, 8, 3), (9, 8, 3), (8, 9, 4), (10, 8, 5)])
def test_spectral_multiply_matches_naive_oracle_2d(d1, d2, k_max):
    rng = np.random.default_rng(10)
    c = 2
    x = rng.normal(size=(2, d1, d2, c))
    shape = (2 * k_max - 1, k_max, c, c)
    w_re = rng.normal(size=shape)
    w_im = rng.normal(size=shape)
    tape = Tape(grad=False)
    out = tape.spectral_multiply(Var(x), Var(w_re), Var(w_im), k_max).value
    ref = naive_spectral_multiply_2d(x, w_re, w_im, k_max)
    np.testing.assert_allclose(out, ref, atol=1e-10)


def test_spectral_multiply_identity_full_retention():
    rng = np.random.default_rng(11)
    for d in (8, 9):
        m = d // 2 + 1
        x = rng.normal(size=(1, d, 1))
        w_re = np.ones((m, 1, 1))
        w_im = np.zeros((m, 1, 1))
        tape = Tape(grad=False)
        out = tape.spectral_multiply(Var(x), Var(w_re), Var(w_im), m).value
        np.testing.assert_allclose(out, x, atol=1e-12)


def test_spectral_multiply_zero_weights():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(1, 10, 3))
    tape = Tape(grad=False)
    out = tape.spectral_multiply(Var(x), Var(np.zeros((4, 3, 3))), Var(np.zeros((4, 3, 3))), 4).value
    assert not out.any()


@pytest.mark.parametrize("d,k_max", [(12, 4), (12, 7), (13, 5)])
def test_spectral_multiply_gradients_1d(d, k_max):
    rng = np.random.default_rng(13)
    c = 2
    x = Param("x", rng.normal(size=(2, d, c)))
    w_re = Param("w_re", rng.normal(size=(k_max, c, c)))
    w_im = Param("w_im", rng.normal(size=(k_max, c, c)))
    check_gradients(lambda t: t.spectral_multiply(x, w_re, w_im, k_max), [x, w_re, w_im], rng)


@pytest.mark.parametrize("d1,d2,k_max", [(8, 8, 3), (9, 7, 3), (10, 8, 5)])
def test_spectral_multiply_gradients_2d(d1, d2, k_max):
    rng = np.random.default_rng(14)
    c = 2
    x = Param("x", rng.normal(size=(1, d1, d2, c)))
    shape = (2 * k_max - 1, k_max, c, c)
    w_re = Param("w_re", rng.normal(size=shape))
    w_im = Param("w_im", rng.normal(size=shape))
    check_gradients(lambda t: t.spectral_multiply(x, w_re, w_im, k_max), [x, w_re, w_im], rng)


def test_spectral_multiply_bounds_checks():
    tape = Tape(grad=False)
    x = Var(np.zeros((1, 8, 2)))
    w = Var(np.zeros((6, 2, 2)))
    with pytest.raises(AutodiffError, match="out of range"):
        tape.spectral_multiply(x, w, w, 6)
    with pytest.raises(AutodiffError, match="shape"):
        tape.spectral_multiply(x, Var(np.zeros((3, 2, 2))), Var(np.zeros((3, 2, 2))), 4)
