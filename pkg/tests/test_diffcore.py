import numpy as np
import pytest

from conftest import fd_grad, max_rel_err

import inbetween.diffcore as dc
from inbetween.diffcore import Tape, Tensor


def test_matmul_identity():
    a = np.arange(9.0).reshape(3, 3)
    out = dc.matmul(Tensor(np.eye(3)), Tensor(a))
    assert np.array_equal(out.data, a)


def test_sum_of_concat_adds():
    a = np.array([1.0, 2.5, -3.0])
    b = np.array([4.0, 0.125])
    out = dc.sum_(dc.concat([Tensor(a), Tensor(b)]))
    assert out.item() == a.sum() + b.sum()


def test_softmax_uniform():
    out = dc.softmax(Tensor(np.zeros(3)))
    assert np.allclose(out.data, np.full(3, 1.0 / 3.0), atol=1e-15)


def test_shape_mismatch_raises():
    with pytest.raises(dc.ShapeError):
        dc.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
    with pytest.raises(dc.ShapeError):
        dc.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_arccos_clamps_instead_of_erroring():
    out = dc.arccos(Tensor(np.array([1.5, -2.0, 0.0])))
    assert np.isfinite(out.data).all()
    assert out.data[0] == pytest.approx(np.arccos(1.0 - dc.ACOS_CLAMP))
    assert out.data[1] == pytest.approx(np.arccos(-1.0 + dc.ACOS_CLAMP))


def test_nonfinite_detected():
    with np.errstate(divide="ignore"):
        with pytest.raises(dc.NonFiniteError):
            dc.div(Tensor(np.ones(2)), Tensor(np.zeros(2)))


def test_simple_gradient():
    with Tape() as tape:
        x = tape.watch(Tensor(3.0))
        loss = dc.mul(x, x)
        (g,) = dc.backward(loss, [x])
    assert g.item() == pytest.approx(6.0)


def test_abs_tie_subgradient_is_zero():
    with Tape() as tape:
        x = tape.watch(Tensor(np.array([1.0, 2.0, 3.0])))
        y = Tensor(np.array([1.0, 2.0, 3.0]))
        loss = dc.mean(dc.abs_(dc.sub(x, y)))
        (g,) = dc.backward(loss, [x])
    assert np.array_equal(g.data, np.zeros(3))


def test_abs_gradient_matches_fd_away_from_ties(rng):
    x0 = rng.normal(size=6)
    y0 = rng.normal(size=6)

    def f(x):
        return float(np.mean(np.abs(x - y0)))

    with Tape() as tape:
        x = tape.watch(Tensor(x0))
        loss = dc.mean(dc.abs_(dc.sub(x, Tensor(y0))))
        (g,) = dc.backward(loss, [x])
    assert max_rel_err(g.data, fd_grad(f, x0)) < 1e-6


def test_unused_target_gets_zeros():
    with Tape() as tape:
        x = tape.watch(Tensor(np.ones(4)))
        unused = tape.watch(Tensor(np.ones(2)))
        loss = dc.sum_(dc.mul(x, x))
        gx, gu = dc.backward(loss, [x, unused])
    assert np.array_equal(gx.data, 2 * np.ones(4))
    assert np.array_equal(gu.data, np.zeros(2))


def test_off_tape_target_errors():
    with Tape() as tape:
        x = tape.watch(Tensor(np.ones(3)))
        loss = dc.sum_(x)
        stranger = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(dc.TapeError):
            dc.backward(loss, [stranger])


def _composite(x_t):
    # exercises matmul, slicing, reductions, nonlinearities, softmax, LN
    w = Tensor(np.linspace(-1.0, 1.0, 20).reshape(5, 4))
    h = dc.matmul(x_t, w)
    h = dc.tanh(h)
    h = dc.layer_norm(h, axis=-1)
    att = dc.softmax(dc.matmul(h, dc.transpose(h)), axis=-1)
    mixed = dc.matmul(att, h)
    part = mixed[1:, :2]
    return dc.mean(dc.exp(dc.mul(part, 0.3))) + dc.sum_(dc.sqrt(dc.abs_(h))) * 0.01


@pytest.mark.parametrize("seed", range(5))
def test_composite_gradient_vs_fd(seed):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=(3, 5))

    def f(x):
        with Tape():
            return _composite(Tensor(x)).item()

    with Tape() as tape:
        x = tape.watch(Tensor(x0.copy()))
        loss = _composite(x)
        (g,) = dc.backward(loss, [x])
    assert max_rel_err(g.data, fd_grad(f, x0)) <= 1e-4


def test_gather_accumulates_repeats():
    with Tape() as tape:
        x = tape.watch(Tensor(np.array([1.0, 2.0, 3.0])))
        picked = dc.gather(x, [0, 0, 2])
        loss = dc.sum_(picked)
        (g,) = dc.backward(loss, [x])
    assert np.array_equal(g.data, np.array([2.0, 0.0, 1.0]))


def test_broadcast_to_gradient_sums():
    with Tape() as tape:
        x = tape.watch(Tensor(np.array([[1.0, 2.0]])))
        y = dc.broadcast_to(x, (4, 2))
        loss = dc.sum_(y)
        (g,) = dc.backward(loss, [x])
    assert np.array_equal(g.data, np.array([[4.0, 4.0]]))


def test_batched_matmul_gradient(rng):
    a0 = rng.normal(size=(4, 3, 5))
    b0 = rng.normal(size=(5, 2))

    def f(b):
        return float(np.sum(np.tanh(a0 @ b)))

    with Tape() as tape:
        b = tape.watch(Tensor(b0.copy()))
        loss = dc.sum_(dc.tanh(dc.matmul(Tensor(a0), b)))
        (g,) = dc.backward(loss, [b])
    assert max_rel_err(g.data, fd_grad(f, b0)) <= 1e-5


def test_linearity_of_backward(rng):
    x0 = rng.normal(size=7)
    a, b = 2.25, -0.75

    def grads(scale1, scale2):
        with Tape() as tape:
            x = tape.watch(Tensor(x0.copy()))
            l1 = dc.sum_(dc.sin(x))
            l2 = dc.mean(dc.mul(x, x))
            loss = dc.add(dc.mul(l1, scale1), dc.mul(l2, scale2))
            (g,) = dc.backward(loss, [x])
        return g.data

    combined = grads(a, b)
    separate = a * grads(1.0, 0.0) + b * grads(0.0, 1.0)
    assert np.max(np.abs(combined - separate)) <= 1e-12


def test_forward_and_backward_bit_deterministic(rng):
    x0 = rng.normal(size=(3, 5))

    def run():
        with Tape() as tape:
            x = tape.watch(Tensor(x0.copy()))
            loss = _composite(x)
            (g,) = dc.backward(loss, [x])
        return loss.item(), g.data.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    assert np.array_equal(g1, g2)


def test_stop_gradient_blocks():
    with Tape() as tape:
        x = tape.watch(Tensor(np.array([2.0])))
        blocked = dc.stop_gradient(dc.mul(x, x))
        loss = dc.sum_(dc.mul(blocked, x))
        (g,) = dc.backward(loss, [x])
    assert g.data[0] == pytest.approx(4.0)  # only the direct factor
