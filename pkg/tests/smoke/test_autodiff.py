import numpy as np
import pytest

from src.autodiff import OptimizerState, Tape, Tensor, adamw_step, ops, zero_grad
from src.autodiff.gradcheck import analytic_gradients, check_gradients
from src.errors import ShapeError

TOL = 1e-4


def _param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _weights(rng, shape):
    # fixed random projection so every output element matters to the scalar loss
    return Tensor(rng.standard_normal(shape))


def _primitive_cases(rng):
    a, b = _param(rng, 3, 4), _param(rng, 3, 4)
    row = _param(rng, 4)
    m, n = _param(rng, 2, 3), _param(rng, 3, 5)
    nt = _param(rng, 5, 3)
    x, w, bias = _param(rng, 4, 3), _param(rng, 3, 2), _param(rng, 2)
    target = Tensor(rng.standard_normal((3, 4)))
    p34 = _weights(rng, (3, 4))
    p25 = _weights(rng, (2, 5))
    p42 = _weights(rng, (4, 2))
    p43 = _weights(rng, (4, 3))
    return {
        "add": (lambda: ops.sum(ops.mul(ops.add(a, row), p34)), [a, row]),
        "sub": (lambda: ops.sum(ops.mul(ops.sub(a, b), p34)), [a, b]),
        "mul": (lambda: ops.sum(ops.mul(ops.mul(a, b), p34)), [a, b]),
        "relu": (lambda: ops.sum(ops.mul(ops.relu(a), p34)), [a]),
        "tanh": (lambda: ops.sum(ops.mul(ops.tanh(a), p34)), [a]),
        "softmax": (lambda: ops.sum(ops.mul(ops.softmax(a, axis=-1), p34)), [a]),
        "matmul": (lambda: ops.sum(ops.mul(ops.matmul(m, n), p25)), [m, n]),
        "matmul_transpose_b": (lambda: ops.sum(ops.mul(ops.matmul(m, nt, transpose_b=True), p25)), [m, nt]),
        "affine": (lambda: ops.sum(ops.mul(ops.affine(x, w, bias), p42)), [x, w, bias]),
        "sum_axis": (lambda: ops.sum(ops.mul(ops.sum(a, axis=0), row)), [a, row]),
        "mean": (lambda: ops.mean(ops.mul(ops.mean(a, axis=1, keepdims=True), a)), [a]),
        "mse": (lambda: ops.mse(a, target), [a]),
        "concat": (lambda: ops.sum(ops.mul(ops.concat([m, m], axis=0), p43)), [m]),
        "getitem": (lambda: ops.sum(ops.mul(ops.getitem(a, np.array([0, 2, 2])), p34)), [a]),
        "broadcast_to": (lambda: ops.sum(ops.mul(ops.broadcast_to(row, (3, 4)), p34)), [row]),
        "reshape": (lambda: ops.sum(ops.mul(ops.reshape(a, (4, 3)), p43)), [a]),
    }


def test_square_value_and_derivative():
    x = Tensor(3.0, requires_grad=True)
    tape = Tape()
    with tape:
        y = ops.mul(x, x)
    assert y.item() == 9.0, "x^2 at 3 should be 9"
    zero_grad([x])
    tape.backward(y)
    assert float(x.grad) == pytest.approx(6.0), "d(x^2)/dx at 3 should be 6"


def test_relu_negative_branch():
    assert ops.relu(Tensor(-2.0)).item() == 0.0, "relu(-2) should be 0"


def test_disconnected_leaf_gets_zero_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    unused = Tensor(np.ones(2), requires_grad=True)
    zero_grad([x, unused])
    tape = Tape()
    with tape:
        loss = ops.sum(ops.mul(x, x))
        ops.mul(unused, 2.0)
    tape.backward(loss)
    assert np.array_equal(unused.grad, np.zeros(2)), "leaf off the loss path must keep a zero gradient"


def test_leaf_never_recorded_gets_zero_gradient():
    a = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    tape = Tape()
    with tape:
        loss = ops.sum(ops.mul(a, a))
    tape.backward(loss, wrt=[a, b])
    assert np.array_equal(a.grad, np.array([2.0, -4.0])), "d sum(a^2)/da = 2a"
    assert np.array_equal(b.grad, np.zeros(3)), "a listed leaf the tape never saw gets an exact zero"
    state = OptimizerState.for_params([a, b], lr=0.1)
    adamw_step([a, b], state)
    assert np.array_equal(b.data, np.ones(3)), "a zero gradient leaves the parameter in place"


@pytest.mark.parametrize("seed", range(100))
def test_every_primitive_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    for name, (loss_fn, params) in _primitive_cases(rng).items():
        err = check_gradients(loss_fn, params)
        assert err < TOL, f"{name}: relative error {err:.2e} (seed {seed})"


def test_two_hidden_layer_network_gradients():
    rng = np.random.default_rng(7)
    x = Tensor(rng.standard_normal((5, 4)))
    y = Tensor(rng.standard_normal((5, 2)))
    w1, b1 = _param(rng, 4, 6), _param(rng, 6)
    w2, b2 = _param(rng, 6, 6), _param(rng, 6)
    w3, b3 = _param(rng, 6, 2), _param(rng, 2)

    def loss_fn():
        h = ops.tanh(ops.affine(x, w1, b1))
        h = ops.relu(ops.affine(h, w2, b2))
        return ops.mse(ops.affine(h, w3, b3), y)

    err = check_gradients(loss_fn, [w1, b1, w2, b2, w3, b3])
    assert err < TOL, f"network gradient relative error {err:.2e}"


def test_tanh_network_matches_straight_line_numpy():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3))
    layers = [(rng.standard_normal((3, 4)), rng.standard_normal(4)),
              (rng.standard_normal((4, 4)), rng.standard_normal(4)),
              (rng.standard_normal((4, 1)), rng.standard_normal(1))]
    h = Tensor(x)
    for w, b in layers:
        h = ops.tanh(ops.affine(h, w, b))

    expected = np.empty((2, 1))
    for i in range(2):
        v = list(x[i])
        for w, b in layers:
            v = [np.tanh(sum(v[k] * w[k, j] for k in range(len(v))) + b[j]) for j in range(w.shape[1])]
        expected[i] = v
    assert np.allclose(h.data, expected, atol=1e-12), "tape forward differs from scalar evaluation"


def test_backward_rejects_non_scalar_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    tape = Tape()
    with tape:
        y = ops.mul(x, 2.0)
    with pytest.raises(ShapeError):
        tape.backward(y)


def test_backward_before_forward_fails():
    with pytest.raises(RuntimeError):
        Tape().backward(Tensor(1.0))


def test_shape_error_names_primitive():
    with pytest.raises(ShapeError, match="matmul"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    with pytest.raises(ShapeError, match="add"):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_repeated_backward_is_bit_identical():
    rng = np.random.default_rng(11)
    w = _param(rng, 4, 3)
    x = Tensor(rng.standard_normal((6, 4)))

    def loss_fn():
        return ops.mean(ops.tanh(ops.matmul(x, w)))

    first = analytic_gradients(loss_fn, [w])[0]
    second = analytic_gradients(loss_fn, [w])[0]
    assert np.array_equal(first, second), "gradients from identical passes must match bit for bit"


def test_gradient_is_linear_in_the_loss():
    rng = np.random.default_rng(5)
    w = _param(rng, 3, 3)
    x = Tensor(rng.standard_normal((4, 3)))
    g1 = analytic_gradients(lambda: ops.mean(ops.tanh(ops.matmul(x, w))), [w])[0]
    g2 = analytic_gradients(lambda: ops.sum(ops.mul(w, w)), [w])[0]
    both = analytic_gradients(
        lambda: ops.add(ops.mean(ops.tanh(ops.matmul(x, w))), ops.sum(ops.mul(w, w))), [w]
    )[0]
    assert np.allclose(both, g1 + g2, atol=1e-12), "gradient of a sum must be the sum of gradients"


def test_fan_out_accumulates():
    x = Tensor(2.0, requires_grad=True)
    zero_grad([x])
    tape = Tape()
    with tape:
        y = ops.add(ops.mul(x, 3.0), ops.mul(x, x))
    tape.backward(y)
    assert float(x.grad) == pytest.approx(7.0), "3x + x^2 at 2 has derivative 7"


# ============================================================================
# AdamW
# ============================================================================

def test_adamw_zero_gradient_is_fixed_point():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.zero_grad()
    state = OptimizerState.for_params([p], lr=0.01)
    adamw_step([p], state)
    assert np.array_equal(p.data, [1.0, -2.0]), "zero gradient without decay must not move parameters"
    assert state.step == 1, "step counter should advance"


def test_adamw_first_step_moves_by_lr():
    p = Tensor(1.0, requires_grad=True)
    p.grad = np.array(1.0)
    adamw_step([p], OptimizerState.for_params([p], lr=0.01))
    assert p.item() == pytest.approx(0.99, abs=1e-7), "bias-corrected first step moves by lr"
    assert np.array_equal(p.grad, 1.0), "gradients must be left untouched"


def test_adamw_decoupled_decay():
    p = Tensor(np.array([2.0, -4.0]), requires_grad=True)
    p.zero_grad()
    adamw_step([p], OptimizerState.for_params([p], lr=0.1, weight_decay=0.5))
    assert np.allclose(p.data, np.array([2.0, -4.0]) * (1 - 0.1 * 0.5), rtol=0, atol=1e-15), \
        "zero gradient with decay shrinks by (1 - lr * decay)"


def test_adamw_requires_gradients():
    p = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(ValueError, match="no gradient"):
        adamw_step([p], OptimizerState.for_params([p]))
