import numpy as np
import pytest

from autograd import functional as F
from autograd.optim import SGD, Adam, adam_step, make_optimizer
from autograd.ste import fake_quantize_ste, ste_quantizer_grads
from autograd.tape import AutogradError, Parameter, Tape, Var, backward, no_grad
from quant.quantizer import fake_quantize_array, levels
from tests.gradcheck import check_grads, numeric_grad


# ==================================================
# GRADIENT CHECK
# ==================================================
def _normal(*shapes):
    return lambda r: [r.standard_normal(s) for s in shapes]


def _off_zero(shape, gap=1e-3):
    """Giá trị chuẩn cách 0 ít nhất `gap` (tránh điểm gãy của |x|)"""
    def make(r):
        x = r.standard_normal(shape)
        return np.where(x >= 0, x + gap, x - gap)
    return make


def _l1_pair(shape):
    def make(r):
        a = r.standard_normal(shape)
        return [a, a - _off_zero(shape)(r)]
    return make


def _distinct(shape, step=0.1):
    """Các giá trị đôi một cách nhau `step` (max pool không có hòa)"""
    return lambda r: [r.permutation(int(np.prod(shape))).reshape(shape) * step]


OPS = {
    'add_broadcast': (F.add, _normal((2, 3), (1, 3))),
    'sub_broadcast': (F.sub, _normal((2, 3, 4), (4,))),
    'mul_broadcast': (F.mul, _normal((2, 3, 4), (3, 1))),
    'div': (F.div, lambda r: [r.standard_normal((2, 3)), r.uniform(0.5, 2.0, (2, 3))]),
    'neg': (F.neg, _normal((3, 2))),
    'abs': (F.abs, lambda r: [_off_zero((3, 4))(r)]),
    'exp': (F.exp, _normal((2, 3))),
    'gelu': (F.gelu, _normal((2, 5))),
    'sum_axis': (lambda a: F.sum(a, axis=1), _normal((2, 3, 4))),
    'mean_axes_keepdims': (lambda a: F.mean(a, axis=(0, 2), keepdims=True), _normal((2, 3, 4))),
    'matmul_batched': (F.matmul, _normal((2, 3, 4), (4, 5))),
    'l2_normalize': (lambda a: F.l2_normalize(a, axis=-1), _normal((3, 4))),
    'transpose': (lambda a: F.transpose(a, (2, 0, 1)), _normal((2, 3, 4))),
    'swap_last': (F.swap_last, _normal((2, 3, 4))),
    'reshape': (lambda a: F.reshape(a, (6, 4)), _normal((2, 3, 4))),
    'concat': (lambda a, b: F.concat([a, b], axis=1), _normal((2, 3), (2, 2))),
    'slice': (lambda a: F.slice_axis(a, 1, 3, axis=2), _normal((2, 3, 4))),
    'gather_repeated': (lambda a: F.gather(a, np.array([0, 2, 2, 1]), axis=1), _normal((2, 3))),
    'roll': (lambda a: F.roll(a, (1, -2), (2, 3)), _normal((1, 2, 4, 5))),
    'reflect_pad': (lambda a: F.reflect_pad(a, 2, 1), _normal((1, 2, 4, 5))),
    'crop': (lambda a: F.crop(a, 3, 2), _normal((1, 2, 4, 5))),
    'pixel_shuffle': (lambda a: F.pixel_shuffle(a, 2), _normal((1, 8, 2, 3))),
    'conv2d': (lambda x, w, b: F.conv2d(x, w, b, padding=1),
               _normal((2, 3, 5, 4), (2, 3, 3, 3), (2,))),
    'conv2d_stride_groups': (lambda x, w: F.conv2d(x, w, stride=2, padding=1, groups=2),
                             _normal((1, 4, 5, 5), (4, 2, 3, 3))),
    'conv2d_depthwise': (lambda x, w: F.conv2d(x, w, padding=1, groups=3),
                         _normal((1, 3, 4, 4), (3, 1, 3, 3))),
    'max_pool': (lambda x: F.max_pool2d(x, 3, 1, 1), _distinct((1, 2, 4, 4))),
    'softmax': (lambda x: F.softmax(x, axis=-1), _normal((3, 5))),
    'layer_norm': (F.layer_norm, _normal((1, 4, 2, 3), (4,), (4,))),
    'l1_loss': (F.l1_loss, _l1_pair((2, 3, 2, 2))),
}


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_central_differences(name, seed):
    op, make_inputs = OPS[name]
    inputs = make_inputs(np.random.default_rng(seed))
    check_grads(op, inputs, seed=seed)


# ==================================================
# TAPE
# ==================================================
def test_weighted_sum_gradient_is_input(rng):
    x = rng.standard_normal(5)
    w = Parameter(rng.standard_normal(5))
    with Tape() as tape:
        loss = F.sum(F.mul(w, x))
        tape.backward(loss, [w])
    np.testing.assert_allclose(w.grad, x)


def test_unused_parameter_gets_zero_grad(rng):
    w = Parameter(rng.standard_normal(3))
    unused = Parameter(np.ones(4))
    unused.grad[:] = 7.0
    with Tape() as tape:
        loss = F.sum(w)
        tape.backward(loss, [w, unused])
    np.testing.assert_array_equal(unused.grad, np.zeros(4))


def test_non_scalar_loss_is_rejected():
    w = Parameter(np.ones(3))
    with Tape() as tape:
        out = F.mul(w, 2.0)
        with pytest.raises(AutogradError):
            tape.backward(out)


def test_reused_input_accumulates(rng):
    x = Parameter(rng.standard_normal(4))
    with Tape() as tape:
        loss = F.sum(F.mul(x, x))
        tape.backward(loss, [x])
    np.testing.assert_allclose(x.grad, 2.0 * x.value)


def test_second_backward_overwrites_grad(rng):
    w = Parameter(rng.standard_normal(3))
    for _ in range(2):
        with Tape() as tape:
            loss = F.sum(F.mul(w, 3.0))
            tape.backward(loss, [w])
    np.testing.assert_allclose(w.grad, np.full(3, 3.0))


def test_no_grad_records_nothing():
    w = Parameter(np.ones(3))
    with Tape() as tape:
        with no_grad():
            F.sum(F.mul(w, w))
        assert len(tape) == 0


def test_ops_outside_tape_are_not_tracked():
    out = F.add(Parameter(np.ones(2)), 1.0)
    assert not out.requires_grad


def test_backward_without_tape_zeroes_params():
    w = Parameter(np.ones(2))
    w.grad[:] = 5.0
    backward(Var(np.array(1.0)), params=[w])
    np.testing.assert_array_equal(w.grad, 0.0)


def test_operator_overloads_build_graph(rng):
    a = Parameter(rng.standard_normal(3))
    b = Parameter(rng.standard_normal(3))
    with Tape() as tape:
        loss = F.sum((a * b + 1.0 - a) / 2.0)
        tape.backward(loss, [a, b])
    np.testing.assert_allclose(a.grad, (b.value - 1.0) / 2.0)
    np.testing.assert_allclose(b.grad, a.value / 2.0)


def test_batch_gradient_is_sum_of_sample_gradients(rng):
    """grad của loss trên batch bằng tổng grad từng mẫu (loss dạng tổng)"""
    x = rng.standard_normal((2, 2, 5, 5))
    w = Parameter(rng.standard_normal((3, 2, 3, 3)))

    def grad_for(batch):
        with Tape() as tape:
            loss = F.sum(F.gelu(F.conv2d(batch, w, padding=1)))
            tape.backward(loss, [w])
        return w.grad.copy()

    total = grad_for(x)
    parts = grad_for(x[:1]) + grad_for(x[1:])
    np.testing.assert_allclose(total, parts, atol=1e-10)


def test_conv_gelu_toy_trains(rng):
    x = rng.standard_normal((4, 1, 6, 6))
    target = np.maximum(x, 0.0)
    w = Parameter(rng.standard_normal((1, 1, 3, 3)) * 0.1)
    b = Parameter(np.zeros(1))
    optimizer = Adam([w, b], lr=0.05)

    def step():
        with Tape() as tape:
            loss = F.l1_loss(F.gelu(F.conv2d(x, w, b, padding=1)), target)
            tape.backward(loss, [w, b])
        return float(loss.value)

    first = step()
    for _ in range(60):
        optimizer.step()
        last = step()
    assert last < first


# ==================================================
# STRAIGHT-THROUGH ESTIMATOR
# ==================================================
def test_ste_on_grid_has_zero_boundary_grad():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    dx, dl, du = ste_quantizer_grads(x, 0.0, 3.0, 2)
    np.testing.assert_array_equal(dx, 1.0)
    np.testing.assert_array_equal(dl, 0.0)
    np.testing.assert_array_equal(du, 0.0)


def test_ste_saturation_routes_to_bounds():
    dx, dl, du = ste_quantizer_grads(np.array([-1.0, 5.0]), 0.0, 3.0, 2)
    np.testing.assert_array_equal(dx, [0.0, 0.0])
    np.testing.assert_array_equal(dl, [1.0, 0.0])
    np.testing.assert_array_equal(du, [0.0, 1.0])


def _ste_points(rng, l0, u0, bits, count=24, gap=1e-3):
    """Điểm cách mọi bước nhảy làm tròn và hai biên ít nhất `gap`"""
    s0 = (u0 - l0) / levels(bits)
    x = rng.uniform(l0 - 0.5, u0 + 0.5, size=4 * count)
    q = (x - l0) / s0
    inside = (x >= l0) & (x <= u0)
    jump = np.abs(q - np.floor(q) - 0.5) * s0
    edge = np.minimum(np.abs(x - l0), np.abs(x - u0))
    keep = (edge >= gap) & (~inside | (jump >= gap))
    return x[keep][:count]


@pytest.mark.parametrize("seed", range(20))
def test_ste_matches_fixed_rounding_surrogate(seed):
    """Trong khoảng: x̂ ≈ x + s·δ với δ = ⌊q⌉ − q cố định; ngoài khoảng x̂ = l hoặc u"""
    rng = np.random.default_rng(seed)
    bits = int(rng.choice([2, 3, 4, 8]))
    n = levels(bits)
    l0 = rng.uniform(-2.0, 0.0)
    u0 = l0 + rng.uniform(1.5, 3.0)
    x = _ste_points(rng, l0, u0, bits)
    assert ((x > l0) & (x < u0)).sum() >= 4
    q = (x - l0) / ((u0 - l0) / n)
    delta = np.rint(q) - q
    _, dl, du = ste_quantizer_grads(x, l0, u0, bits)

    def surrogate(i, lv, uv):
        if x[i] < l0:
            return lv
        if x[i] > u0:
            return uv
        return x[i] + (uv - lv) / n * delta[i]

    for i in range(x.size):
        num_l = numeric_grad(lambda v: surrogate(i, v[0], u0), np.array([l0]))[0]
        num_u = numeric_grad(lambda v: surrogate(i, l0, v[0]), np.array([u0]))[0]
        assert dl[i] == pytest.approx(num_l, abs=1e-6)
        assert du[i] == pytest.approx(num_u, abs=1e-6)


def test_ste_forward_equals_fake_quantizer(rng):
    x = rng.uniform(-2, 2, size=(2, 3)).astype(np.float32)
    out = fake_quantize_ste(Var(x), Var(np.float32(-1.0)), Var(np.float32(1.0)), 4)
    np.testing.assert_array_equal(out.value, fake_quantize_array(x, -1.0, 1.0, 4))


def test_ste_per_channel_bounds_through_tape(rng):
    x = Parameter(rng.uniform(-1.5, 1.5, size=(1, 2, 3, 3)))
    l = Parameter(np.array([-1.0, -0.5]).reshape(1, 2, 1, 1))
    u = Parameter(np.array([1.0, 0.5]).reshape(1, 2, 1, 1))
    with Tape() as tape:
        loss = F.sum(fake_quantize_ste(x, l, u, 4))
        tape.backward(loss, [x, l, u])
    dx, dl, du = ste_quantizer_grads(x.value, l.value, u.value, 4)
    np.testing.assert_allclose(x.grad, dx)
    np.testing.assert_allclose(l.grad, dl.sum(axis=(0, 2, 3), keepdims=True))
    np.testing.assert_allclose(u.grad, du.sum(axis=(0, 2, 3), keepdims=True))


def test_ste_passthrough_returns_input():
    x = Var(np.ones(3))
    assert fake_quantize_ste(x, Var(0.0), Var(1.0), 32) is x


# ==================================================
# OPTIMIZERS
# ==================================================
def test_adam_zero_grad_keeps_values():
    p = Parameter(np.array([1.0, -2.0]))
    Adam([p], lr=0.1).step()
    np.testing.assert_array_equal(p.value, [1.0, -2.0])


def test_adam_first_step_moves_by_lr():
    p = Parameter(np.array([1.0, -2.0]))
    p.grad[:] = [3.0, -0.5]
    optimizer = adam_step([p], lr=0.1)
    np.testing.assert_allclose(p.value, [0.9, -1.9], atol=1e-6)
    assert optimizer.steps == 1


def test_adam_is_deterministic(rng):
    grads = rng.standard_normal((5, 3))
    results = []
    for _ in range(2):
        p = Parameter(np.zeros(3))
        optimizer = Adam([p], lr=0.01)
        for g in grads:
            p.grad = g.copy()
            optimizer.step()
        results.append(p.value.copy())
    np.testing.assert_array_equal(results[0], results[1])


def test_frozen_parameter_is_not_updated():
    p = Parameter(np.ones(2), trainable=False)
    p.grad = np.ones(2)
    SGD([p], lr=1.0).step()
    np.testing.assert_array_equal(p.value, 1.0)


def test_make_optimizer_rejects_unknown_name():
    assert isinstance(make_optimizer('Adam', [], 0.1), Adam)
    with pytest.raises(ValueError):
        make_optimizer('rmsprop', [], 0.1)
