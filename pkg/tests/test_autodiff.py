import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convtran.autodiff import Adam, EarlyStopper, Linear, Tensor, early_stop_update, no_grad
from convtran.autodiff import functional as F

from conftest import check_grad, finite_diff, rel_error

# one entry per registered primitive: (name, op, input shapes, needs positive inputs)
PRIMITIVES = [
    ("add_broadcast", lambda a, b: a + b, [(3, 4), (4,)], False),
    ("sub", lambda a, b: a - b, [(2, 3), (2, 3)], False),
    ("mul_broadcast", lambda a, b: a * b, [(3, 4), (3, 1)], False),
    ("div", lambda a, b: a / b, [(3, 4), (3, 4)], True),
    ("pow", lambda a: a**3, [(5,)], False),
    ("matmul", lambda a, b: a @ b, [(3, 4), (4, 2)], False),
    ("matmul_batched", lambda a, b: a @ b, [(2, 3, 4), (4, 5)], False),
    ("exp", lambda a: a.exp(), [(4,)], False),
    ("log", lambda a: a.log(), [(4,)], True),
    ("tanh", lambda a: a.tanh(), [(4, 2)], False),
    ("sum_axis", lambda a: a.sum(axis=1), [(3, 4)], False),
    ("mean_axis", lambda a: a.mean(axis=0), [(3, 4)], False),
    ("max_pool", lambda a: a.max(axis=1), [(3, 5)], False),
    ("reshape_transpose", lambda a: a.reshape(6, 2).T, [(3, 4)], False),
    ("getitem", lambda a: a[1:, ::2], [(3, 4)], False),
    ("softmax", lambda a: F.softmax(a, axis=-1), [(3, 5)], False),
    ("log_softmax", lambda a: F.log_softmax(a, axis=-1), [(3, 5)], False),
    ("cross_entropy", lambda a: F.cross_entropy(a, np.array([0, 2, 1])), [(3, 4)], False),
    ("gelu", F.gelu, [(4, 3)], False),
    ("elu", F.elu, [(4, 3)], False),
    ("layer_norm", lambda x, g, b: F.layer_norm(x, g, b), [(3, 5), (5,), (5,)], False),
    ("conv1d_same_even_k", lambda x, w, b: F.conv1d(x, w, b), [(2, 3, 9), (4, 3, 4), (4,)], False),
    ("conv1d_same_odd_k", lambda x, w: F.conv1d(x, w), [(2, 2, 7), (3, 2, 3)], False),
    ("take_repeated", lambda t: F.take(t, np.array([[0, 2], [2, 2]]), axis=1), [(3, 4)], False),
    ("skew", F.skew, [(2, 4, 7)], False),
    ("concat", lambda a, b: F.concat([a, b], axis=1), [(2, 3), (2, 2)], False),
    ("stack", lambda a, b: F.stack([a, b], axis=0), [(2, 3), (2, 3)], False),
]


def _batch_norm_train(x, g, b):
    rm, rv = np.zeros(3), np.ones(3)
    return F.batch_norm(x, g, b, rm, rv, axis=1, training=True)


def _batch_norm_eval(x, g, b):
    rm, rv = np.full(3, 0.3), np.full(3, 2.0)
    return F.batch_norm(x, g, b, rm, rv, axis=1, training=False)


PRIMITIVES += [
    ("batch_norm_train", _batch_norm_train, [(4, 3, 5), (3,), (3,)], False),
    ("batch_norm_eval", _batch_norm_eval, [(4, 3, 5), (3,), (3,)], False),
]


@pytest.mark.parametrize("name,op,shapes,positive", PRIMITIVES, ids=[p[0] for p in PRIMITIVES])
def test_primitive_matches_finite_differences(name, op, shapes, positive):
    assert check_grad(op, *shapes, positive=positive) < 1e-4


def test_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_half_squared_norm_gives_x():
    x0 = np.array([1.5, -2.0, 0.25])
    x = Tensor(x0, requires_grad=True)
    ((x * x).sum() * 0.5).backward()
    np.testing.assert_allclose(x.grad, x0, rtol=0, atol=1e-15)


def test_max_ties_split_gradient():
    x = Tensor(np.array([[1.0, 3.0, 3.0]]), requires_grad=True)
    x.max(axis=1).sum().backward()
    np.testing.assert_allclose(x.grad, [[0.0, 0.5, 0.5]])


def test_composite_conv_attention_cross_entropy():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 2, 6))
    w_conv = rng.normal(size=(4, 2, 3)) * 0.5
    w_qkv = rng.normal(size=(4, 12)) * 0.5
    w_out = rng.normal(size=(4, 3)) * 0.5
    y = np.array([0, 2])

    def loss(wc, wq, wo):
        h = F.conv1d(Tensor(x), wc).transpose(0, 2, 1)  # (2, 6, 4)
        qkv = h @ wq
        q, k, v = qkv[:, :, :4], qkv[:, :, 4:8], qkv[:, :, 8:]
        a = F.softmax(q @ k.swapaxes(-1, -2) * 0.5)
        z = F.gelu(a @ v).mean(axis=1)
        return F.cross_entropy(z @ wo, y)

    params = [Tensor(p.copy(), requires_grad=True) for p in (w_conv, w_qkv, w_out)]
    loss(*params).backward()
    arrays = [w_conv, w_qkv, w_out]
    for t, a in zip(params, arrays):
        num = finite_diff(lambda: loss(*[Tensor(b) for b in arrays]).item(), a)
        assert rel_error(t.grad, num) < 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_gradient_accumulation_is_linear(seed):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 2))

    def l1(x):
        return F.gelu(x @ Tensor(w)).sum()

    def l2(x):
        return (x * x).mean() + x.tanh().sum()

    xa = Tensor(x0, requires_grad=True)
    (l1(xa) + l2(xa)).backward()
    xb = Tensor(x0, requires_grad=True)
    l1(xb).backward()
    l2(xb).backward()
    np.testing.assert_allclose(xa.grad, xb.grad, rtol=1e-12, atol=1e-12)


def test_backward_on_freed_graph_raises():
    x = Tensor(np.ones(3), requires_grad=True)
    y = (x * 2.0).sum()
    y.backward()
    with pytest.raises(RuntimeError, match="freed"):
        y.backward()


def test_backward_on_non_scalar_raises():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(RuntimeError, match="scalar"):
        (x * 2.0).backward()


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad


def test_xor_mlp_converges():
    rng = np.random.default_rng(0)
    xs = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float64)
    ys = np.array([0, 1, 1, 0])
    l1, l2 = Linear(2, 8, rng), Linear(8, 2, rng)
    opt = Adam(l1.parameters() + l2.parameters(), lr=0.05)
    for step in range(2000):
        loss = F.cross_entropy(l2(l1(Tensor(xs)).tanh()), ys)
        if loss.item() < 0.01:
            break
        loss.backward()
        opt.step()
    assert loss.item() < 0.01, f"loss {loss.item():.4f} after {step} steps"


# -- Adam --------------------------------------------------------------------


def test_adam_zero_grads_leave_parameters():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([p])
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert p.grad is None


def test_adam_constant_gradient_moves_against_sign():
    # with a constant grad the bias-corrected step is lr * g / (|g| + eps) every time
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([p], lr=0.01)
    trajectory = [0.0]
    for _ in range(50):
        p.grad = np.array([2.5])
        opt.step()
        trajectory.append(float(p.data[0]))
    diffs = np.diff(trajectory)
    assert np.all(diffs < 0)
    expected = -0.01 * 2.5 / (2.5 + 1e-8)
    np.testing.assert_allclose(diffs, expected, rtol=1e-9)


def test_adam_is_deterministic():
    def run():
        p = Tensor(np.array([0.3, -0.7]), requires_grad=True)
        opt = Adam([p])
        rng = np.random.default_rng(5)
        out = []
        for _ in range(20):
            p.grad = rng.normal(size=2)
            opt.step()
            out.append(p.data.copy())
        return np.array(out)

    np.testing.assert_array_equal(run(), run())


def test_adam_without_any_grads_raises():
    p = Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(RuntimeError):
        Adam([p]).step()


# -- early stopping ----------------------------------------------------------


def test_early_stop_never_stops_on_decreasing_losses():
    s = EarlyStopper(patience=3)
    assert all(early_stop_update(s, 1.0 / (e + 1)) == "continue" for e in range(100))


def test_early_stop_flat_losses_stop_at_patience_plus_one():
    patience = 5
    s = EarlyStopper(patience=patience)
    decisions = [s.update(1.0) for _ in range(patience + 1)]
    assert decisions[:-1] == ["continue"] * patience
    assert decisions[-1] == "stop"
    assert s.epoch == patience + 1


def test_early_stop_restores_epoch_of_minimum():
    losses = [0.9, 0.7, 0.8, 0.65, 0.66, 0.7, 0.71, 0.9]
    s = EarlyStopper(patience=4)
    snapshots = []
    for epoch, loss in enumerate(losses, start=1):
        state = {"w": np.full(2, float(epoch))}
        snapshots.append(state)
        if s.update(loss, state) == "stop":
            break
        state["w"] += 100.0  # later mutation must not leak into the stored copy
    best = int(np.argmin(losses[: s.epoch]))
    assert s.best_epoch == best + 1
    np.testing.assert_array_equal(s.best_checkpoint["w"], np.full(2, float(best + 1)))


def test_early_stop_nan_stops_with_error():
    s = EarlyStopper(patience=10)
    s.update(1.0)
    assert s.update(float("nan")) == "stop"
    assert s.error and "non-finite" in s.error
