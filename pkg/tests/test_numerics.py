import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deskdrive import numerics as nx
from deskdrive.numerics import Tape, Tensor, backward

from gradcheck import check_inputs


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def test_matmul_identity_and_zero():
    assert np.array_equal(nx.matmul(Tensor(np.eye(2)), Tensor([[3.0], [4.0]])).data, [[3], [4]])
    assert np.array_equal(nx.matmul(Tensor([[1.0, 2], [3, 4]]), Tensor([[0.0], [0]])).data,
                          [[0], [0]])


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    np.testing.assert_allclose(nx.matmul(Tensor(a), Tensor(b)).data, naive_matmul(a, b),
                               rtol=1e-13, atol=1e-14)


def test_matmul_shape_error_reports_both_shapes():
    with pytest.raises(nx.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        nx.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_activations():
    assert nx.tanh(Tensor(0.0)).item() == 0.0
    assert nx.relu(Tensor([-5.0, 5.0])).data.tolist() == [0.0, 5.0]
    assert nx.sigmoid(Tensor(0.0)).item() == 0.5


def test_softmax_examples():
    assert nx.softmax(Tensor([0.0, 0.0])).data.tolist() == [0.5, 0.5]
    big = nx.softmax(Tensor([1000.0, 0.0])).data
    assert np.all(np.isfinite(big)) and big[0] == 1.0 and big[1] < 1e-300
    x = np.array([1.0, 2.0, 3.0])
    direct = np.exp(x) / np.exp(x).sum()
    np.testing.assert_allclose(nx.softmax(Tensor(x)).data, direct, rtol=1e-15, atol=0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(xs, c):
    x = np.array(xs)
    y = nx.softmax(Tensor(x)).data
    assert abs(y.sum() - 1.0) <= 1e-9
    assert np.max(np.abs(nx.softmax(Tensor(x + c)).data - y)) <= 1e-12


def test_masked_softmax_zeroes_excluded():
    y = nx.softmax(Tensor([[1.0, 2.0, 3.0]]), axis=-1, mask=np.array([True, False, True])).data
    assert y[0, 1] == 0.0
    np.testing.assert_allclose(y[0, [0, 2]], nx.softmax(Tensor([1.0, 3.0])).data, rtol=1e-15)


def test_backward_simple():
    x = Tensor(3.0)
    with Tape() as tape:
        y = nx.mul(x, x)
    assert backward(tape, y)[x] == 6.0
    z = Tensor(0.0)
    with Tape() as tape:
        y = nx.tanh(z)
    assert backward(tape, y)[z] == 1.0


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0])
    with Tape() as tape:
        y = nx.scale(x, 2.0)
    with pytest.raises(nx.ShapeError):
        backward(tape, y)


def test_tape_replay_bit_exact():
    rng = np.random.default_rng(0)
    a, b = Tensor(rng.standard_normal((3, 4))), Tensor(rng.standard_normal((4, 5)))
    with Tape() as tape:
        h = nx.tanh(nx.matmul(a, b))
        s = nx.softmax(h, axis=1)
        loss = nx.reduce_sum(nx.absolute(s))
    values = tape.replay()
    for node in tape.nodes:
        assert np.array_equal(values[node.out.id], node.out.data)


def _sum_of(fn):
    # weighted sum so the gradient is not trivially uniform
    def loss(*ts):
        y = fn(*ts)
        w = Tensor(np.cos(np.arange(y.size)).reshape(y.shape) + 0.3)
        return nx.reduce_sum(nx.mul(y, w))
    return loss


OPS = {
    "matmul": (lambda a, b: nx.matmul(a, b), [(3, 4), (4, 2)]),
    "batched_matmul": (lambda a, b: nx.matmul(a, b), [(2, 3, 4), (2, 4, 2)]),
    "add": (lambda a, b: nx.add(a, b), [(3, 2), (3, 2)]),
    "sub": (lambda a, b: nx.sub(a, b), [(3, 2), (3, 2)]),
    "mul": (lambda a, b: nx.mul(a, b), [(3, 2), (3, 2)]),
    "add_bias": (lambda a, b: nx.add_bias(a, b), [(2, 3, 4), (4,)]),
    "tanh": (lambda a: nx.tanh(a), [(5,)]),
    "sigmoid": (lambda a: nx.sigmoid(a), [(5,)]),
    "relu": (lambda a: nx.relu(a), [(6,)]),
    "abs": (lambda a: nx.absolute(a), [(6,)]),
    "softmax": (lambda a: nx.softmax(a, axis=1), [(3, 4)]),
    "masked_softmax": (lambda a: nx.softmax(a, axis=-1, mask=np.array([1, 0, 1, 1], bool)), [(3, 4)]),
    "log_softmax": (lambda a: nx.log_softmax(a, axis=-1), [(3, 4)]),
    "layer_norm": (lambda a, g, b: nx.layer_norm(a, g, b), [(3, 5), (5,), (5,)]),
    "reshape": (lambda a: nx.reshape(a, (6, 2)), [(3, 4)]),
    "transpose": (lambda a: nx.transpose(a, (1, 2, 0)), [(2, 3, 4)]),
    "concat": (lambda a, b: nx.concat([a, b], axis=1), [(2, 3), (2, 2)]),
    "index": (lambda a: nx.index(a, (slice(None), [0, 2, 2])), [(3, 4)]),
    "sum_axis": (lambda a: nx.reduce_sum(a, axis=1), [(3, 4)]),
    "mean": (lambda a: nx.reduce_mean(a, axis=(0, 2)), [(2, 3, 4)]),
    "attend": (lambda w, v: nx.attend(w, v), [(2, 3, 4), (2, 4, 5)]),
    "conv2d": (lambda x, w, b: nx.conv2d(x, w, b, stride=2, pad=1), [(2, 3, 6, 6), (4, 3, 3, 3), (4,)]),
    "tile_rows": (lambda a: nx.tile_rows(a, 3), [(2, 2)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name):
    fn, shapes = OPS[name]
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        arrays = [rng.standard_normal(s) for s in shapes]
        if name in ("relu", "abs"):
            # keep probes away from the kink
            arrays = [np.where(np.abs(a) < 1e-3, 0.5, a) for a in arrays]
        worst = max(worst, check_inputs(_sum_of(fn), arrays, max_coords=8, rng=rng))
    assert worst < 1e-4


def test_conv2d_matches_direct_loop():
    rng = np.random.default_rng(1)
    x, w, b = rng.standard_normal((1, 2, 5, 5)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)
    out = nx.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, pad=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((1, 3, 3, 3))
    for o in range(3):
        for i in range(3):
            for j in range(3):
                ref[0, o, i, j] = np.sum(xp[0, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3] * w[o]) + b[o]
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_attend_is_key_order_invariant():
    rng = np.random.default_rng(5)
    w, v = rng.random((2, 3, 6)), rng.standard_normal((2, 6, 4))
    perm = rng.permutation(6)
    a = nx.attend(Tensor(w), Tensor(v)).data
    b = nx.attend(Tensor(w[..., perm]), Tensor(v[:, perm])).data
    assert np.array_equal(a, b)


def test_forward_is_deterministic():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 7))
    a = nx.softmax(nx.tanh(Tensor(x)), axis=1).data
    b = nx.softmax(nx.tanh(Tensor(x)), axis=1).data
    assert np.array_equal(a, b)


# Adam --------------------------------------------------------------------

def test_adam_zero_gradient_leaves_params():
    p = {"w": Tensor([1.0, -2.0])}
    new, state = nx.adam_step(p, {"w": np.zeros(2)}, nx.AdamState.zeros_like(p), lr=0.1)
    assert np.array_equal(new["w"].data, p["w"].data)
    assert state.step == 1


def test_adam_first_step_moves_by_lr():
    p = {"p": Tensor(1.0)}
    new, _ = nx.adam_step(p, {"p": np.array(1.0)}, nx.AdamState.zeros_like(p), lr=0.1)
    # m_hat = 1, v_hat = 1 after bias correction
    assert new["p"].item() == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-15)


def test_adam_deterministic_and_pure():
    p = {"w": Tensor([0.3, 0.7])}
    g = {"w": np.array([0.1, -0.4])}
    s = nx.AdamState.zeros_like(p)
    a, sa = nx.adam_step(p, g, s, lr=0.01)
    b, sb = nx.adam_step(p, g, s, lr=0.01)
    assert np.array_equal(a["w"].data, b["w"].data)
    assert s.step == 0 and sa.step == sb.step == 1


def test_adam_shape_mismatch():
    p = {"w": Tensor([1.0, 2.0])}
    with pytest.raises(nx.ShapeError):
        nx.adam_step(p, {"w": np.zeros(3)}, nx.AdamState.zeros_like(p), lr=0.1)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    params = {"a.w": Tensor(rng.standard_normal((3, 4))), "b": Tensor(rng.standard_normal(5)),
              "s": Tensor(np.float64(np.pi))}
    path = tmp_path / "x.ckpt"
    nx.save_checkpoint(path, params, meta={"kind": "test"})
    back, meta = nx.load_checkpoint(path)
    assert meta == {"kind": "test"}
    assert set(back) == set(params)
    for k in params:
        assert back[k].shape == params[k].shape
        assert back[k].data.tobytes() == params[k].data.tobytes()
