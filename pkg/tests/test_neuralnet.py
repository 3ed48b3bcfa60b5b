import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netdefrl.neuralnet import Adam, Mlp, ShapeError, backward, forward, log_softmax, optimize_step, softmax

from gradcheck import ARCHITECTURES, layer_sizes, max_relative_error


def test_zero_net_gives_zero_q():
    m = Mlp([5, 4, 3], zero=True)
    assert np.array_equal(forward(m, np.ones(5)), np.zeros(3))


def test_identical_logits_give_uniform_policy():
    m = Mlp([5, 4, 7], head="actor_critic", zero=True)
    probs, value = forward(m, np.ones(5))
    assert np.allclose(probs, 1 / 6, atol=0) and value == 0.0


def test_one_hidden_layer_matches_hand_unrolled():
    m = Mlp([3, 2, 2], seed=5)
    (w0, w1), (b0, b1) = m.weights, m.biases
    x = np.array([1.0, 0.0, 1.0])
    hidden = [max(0.0, sum(x[i] * w0[i, j] for i in range(3)) + b0[j]) for j in range(2)]
    out = [sum(hidden[i] * w1[i, j] for i in range(2)) + b1[j] for j in range(2)]
    assert np.allclose(m.forward(x), out, rtol=0, atol=1e-15)


def test_shape_errors():
    m = Mlp([4, 3, 2])
    with pytest.raises(ShapeError):
        m.forward(np.ones(5))
    _, acts = m.forward_cached(np.ones(4))
    with pytest.raises(ShapeError):
        m.backward_flat(acts, np.ones(3))
    with pytest.raises(ShapeError):
        Mlp([4])
    with pytest.raises(ShapeError):
        m.set_params(np.zeros(3))


def test_zero_upstream_gives_zero_grads():
    m = Mlp([4, 3, 2], seed=1)
    grads = backward(m, np.ones(4), np.zeros(2))
    assert all(not g.any() for g in grads)


def test_linear_net_gradient_is_input():
    m = Mlp([3, 1], seed=2)
    x = np.array([0.5, -2.0, 3.0])
    gw, gb = backward(m, x, np.ones(1))
    assert np.array_equal(gw[:, 0], x) and gb[0] == 1.0


@pytest.mark.parametrize("head", ["q", "actor_critic"])
@pytest.mark.parametrize("arch", ARCHITECTURES[:4], ids=lambda a: "x".join(map(str, a[1])))
def test_backward_matches_finite_differences(arch, head):
    worst, checked = max_relative_error(layer_sizes(arch, head), head, seed=3)
    assert checked > 500 and worst < 1e-4


def test_flat_vector_backs_the_views():
    m = Mlp([3, 4, 2], seed=0)
    assert m.n_params == 3 * 4 + 4 + 4 * 2 + 2
    m.flat[:] = 0.0
    assert not m.weights[0].any() and not m.biases[1].any()
    m.weights[1][0, 0] = 7.0
    assert m.flat[3 * 4 + 4] == 7.0
    other = m.copy()
    other.flat[:] = 1.0
    assert m.weights[1][0, 0] == 7.0


def test_set_params_accepts_list_and_flat():
    a, b = Mlp([3, 4, 2], seed=0), Mlp([3, 4, 2], seed=1)
    b.set_params(a.params)
    assert np.array_equal(a.flat, b.flat)
    b.set_params(a.flat * 2)
    assert np.array_equal(b.flat, 2 * a.flat)


@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=12))
def test_softmax_is_stable(logits):
    p = softmax(np.array(logits))
    assert np.all(np.isfinite(p)) and abs(p.sum() - 1.0) <= 1e-9
    assert np.allclose(np.exp(log_softmax(np.array(logits))), p, atol=1e-12)


def test_save_load_round_trip(tmp_path):
    m = Mlp([6, 5, 4], head="actor_critic", seed=9)
    opt = Adam(m.flat, lr=3e-4)
    optimize_step(m, np.random.default_rng(0).normal(size=m.n_params), opt)
    path = tmp_path / "m.npz"
    m.save(path, opt)
    back, opt2 = Mlp.load(path, with_optimizer=True)
    assert back.head == m.head and back.layer_sizes == m.layer_sizes
    assert np.array_equal(back.flat, m.flat)
    assert np.array_equal(opt2.m, opt.m) and np.array_equal(opt2.v, opt.v) and opt2.t == 1
    back.save(tmp_path / "again.npz", opt2)
    assert (tmp_path / "again.npz").read_bytes() == path.read_bytes()


def test_adam_matches_textbook_update():
    rng = np.random.default_rng(4)
    p = rng.normal(size=6)
    ref = p.copy()
    m_ref = np.zeros(6)
    v_ref = np.zeros(6)
    opt = Adam(p, lr=0.01)
    for t in range(1, 6):
        g = rng.normal(size=6)
        opt.step(p, g)
        m_ref = 0.9 * m_ref + 0.1 * g
        v_ref = 0.999 * v_ref + 0.001 * g * g
        ref -= 0.01 * (m_ref / (1 - 0.9 ** t)) / (np.sqrt(v_ref / (1 - 0.999 ** t)) + 1e-8)
    assert np.allclose(p, ref, rtol=0, atol=1e-12)
    assert opt.t == 5


def test_adam_list_params_and_zero_grads():
    m = Mlp([3, 2], seed=0)
    before = m.flat.copy()
    opt = Adam(m.params)
    opt.step(m.params, [np.zeros((3, 2)), np.zeros(2)])
    assert np.array_equal(m.flat, before)


def test_adam_descends_and_converges():
    w = np.array([1.0])
    opt = Adam(w, lr=0.1)
    opt.step(w, 2 * w)
    assert abs(w[0]) < 1.0
    a = np.diag([1.0, 4.0, 9.0])
    x = np.array([3.0, -2.0, 1.0])
    opt = Adam(x, lr=0.05)
    for _ in range(500):
        opt.step(x, 2 * a @ x)
    assert x @ a @ x < 1e-3
