import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarmfield.nets import (Adam, CorruptCheckpointError, LayoutMismatchError, Mlp, VersionMismatchError,
                             forward, gradients, hard_update, load_checkpoint, save_checkpoint, soft_update)
from conftest import max_rel_grad_error


def _reference_forward(weights, biases, x, tanh_out):
    # independent loop-based implementation
    h = list(map(float, x))
    for k, (w, b) in enumerate(zip(weights, biases)):
        nxt = []
        for r in range(w.shape[0]):
            s = float(b[r]) + sum(float(w[r, c]) * h[c] for c in range(w.shape[1]))
            last = k == len(weights) - 1
            nxt.append(math.tanh(s) if (not last or tanh_out) else s)
        h = nxt
    return np.array(h)


def test_zero_net_outputs_zero():
    assert np.array_equal(forward(Mlp.zeros([4, 8, 3]), np.ones(4)), np.zeros(3))


def test_single_linear_layer():
    rng = np.random.default_rng(0)
    w, b, x = rng.normal(size=(3, 5)), rng.normal(size=3), rng.normal(size=5)
    assert np.allclose(forward(Mlp([w], [b]), x), w @ x + b, atol=1e-14)


@pytest.mark.parametrize("output", ["identity", "tanh"])
def test_forward_matches_reference(output):
    rng = np.random.default_rng(3)
    net = Mlp.init([6, 7, 5, 2], rng, output=output)
    x = rng.normal(size=6)
    assert np.allclose(net(x), _reference_forward(net.weights, net.biases, x, output == "tanh"), atol=1e-13)


def test_batched_forward_matches_rows():
    rng = np.random.default_rng(4)
    net = Mlp.init([5, 8, 2], rng)
    xs = rng.normal(size=(7, 5))
    assert np.allclose(net(xs), np.stack([net(x) for x in xs]))


def test_dimension_mismatch():
    net = Mlp.zeros([4, 2])
    with pytest.raises(ValueError):
        net(np.zeros(5))
    with pytest.raises(ValueError):
        gradients(net, np.zeros(4), np.zeros(3))
    with pytest.raises(ValueError):
        Mlp([np.zeros((3, 4)), np.zeros((2, 2))], [np.zeros(3), np.zeros(2)])


def test_linear_layer_gradient_outer_product():
    rng = np.random.default_rng(5)
    net = Mlp([rng.normal(size=(3, 4))], [np.zeros(3)])
    x = rng.normal(size=4)
    e = np.array([0.0, 1.0, 0.0])
    (gw, gb), dx = gradients(net, x, e)
    assert np.array_equal(gw, np.outer(e, x))
    assert np.array_equal(gb, e)
    assert np.allclose(dx, net.weights[0][1])


def test_zero_upstream_zero_gradients():
    rng = np.random.default_rng(6)
    net = Mlp.init([4, 6, 2], rng)
    grads, dx = gradients(net, rng.normal(size=4), np.zeros(2))
    assert all(np.all(g == 0) for g in grads) and np.all(dx == 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["identity", "tanh"]), st.booleans())
def test_finite_difference_gradients(seed, output, batched):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(2, 9)) for _ in range(int(rng.integers(2, 5)))]
    net = Mlp.init(sizes, rng, output=output)
    x = rng.normal(size=(3, sizes[0]) if batched else sizes[0])
    assert max_rel_grad_error(net, x, rng) < 1e-4


def test_adam_zero_gradient_keeps_params():
    net = Mlp.init([3, 2], np.random.default_rng(0))
    before = [p.copy() for p in net.params()]
    opt = Adam()
    assert opt.step(net, [np.zeros_like(p) for p in net.params()])
    assert opt.t == 1
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))


def test_adam_hand_recursion():
    net = Mlp([np.array([[1.0]])], [np.array([0.0])])
    opt = Adam(lr=0.1)
    for g in (0.5, -1.0):
        opt.step(net, [np.array([[g]]), np.array([0.0])])
    # m1 = 0.05, v1 = 2.5e-4 -> 0.900000002; m2 = -0.055, v2 = 1.24975e-3 -> 0.93661035...
    assert net.weights[0][0, 0] == pytest.approx(0.9366103542405654, abs=1e-15)


def test_adam_skips_nan(caplog):
    net = Mlp.init([3, 2], np.random.default_rng(0))
    before = [p.copy() for p in net.params()]
    grads = [np.zeros_like(p) for p in net.params()]
    grads[0][0, 0] = np.nan
    opt = Adam()
    with caplog.at_level(logging.WARNING):
        assert not opt.step(net, grads)
    assert opt.skipped == 1 and opt.t == 0
    assert "non-finite" in caplog.text
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))


def test_soft_update_examples():
    target, online = Mlp.zeros([2, 2]), Mlp([np.ones((2, 2))], [np.ones(2)])
    soft_update(target, online, 0.99)
    assert np.allclose(target.weights[0], 0.99)
    same = online.copy()
    soft_update(same, online, 0.37)
    assert np.allclose(same.weights[0], online.weights[0])
    frozen = Mlp.zeros([2, 2])
    soft_update(frozen, online, 0.0)
    assert np.all(frozen.weights[0] == 0)
    with pytest.raises(ValueError):
        soft_update(frozen, online, 1.0)
    with pytest.raises(ValueError):
        soft_update(Mlp.zeros([2, 3]), online, 0.5)


def _dist(a, b):
    return math.sqrt(sum(float(np.sum((p - q) ** 2)) for p, q in zip(a.params(), b.params())))


@given(st.floats(0.01, 0.95), st.integers(1, 40))
def test_soft_update_geometric(zeta, n):
    rng = np.random.default_rng(0)
    target, online = Mlp.init([3, 4, 2], rng), Mlp.init([3, 4, 2], rng)
    d0 = _dist(target, online)
    for _ in range(n):
        soft_update(target, online, zeta)
    assert _dist(target, online) <= (1 - zeta) ** n * d0 * (1 + 1e-9) + 1e-15


def test_hard_update_copies():
    rng = np.random.default_rng(1)
    t, o = Mlp.init([3, 2], rng), Mlp.init([3, 2], rng)
    hard_update(t, o)
    assert _dist(t, o) == 0.0


def _nets():
    rng = np.random.default_rng(9)
    return {"actor0": Mlp.init([5, 4, 3], rng), "critic0": Mlp.init([8, 6, 1], rng, output="tanh")}


def test_checkpoint_roundtrip(tmp_path):
    nets = _nets()
    path = tmp_path / "c.bin"
    save_checkpoint(path, nets, "layout-a", "abc", {"episode": 3})
    ck = load_checkpoint(path, expected_layout="layout-a")
    assert ck.meta["episode"] == 3 and ck.config_hash == "abc"
    x = np.random.default_rng(0).normal(size=5)
    assert nets["actor0"](x).tobytes() == ck.nets["actor0"](x).tobytes()
    for name in nets:
        assert all(np.array_equal(a, b) for a, b in zip(nets[name].params(), ck.nets[name].params()))
    assert ck.nets["critic0"].output == "tanh"


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "c.bin"
    save_checkpoint(path, _nets(), "layout-a", "abc")
    data = path.read_bytes()
    path.write_bytes(data[:-9])
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(path)
    path.write_bytes(data + b"\0")
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(path)
    path.write_bytes(b"NOTACKPT" + data[8:])
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(path)


def test_checkpoint_layout_and_version(tmp_path):
    path = tmp_path / "c.bin"
    save_checkpoint(path, _nets(), "obs-v1-h3-full", "abc")
    with pytest.raises(LayoutMismatchError):
        load_checkpoint(path, expected_layout="obs-v1-h4-full")
    data = bytearray(path.read_bytes())
    data[8:12] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(data))
    with pytest.raises(VersionMismatchError):
        load_checkpoint(path)
