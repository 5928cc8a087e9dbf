import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neurocut.nn import (
    NetworkArch, ParamBox, backprop_relu, backprop_ste_lt, crelu, flatten, forward_lt, forward_relu,
    hidden_patterns, init_params, load_checkpoint, policy_map, relu, relu_gradient_error,
    save_checkpoint, sgn, squeeze, unflatten,
)


def scalar_forward(widths, params, x, act):
    """Neuron-by-neuron evaluation straight from the flat layout."""
    pos, h = 0, list(x)
    for layer in range(1, len(widths)):
        n_in, n_out = widths[layer - 1], widths[layer]
        W = params[pos : pos + n_in * n_out]
        bias = params[pos + n_in * n_out : pos + n_in * n_out + n_out]
        pos += n_in * n_out + n_out
        out = []
        for i in range(n_out):
            z = bias[i]
            for j in range(n_in):
                z += W[i * n_in + j] * h[j]
            out.append(z if layer == len(widths) - 1 else act(z))
        h = out
    return h


def test_arch_counts():
    arch = NetworkArch((5, 64, 64, 1))
    assert arch.L == 2 and arch.U == 128
    assert arch.W == 6 * 64 + 65 * 64 + 65
    assert arch.W_hidden == 6 * 64 + 65 * 64


def test_identity_relu():
    arch = NetworkArch((2, 2, 2))
    params = flatten([(np.eye(2), np.zeros(2)), (np.eye(2), np.zeros(2))])
    assert forward_relu(arch, params, [-1.0, 2.0]).tolist() == [0.0, 2.0]


def test_zero_params():
    arch = NetworkArch((3, 4, 2))
    assert forward_relu(arch, np.zeros(arch.W), [1.0, -2.0, 3.0]).tolist() == [0.0, 0.0]


def test_zero_params_lt_hidden_all_one():
    arch = NetworkArch((3, 4, 2))
    params = np.zeros(arch.W)
    params[-2:] = [0.25, -1.0]
    assert hidden_patterns(arch, params, [[1.0, 2.0, 3.0]])[0].tolist() == [[1.0] * 4]
    assert forward_lt(arch, params, [1.0, 2.0, 3.0]).tolist() == [0.25, -1.0]


def test_sgn_at_zero():
    assert sgn(np.array([-0.5, 0.0, 3.0])).tolist() == [0.0, 1.0, 1.0]


def test_lt_first_layer_scale_invariance():
    rng = np.random.default_rng(0)
    arch = NetworkArch((3, 5, 4, 2))
    params = rng.standard_normal(arch.W)
    scaled = params.copy()
    ws, bs, _ = arch.slices[0]
    scaled[ws] *= 2
    scaled[bs] *= 2
    X = rng.standard_normal((10, 3))
    for a, b in zip(hidden_patterns(arch, params, X), hidden_patterns(arch, scaled, X)):
        assert np.array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=2, max_size=4), st.integers(0, 2**32))
def test_forward_matches_scalar_oracle(widths, seed):
    rng = np.random.default_rng(seed)
    arch = NetworkArch(widths)
    params = rng.standard_normal(arch.W)
    x = rng.standard_normal(arch.d_in)
    ref = scalar_forward(widths, params, x, lambda z: max(z, 0.0))
    assert np.allclose(forward_relu(arch, params, x), ref, rtol=0, atol=1e-12)
    ref = scalar_forward(widths, params, x, lambda z: 1.0 if z >= 0 else 0.0)
    assert np.allclose(forward_lt(arch, params, x), ref, rtol=0, atol=1e-12)


def test_unflatten_roundtrip():
    arch = NetworkArch((3, 4, 2))
    p = np.arange(arch.W, dtype=float)
    assert np.array_equal(flatten(unflatten(arch, p)), p)
    with pytest.raises(ValueError):
        unflatten(arch, np.zeros(arch.W + 1))


def test_squeeze_examples():
    box = ParamBox.unit(3)
    assert squeeze([-1.0, 0.5, 2.0], box, "crelu").tolist() == [0.0, 0.5, 1.0]
    box = ParamBox((0.2, -1.0), (0.6, 3.0))
    assert np.allclose(squeeze([0.0, 0.0], box, "sigmoid"), [0.4, 1.0])
    with pytest.raises(ValueError):
        squeeze([0.0], ParamBox.unit(2))


def test_crelu_two_relus():
    t = np.linspace(-3, 3, 1000)
    assert np.max(np.abs(crelu(t) - (relu(t) - relu(t - 1)))) == 0


def test_policy_map_zero_params(t1):
    arch = NetworkArch((5, 8, 1))
    assert policy_map(t1, arch, np.zeros(arch.W)).tolist() == [0.0]
    assert policy_map(t1, arch, np.zeros(arch.W), kind="sigmoid").tolist() == [0.5]


def test_policy_map_matches_oracle(t1):
    arch = NetworkArch((5, 6, 3, 1))
    params = init_params(arch, np.random.default_rng(42))
    params[arch.slices[-1][1]] = 0.4  # keep the output inside the box
    raw = scalar_forward(arch.widths, params, [2, 2, 3, 1, 1], lambda z: max(z, 0.0))[0]
    expected = min(max(raw, 0.0), 1.0)
    assert abs(policy_map(t1, arch, params)[0] - expected) <= 1e-12


def test_policy_map_shape_mismatch(t1):
    with pytest.raises(ValueError):
        policy_map(t1, NetworkArch((4, 2, 1)), np.zeros(NetworkArch((4, 2, 1)).W))


def test_linear_net_bias_grad():
    arch = NetworkArch((3, 2))
    up = np.array([0.7, -1.3])
    g = backprop_relu(arch, np.ones(arch.W), [1.0, 2.0, 3.0], up)
    assert g[-2:].tolist() == up.tolist()


def test_dead_relu_blocks_incoming_grads():
    arch = NetworkArch((2, 2, 1))
    layers = [(np.array([[1.0, 1.0], [1.0, -1.0]]), np.array([-10.0, 0.5])), (np.array([[1.0, 1.0]]), np.zeros(1))]
    params = flatten(layers)
    g = backprop_relu(arch, params, [1.0, 1.0], [1.0])
    g_layers = unflatten(arch, g)
    assert g_layers[0][0][0].tolist() == [0.0, 0.0]
    assert g_layers[0][1][0] == 0.0


def test_relu_grad_vs_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(20):
        widths = tuple(int(w) for w in rng.integers(1, 6, size=rng.integers(2, 5)))
        arch = NetworkArch(widths)
        params = rng.standard_normal(arch.W)
        x = rng.standard_normal((2, arch.d_in))
        up = rng.standard_normal((2, arch.d_out))
        err, used = relu_gradient_error(arch, params, x, up)
        assert used > 0
        assert err <= 1e-4


def test_ste_surrogate_pass_and_block():
    arch = NetworkArch((1, 1, 1))
    params = flatten([(np.array([[1.0]]), np.array([0.0])), (np.array([[2.0]]), np.array([0.0]))])
    g = backprop_ste_lt(arch, params, [0.5], [1.0])
    assert g[0] == pytest.approx(2.0 * 0.5)  # d/dw1 = up * a2 * 1 * x
    g = backprop_ste_lt(arch, params, [5.0], [1.0])
    assert g[0] == 0.0 and g[1] == 0.0


def _hardclip_forward(arch, params, x):
    (A1, b1), (A2, b2) = unflatten(arch, params)
    return np.clip(A1 @ x + b1, -1.0, 1.0) @ A2.T + b2


def test_ste_matches_hardclip_and_lt_nets():
    """One hidden layer: the STE gradient equals the hard-clip gradient in the first layer
    and the exact LT gradient in the output layer."""
    rng = np.random.default_rng(9)
    h = 1e-6
    compared = 0
    for _ in range(30):
        arch = NetworkArch((int(rng.integers(1, 5)), int(rng.integers(1, 6)), int(rng.integers(1, 4))))
        params = rng.standard_normal(arch.W)
        x = rng.standard_normal(arch.d_in)
        up = rng.standard_normal(arch.d_out)
        (A1, b1), _ = unflatten(arch, params)
        z = A1 @ x + b1
        if np.any(np.abs(np.abs(z) - 1.0) < 1e-3) or np.any(np.abs(z) < 1e-3):
            continue
        g = backprop_ste_lt(arch, params, x, up)
        first = arch.slices[0][1].stop
        for k in range(arch.W):
            e = np.zeros(arch.W)
            e[k] = h
            net = _hardclip_forward if k < first else (lambda a, p, v: forward_lt(a, p, v))
            fd = (up @ net(arch, params + e, x) - up @ net(arch, params - e, x)) / (2 * h)
            assert fd == pytest.approx(g[k], rel=1e-4, abs=1e-6)
        compared += 1
    assert compared >= 10


def test_checkpoint_roundtrip(tmp_path):
    arch = NetworkArch((5, 7, 1))
    p = init_params(arch, np.random.default_rng(1))
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, arch, p)
    assert path.read_text().startswith("mlp 5 7 1\n")
    arch2, p2 = load_checkpoint(path)
    assert arch2 == arch and np.array_equal(p, p2)


def test_checkpoint_wrong_count(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text("mlp 2 1\n1.0 2.0\n")
    with pytest.raises(ValueError):
        load_checkpoint(path)
