import numpy as np
import pytest

from jamdeceive.neural import (
    AdamState,
    ParameterGradients,
    ShapeError,
    backward,
    forward,
    load_snapshot,
    max_relative_error,
    mlp_new,
    numerical_gradients,
    optimizer_step,
    save_snapshot,
)


def test_paper_shape():
    net = mlp_new([2, 200, 200, 4], rng=np.random.default_rng(0))
    assert [w.shape for w in net.weights] == [(200, 2), (200, 200), (4, 200)]
    assert net.activations == ["relu", "relu", "identity"]
    assert all(np.all(b == 0) for b in net.biases)
    limit = np.sqrt(6 / 400)
    assert np.abs(net.weights[1]).max() <= limit


def test_zero_init_is_zero_function():
    net = mlp_new([2, 4], ["identity"], init="zeros")
    assert np.array_equal(forward(net, np.array([0.3, -2.0])), np.zeros(4))


@pytest.mark.parametrize("widths, acts", [
    ([2, 3, 5], ["relu", "relu", "identity"]),
    ([2, 3], ["relu"]),
    ([2], []),
    ([2, 3], ["tanh"]),
])
def test_bad_layouts(widths, acts):
    with pytest.raises(ShapeError):
        mlp_new(widths, acts)


def test_identity_layer_passes_input_through():
    net = mlp_new([3, 3], ["identity"], init="zeros")
    net.weights[0] = np.eye(3)
    x = np.array([1.5, -2.0, 0.25])
    assert np.array_equal(forward(net, x), x)


def test_relu_clamps_negative_preactivations():
    net = mlp_new([2, 3, 1], rng=np.random.default_rng(0))
    net.weights[0] = -np.ones((3, 2))
    net.biases[0] = -np.ones(3)
    net.weights[1] = np.ones((1, 3))
    assert forward(net, np.array([0.5, 0.5]))[0] == 0.0


def test_forward_golden_output():
    net = mlp_new([2, 5, 3], rng=np.random.default_rng(42))
    out = forward(net, np.array([0.3, 0.7]))
    assert out.tolist() == [0.7058295866865985, 0.0058468174849065635, 0.5880132027341015]


def test_forward_batch_matches_rows_and_is_pure():
    net = mlp_new([2, 16, 16, 4], rng=np.random.default_rng(1))
    x = np.random.default_rng(2).random((7, 2))
    batch = forward(net, x)
    for i in range(7):
        assert np.allclose(batch[i], forward(net, x[i]), rtol=0, atol=1e-14)
    assert np.array_equal(forward(net, x), batch)


def test_input_width_checked():
    net = mlp_new([2, 4], ["identity"], init="zeros")
    with pytest.raises(ShapeError):
        forward(net, np.zeros(3))
    with pytest.raises(ShapeError):
        backward(net, np.zeros(2), np.zeros(3))


def test_zero_upstream_gives_zero_gradients():
    net = mlp_new([2, 8, 4], rng=np.random.default_rng(3))
    g = backward(net, np.array([0.2, 0.9]), np.zeros(4))
    assert all(np.all(p == 0) for p in g.params())


def test_linear_layer_gradient_is_outer_product():
    net = mlp_new([3, 2], ["identity"], rng=np.random.default_rng(4))
    x, go = np.array([0.5, -1.0, 2.0]), np.array([1.5, -0.5])
    g = backward(net, x, go)
    assert np.allclose(g.weights[0], np.outer(go, x))
    assert np.allclose(g.biases[0], go)


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = mlp_new([2, 6, 5, 4], rng=rng)
    for b in net.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    x = rng.random((3, 2))
    go = rng.normal(size=(3, 4))
    assert max_relative_error(backward(net, x, go), numerical_gradients(net, x, go)) < 1e-4


def test_adam_zero_gradient_is_fixed_point():
    net = mlp_new([2, 5, 4], rng=np.random.default_rng(0))
    before = net.copy()
    zeros = ParameterGradients([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])
    optimizer_step(net, zeros, AdamState())
    assert net.same_as(before)


def test_adam_step_descends_scalar_quadratic():
    net = mlp_new([1, 1], ["identity"], init="zeros")
    net.weights[0][:] = 3.0
    x = np.array([1.0])

    def loss():
        return float(forward(net, x)[0] ** 2)

    before = loss()
    optimizer_step(net, backward(net, x, 2 * forward(net, x)), AdamState(lr=0.1))
    assert loss() < before


def test_adam_regression_converges():
    # realizable target: a fixed random teacher network, rescaled to unit variance
    rng = np.random.default_rng(11)
    teacher = mlp_new([2, 16, 4], rng=rng)
    net = mlp_new([2, 64, 64, 4], rng=rng)
    x = rng.random((32, 2))
    target = forward(teacher, x)
    target = (target - target.mean()) / target.std()
    opt = AdamState(lr=1e-2)
    trace = []
    for _ in range(500):
        err = forward(net, x) - target
        trace.append(float(np.mean(err ** 2)))
        optimizer_step(net, backward(net, x, 2 * err / err.size), opt)
    final = float(np.mean((forward(net, x) - target) ** 2))
    assert final < 1e-3, trace[::50]
    assert trace[0] > 0.1
    assert net.is_finite()


def test_adam_rejects_mismatched_gradients():
    net = mlp_new([2, 3], ["identity"], init="zeros")
    bad = ParameterGradients([np.zeros((2, 2))], [np.zeros(3)])
    with pytest.raises(ShapeError):
        optimizer_step(net, bad, AdamState())


def test_snapshot_round_trip_is_bit_exact(tmp_path):
    net = mlp_new([2, 200, 200, 4], rng=np.random.default_rng(5))
    path = save_snapshot(net, tmp_path / "w.bin")
    back = load_snapshot(path)
    assert back.same_as(net)
    save_snapshot(back, tmp_path / "w2.bin")
    assert (tmp_path / "w.bin").read_bytes() == (tmp_path / "w2.bin").read_bytes()


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"not a network")
    with pytest.raises(ValueError):
        load_snapshot(p)
