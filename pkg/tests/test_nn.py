import numpy as np
import pytest

from lapprune.data import Dataset, synthetic_blobs
from lapprune.nn import (
    Activation,
    AdamState,
    BatchNorm,
    Conv2d,
    Dense,
    Flatten,
    MaxPool2d,
    Network,
    TrainConfig,
    adam_step,
    architecture,
    cross_entropy,
    evaluate,
    forward,
    glorot_init,
    loss_and_grads,
    softmax,
    train,
)
from lapprune.nn.network import glorot_bound
from lapprune.nn.train import batches
from lapprune.oracles import numeric_gradient


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


def make_layers(rng):
    bn = BatchNorm(rng.uniform(0.5, 1.5, 3), rng.standard_normal(3),
                   rng.standard_normal(3) * 0.1, rng.uniform(0.5, 2.0, 3))
    return {
        "dense": (Dense(rng.standard_normal((4, 5)), rng.standard_normal(4)), (6, 5)),
        "conv-zero": (Conv2d(rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)), (2, 2, 4, 4)),
        "conv-circular": (Conv2d(rng.standard_normal((3, 2, 3, 3)), padding="circular"), (2, 2, 4, 4)),
        "bn-dense": (BatchNorm(rng.uniform(0.5, 1.5, 5), rng.standard_normal(5)), (6, 5)),
        "bn-conv": (bn, (3, 3, 4, 4)),
        "relu": (Activation("relu"), (6, 5)),
        "sigmoid": (Activation("sigmoid"), (6, 5)),
        "tanh": (Activation("tanh"), (6, 5)),
        "identity": (Activation("identity"), (6, 5)),
        "maxpool": (MaxPool2d(), (2, 3, 4, 4)),
        "flatten": (Flatten(), (2, 3, 4, 4)),
    }


@pytest.mark.parametrize("training", [False, True])
@pytest.mark.parametrize("name", ["dense", "conv-zero", "conv-circular", "bn-dense", "bn-conv",
                                  "relu", "sigmoid", "tanh", "identity", "maxpool", "flatten"])
def test_layer_gradients_match_finite_differences(name, training):
    rng = np.random.default_rng(7)
    layer, shape = make_layers(rng)[name]
    x = rng.standard_normal(shape)
    out, _ = layer.forward(x, training=training)
    R = rng.standard_normal(out.shape)

    def f_x(xv):
        return float(np.sum(layer.forward(xv, training=training)[0] * R))

    _, cache = layer.forward(x, training=training)
    dx, grads = layer.backward(R, cache)
    assert rel_err(dx, numeric_gradient(f_x, x)) < 1e-4
    for pname, p in layer.params.items():
        original = p.copy()

        def f_p(pv, pname=pname):
            layer.params[pname] = pv
            return float(np.sum(layer.forward(x, training=training)[0] * R))

        num = numeric_gradient(f_p, original)
        layer.params[pname] = original
        assert rel_err(grads[pname], num) < 1e-4, pname


def test_network_loss_gradients(rng):
    net = glorot_init(architecture("conv6-small", input_shape=(1, 8, 8), batchnorm=True), seed=3)
    small = Network([l for l in net.layers], net.input_shape)
    X = rng.standard_normal((4, 1, 8, 8))
    y = np.array([0, 3, 5, 9])
    _, grads = loss_and_grads(small, X, y, training=False)
    for i in (0, small.prunable[-1]):
        W = small.layers[i].params["W"]
        original = W.copy()
        idx = tuple(0 for _ in W.shape)

        def f(w):
            small.layers[i].params["W"] = w
            return cross_entropy(small.forward(X), y)

        num = numeric_gradient(f, original)
        small.layers[i].params["W"] = original
        assert rel_err(grads[(i, "W")], num) < 1e-4
        assert grads[(i, "W")][idx] == pytest.approx(num[idx], rel=1e-3, abs=1e-8)


def test_batchnorm_eval_is_affine_with_effective_scale(rng):
    bn = BatchNorm(rng.uniform(0.5, 2, 4), rng.standard_normal(4), rng.standard_normal(4),
                   rng.uniform(0.1, 2, 4))
    x = rng.standard_normal((5, 4))
    out, _ = bn.forward(x)
    a = bn.effective_scale()
    b = bn.params["beta"] - a * bn.running_mean
    np.testing.assert_allclose(out, x * a + b, atol=1e-12)


def test_batchnorm_running_stats_update_only_when_asked(rng):
    bn = BatchNorm(np.ones(3))
    x = rng.standard_normal((10, 3)) + 5
    bn.forward(x, training=True)
    np.testing.assert_array_equal(bn.running_mean, 0)
    bn.forward(x, training=True, update_stats=True)
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=0))
    np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * x.var(axis=0))


def test_batchnorm_rejects_bad_hyperparameters():
    with pytest.raises(ValueError):
        BatchNorm(np.ones(2), eps=0)
    with pytest.raises(ValueError):
        BatchNorm(np.ones(2), running_var=np.array([1.0, -1.0]))


def test_shape_validation():
    with pytest.raises(ValueError, match="layer 1"):
        Network([Flatten(), Dense(np.ones((3, 5)))], (1, 2, 2))
    net = Network([Flatten(), Dense(np.ones((3, 4)))], (1, 2, 2))
    assert net.output_shape == (3,)
    with pytest.raises(ValueError):
        net.forward(np.ones((2, 4)))
    with pytest.raises(ValueError):
        Activation("softplus")
    with pytest.raises(ValueError):
        MaxPool2d().output_shape((1, 3, 4))


def test_forward_single_example():
    net = Network([Dense(np.eye(2), np.array([1.0, 0.0]))], (2,))
    np.testing.assert_array_equal(forward(net, np.array([1.0, 2.0])), [2.0, 2.0])


def test_masks_attach_and_validate():
    net = Network([Dense(np.ones((2, 2))), Activation(), Dense(np.ones((1, 2)))], (2,))
    net.attach_masks({0: np.array([[1, 0], [0, 1]])})
    np.testing.assert_array_equal(net.weight(0), np.eye(2))
    assert net.surviving_fraction() == pytest.approx(4 / 6)
    with pytest.raises(ValueError):
        net.attach_masks({1: np.ones((2, 2))})
    with pytest.raises(ValueError):
        net.attach_masks({2: np.ones((2, 2))})


def test_glorot_bounds():
    net = glorot_init(architecture("fcn-small"), seed=0)
    W = net.weight(net.prunable[0])
    a = glorot_bound(784, 100)
    assert np.abs(W).max() <= a
    assert np.abs(W).max() > 0.9 * a
    conv = glorot_init(architecture("conv6-small"), seed=0)
    K = conv.weight(0)
    assert np.abs(K).max() <= glorot_bound(1 * 9, 16 * 9)


def test_architectures_shapes():
    assert glorot_init(architecture("linear-1000"), 0).n_weights() == 784 * 1000 + 1000 * 10
    assert glorot_init(architecture("fcn-paper"), 0).n_weights() == 1_147_000
    conv = glorot_init(architecture("conv6-small"), 0)
    assert conv.output_shape == (10,)
    assert [conv.layers[i].kind for i in conv.prunable].count("conv2d") == 6
    with pytest.raises(ValueError):
        architecture("vgg")


def test_adam_step_matches_hand_computation():
    p = {"w": np.array([1.0, -2.0])}
    g = {"w": np.array([0.5, -0.1])}
    state = AdamState()
    adam_step(state, p, g, lr=0.1)
    # first bias-corrected step moves each coordinate by lr * sign(g) (up to eps)
    np.testing.assert_allclose(p["w"], [0.9, -1.9], atol=1e-7)
    adam_step(state, p, g, lr=0.1)
    np.testing.assert_allclose(p["w"], [0.8, -1.8], atol=1e-7)


def test_batches_are_deterministic_epoch_permutations():
    a = list(batches(10, 3, 6, seed=1))
    b = list(batches(10, 3, 6, seed=1))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert sorted(np.concatenate(a[:3])) == sorted(set(np.concatenate(a[:3])))


def test_training_learns_blobs_and_respects_masks():
    data = synthetic_blobs(classes=3, dim=6, count=300, seed=0)
    spec = architecture("fcn-small", input_shape=(6,), n_classes=3)
    net = glorot_init(spec, seed=0)
    mask = (np.random.default_rng(0).random(net.weight(1).shape) < 0.3).astype(float)
    net.attach_masks({1: mask})
    trained = train(net, data, TrainConfig(steps=300, seed=0))
    assert evaluate(trained, data) < 0.05
    assert np.all(trained.weight(1)[mask == 0] == 0)
    again = train(net, data, TrainConfig(steps=300, seed=0))
    np.testing.assert_array_equal(trained.weight(1), again.weight(1))


def test_linear_model_on_two_separated_blobs():
    data = synthetic_blobs(classes=2, dim=2, count=400, seed=3, spread=6.0)
    net = glorot_init(architecture("linear-1000", input_shape=(2,), n_classes=2), seed=0)
    assert evaluate(train(net, data, TrainConfig(steps=300)), data) < 0.02


def test_softmax_and_cross_entropy():
    z = np.array([[0.0, 0.0], [1000.0, 0.0]])
    np.testing.assert_allclose(softmax(z), [[0.5, 0.5], [1.0, 0.0]])
    assert cross_entropy(z, np.array([0, 0])) == pytest.approx(np.log(2) / 2)


def test_train_rejects_empty_data():
    net = glorot_init(architecture("fcn-small", input_shape=(2,)), seed=0)
    empty = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 10)
    with pytest.raises(ValueError):
        train(net, empty, TrainConfig(steps=1))
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
