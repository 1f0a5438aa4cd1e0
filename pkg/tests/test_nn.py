import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from elemvae.nn import (
    LayerSpec,
    NetworkSpec,
    OptimizerSpec,
    ShapeError,
    TrainConfig,
    TrainingDiverged,
    backward,
    conv2d,
    conv2d_transpose,
    count_parameters,
    dense,
    dropout,
    flatten,
    forward,
    init_parameters,
    init_state,
    kl_standard_normal,
    load_checkpoint,
    loss_bce,
    loss_cce,
    max_pool,
    optimizer_step,
    reparameterize,
    reshape,
    save_checkpoint,
    shape_of,
    split_indices,
    train,
)
from elemvae.nn.gradcheck import check_network, numerical_gradient, relative_error
from elemvae.nn.network import conv_forward, conv_input_grad

# -- shape algebra ---------------------------------------------------------------


def test_conv_same_keeps_grid():
    spec = NetworkSpec((7, 4, 1), (conv2d(256, (5, 2), activation="relu"),))
    assert shape_of(spec) == [(7, 4, 256)]


def test_flatten_896():
    spec = NetworkSpec((7, 4, 32), (flatten(),))
    assert spec.output_shape == (896,)


def test_strided_same():
    spec = NetworkSpec((7, 4, 1), (conv2d(16, (3, 3), strides=(2, 1)),))
    assert spec.output_shape == (4, 4, 16)


def test_valid_and_transpose_shapes():
    spec = NetworkSpec((7, 4, 1), (
        conv2d(3, (3, 2), padding="valid"),
        conv2d_transpose(2, (3, 3), strides=(2, 2)),
    ))
    assert shape_of(spec) == [(5, 3, 3), (10, 6, 2)]


def test_invalid_shapes_rejected():
    with pytest.raises(ShapeError):
        NetworkSpec((2, 4, 1), (max_pool((3, 3)),))
    with pytest.raises(ShapeError):
        NetworkSpec((7, 4, 1), (conv2d(2, (9, 2), padding="valid"),))
    with pytest.raises(ShapeError):
        NetworkSpec((28,), (reshape(7, 3, 1),))


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        dropout(1.0)
    with pytest.raises(ValueError):
        conv2d(4, (3, 3), strides=(0, 1))
    with pytest.raises(ValueError):
        dense(4, activation="tanh")


def test_spec_dict_round_trip():
    spec = NetworkSpec((7, 4, 1), (conv2d(4, (5, 2), activation="relu"), flatten(),
                                   dropout(0.25), dense(3, "sigmoid")))
    assert NetworkSpec.from_dict(spec.to_dict()) == spec
    assert LayerSpec.from_dict(spec.layers[0].to_dict()) == spec.layers[0]


# -- initialization --------------------------------------------------------------


def test_init_deterministic_and_glorot():
    spec = NetworkSpec((2,), (dense(32, "relu"), dense(3)))
    a, b = init_parameters(spec, 7), init_parameters(spec, 7)
    for la, lb in zip(a, b):
        for k in la:
            assert la[k].tobytes() == lb[k].tobytes()
    assert a[0]["W"].shape == (2, 32)
    assert not a[0]["b"].any() and not a[1]["b"].any()
    limit = np.sqrt(6 / (2 + 32))
    assert np.abs(a[0]["W"]).max() <= limit
    assert count_parameters(a) == 2 * 32 + 32 + 32 * 3 + 3
    c = init_parameters(spec, 8)
    assert not np.array_equal(a[0]["W"], c[0]["W"])


def test_conv_glorot_fans():
    spec = NetworkSpec((7, 4, 3), (conv2d(5, (5, 2)),))
    w = init_parameters(spec, 0)[0]["W"]
    assert w.shape == (5, 2, 3, 5)
    assert np.abs(w).max() <= np.sqrt(6 / (10 * 3 + 10 * 5))


# -- forward ---------------------------------------------------------------------


def test_sigmoid_output_bounded():
    spec = NetworkSpec((4,), (dense(6, "sigmoid"),))
    params = init_parameters(spec, 0)
    out = forward(spec, params, 5 * np.random.default_rng(0).standard_normal((9, 4))).output
    assert ((out > 0) & (out < 1)).all()


def test_relu_of_negative_is_zero():
    spec = NetworkSpec((3,), (dense(3, "relu"),))
    params = [{"W": np.eye(3), "b": np.zeros(3)}]
    assert not forward(spec, params, -np.ones((2, 3))).output.any()


def test_dropout_eval_identity_and_train_expectation():
    spec = NetworkSpec((50,), (dropout(0.25),))
    x = np.ones((200, 50))
    assert np.array_equal(forward(spec, [{}], x, mode="eval").output, x)
    out = forward(spec, [{}], x, mode="train", seed=3).output
    assert set(np.unique(out)) <= {0.0, 1 / 0.75}
    assert abs(out.mean() - 1.0) < 0.02


def test_forward_rejects_bad_input():
    spec = NetworkSpec((4,), (dense(2),))
    with pytest.raises(ValueError):
        forward(spec, init_parameters(spec, 0), np.zeros((3, 5)))


def test_max_pool_forward():
    spec = NetworkSpec((2, 4, 1), (max_pool((2, 2)),))
    x = np.arange(8.0).reshape(1, 2, 4, 1)
    np.testing.assert_array_equal(forward(spec, [{}], x).output.ravel(), [5, 7])


# -- backward --------------------------------------------------------------------

GRAD_SPECS = {
    "dense": NetworkSpec((5,), (dense(4, "relu"), dense(3, "sigmoid"))),
    "conv_same": NetworkSpec((7, 4, 2), (conv2d(3, (5, 2), activation="relu"),)),
    "conv_narrow": NetworkSpec((7, 4, 6), (conv2d(2, (5, 2)),)),
    "conv_stride_valid": NetworkSpec((7, 4, 1), (conv2d(3, (3, 3), strides=(2, 1)),
                                                 conv2d(2, (2, 2), padding="valid"))),
    "transpose": NetworkSpec((7, 4, 3), (conv2d_transpose(2, (5, 2), activation="sigmoid"),)),
    "transpose_stride": NetworkSpec((3, 2, 2), (conv2d_transpose(3, (3, 3), strides=(2, 2)),)),
    "transpose_wide": NetworkSpec((7, 4, 1), (conv2d_transpose(5, (5, 2)),)),
    "pool": NetworkSpec((4, 4, 2), (conv2d(2, (3, 3)), max_pool((2, 2)))),
    "dropout_reshape": NetworkSpec((12,), (dense(12, "relu"), dropout(0.3), reshape(3, 2, 2),
                                           conv2d(2, (2, 2)), flatten(), dense(2))),
}


@pytest.mark.parametrize("name", GRAD_SPECS)
def test_gradients_match_finite_differences(name):
    spec = GRAD_SPECS[name]
    params = init_parameters(spec, 1)
    for layer in params:
        if "b" in layer:
            layer["b"] += np.random.default_rng(2).uniform(-0.1, 0.1, layer["b"].shape)
    x = np.random.default_rng(3).uniform(-1, 1, (3,) + spec.input_shape)
    errors = check_network(spec, params, x, seed=4)
    assert max(errors.values()) < 1e-4, errors


def test_zero_output_gradient_gives_zero_gradients():
    spec = GRAD_SPECS["pool"]
    params = init_parameters(spec, 0)
    trace = forward(spec, params, np.ones((2, 4, 4, 2)))
    grads, dx = backward(spec, params, trace, np.zeros((2,) + spec.output_shape))
    assert all(not g.any() for layer in grads for g in layer.values())
    assert not dx.any()
    assert [set(g) for g in grads] == [set(p) for p in params]
    for g, p in zip(grads, params):
        for k in p:
            assert g[k].shape == p[k].shape


def test_transpose_input_grad_is_conv_forward():
    # the input gradient of a transposed conv is the conv sharing its kernel
    layer_t = conv2d_transpose(3, (5, 2))
    layer_c = conv2d(2, (5, 2))
    rng = np.random.default_rng(0)
    W = rng.standard_normal((5, 2, 3, 2))
    dy = rng.standard_normal((2, 7, 4, 3))
    spec = NetworkSpec((7, 4, 2), (layer_t,))
    params = [{"W": W, "b": np.zeros(3)}]
    trace = forward(spec, params, rng.standard_normal((2, 7, 4, 2)))
    _, dx = backward(spec, params, trace, dy)
    expected, _ = conv_forward(dy, W, layer_c, (7, 4))
    np.testing.assert_allclose(dx, expected, atol=1e-12)
    # and the conv input gradient uses the flipped kernel
    dx2 = conv_input_grad(dy[..., :2] @ np.ones((2, 2)), W[..., :2, :], layer_c, (2, 7, 4, 2))
    assert dx2.shape == (2, 7, 4, 2)


# -- losses ----------------------------------------------------------------------


def test_bce_closed_forms():
    loss, _ = loss_bce(np.array([[0.5]]), np.array([[0.5]]))
    assert loss == pytest.approx(np.log(2), abs=1e-4)
    assert loss_bce(np.array([[1.0]]), np.array([[1.0]]))[0] < 1e-6
    two = loss_bce(np.full((3, 2), 0.5), np.full((3, 2), 0.5))[0]
    assert two == pytest.approx(2 * np.log(2))


def test_cce_closed_forms():
    assert loss_cce(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]))[0] < 1e-6
    assert loss_cce(np.array([[0.3, 0.3]]), np.array([[0.0, 1.0]]))[0] == pytest.approx(np.log(2))


@pytest.mark.parametrize("loss_fn", [loss_bce, loss_cce])
def test_loss_gradients(loss_fn):
    rng = np.random.default_rng(0)
    p = rng.uniform(0.1, 0.9, (4, 2))
    t = np.eye(2)[rng.integers(0, 2, 4)] if loss_fn is loss_cce else rng.uniform(0, 1, (4, 2))
    _, grad = loss_fn(p, t)
    numeric = numerical_gradient(lambda: loss_fn(p, t)[0], p)
    assert relative_error(grad, numeric) < 1e-6


def test_kl_values_and_gradients():
    assert kl_standard_normal(np.zeros(2), np.zeros(2))[0] == 0
    assert kl_standard_normal(np.array([1.0, 0.0]), np.zeros(2))[0] == pytest.approx(0.5)
    rng = np.random.default_rng(1)
    mu, lv = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    _, dmu, dlv = kl_standard_normal(mu, lv)
    assert relative_error(dmu, numerical_gradient(lambda: kl_standard_normal(mu, lv)[0], mu)) < 1e-6
    assert relative_error(dlv, numerical_gradient(lambda: kl_standard_normal(mu, lv)[0], lv)) < 1e-6


@settings(max_examples=50, deadline=None)
@given(arrays(float, (3, 2), elements=st.floats(-5, 5)), arrays(float, (3, 2), elements=st.floats(-5, 5)))
def test_kl_nonnegative(mu, lv):
    kl = kl_standard_normal(mu, lv)[0]
    assert kl >= -1e-12
    if kl == 0:
        assert np.allclose(mu, 0, atol=1e-6) and np.allclose(lv, 0, atol=1e-3)


def test_reparameterize():
    mu = np.array([[0.3, -1.2]])
    sample, _ = reparameterize(mu, np.full((1, 2), -30.0), seed=0)
    np.testing.assert_allclose(sample, mu, atol=1e-6)
    a, _ = reparameterize(mu, np.zeros((1, 2)), seed=5)
    b, _ = reparameterize(mu, np.zeros((1, 2)), seed=5)
    assert np.array_equal(a, b)
    n = 100_000
    lv = np.full((n, 2), np.log(4.0))
    draws, eps = reparameterize(np.repeat(mu, n, axis=0), lv, seed=1)
    assert (np.abs(draws.mean(axis=0) - mu[0]) < 3 * 2.0 / np.sqrt(n)).all()
    np.testing.assert_allclose(draws, mu + 2.0 * eps)


# -- optimizers ------------------------------------------------------------------


def _quadratic(opt, steps=500, w0=1.0):
    params = [{"W": np.array([w0])}]
    state = init_state(params)
    for _ in range(steps):
        optimizer_step(opt, state, params, [{"W": 2 * params[0]["W"]}])
    return abs(params[0]["W"][0])


def test_zero_gradient_leaves_adam_params():
    params = [{"W": np.array([1.5, -2.0])}]
    state = init_state(params)
    for _ in range(10):
        optimizer_step(OptimizerSpec("adam"), state, params, [{"W": np.zeros(2)}])
    np.testing.assert_array_equal(params[0]["W"], [1.5, -2.0])


def test_adam_quadratic():
    # each Adam step moves roughly lr, so the default 1e-3 cannot cover distance 1 in 500 steps
    assert _quadratic(OptimizerSpec("adam", lr=0.01)) < 0.01
    assert 0.3 < _quadratic(OptimizerSpec("adam")) < 1.0


def test_adadelta_progress_without_lr_tuning():
    assert _quadratic(OptimizerSpec("adadelta")) < 0.01


def test_rmsprop_progress():
    assert _quadratic(OptimizerSpec("rmsprop")) < 0.6


def test_optimizer_spec_validation():
    assert OptimizerSpec("adam").beta2 == 0.999
    assert OptimizerSpec("adadelta").rho == 0.95
    with pytest.raises(ValueError):
        OptimizerSpec("sgd")
    with pytest.raises(ValueError):
        OptimizerSpec("adam", lr=-1)
    with pytest.raises(ValueError):
        OptimizerSpec("rmsprop", rho=1.0)


# -- splitting and training ------------------------------------------------------


def test_entity_split():
    labels = [z for z in range(1, 119) for _ in range(3)]
    tr, te = split_indices(labels, 0.67, seed=0, granularity="entity")
    train_labels = {labels[i] for i in tr}
    assert len(train_labels) == 79
    assert not train_labels & {labels[i] for i in te}
    tr2, _ = split_indices(labels, 0.67, seed=0, granularity="entity")
    assert np.array_equal(tr, tr2)


def test_row_split_stratified():
    strat = [0] * 10 + [1] * 30
    tr, te = split_indices(range(40), 0.6, seed=1, stratify=strat)
    assert len(tr) == 24 and len(te) == 16
    assert sum(strat[i] for i in tr) == 18
    with pytest.raises(ValueError):
        split_indices(range(4), 1.0, seed=0)


def _identity_task():
    x = np.random.default_rng(0).uniform(0, 1, (10, 7))
    spec = NetworkSpec((7,), (dense(16, "relu"), dense(7, "sigmoid")))
    return spec, x


def test_zero_epochs_leaves_params():
    spec, x = _identity_task()
    params = init_parameters(spec, 0)
    before = [{k: v.copy() for k, v in p.items()} for p in params]
    trained, hist = train(spec, params, (x, x), loss_bce, OptimizerSpec("adam"),
                          TrainConfig(epochs=0))
    assert len(hist) == 0
    for a, b in zip(before, trained):
        for k in a:
            assert np.array_equal(a[k], b[k])


def test_identity_task_loss_decreases_and_is_deterministic():
    spec, x = _identity_task()
    cfg = TrainConfig(epochs=5, batch_size=10, seed=3)
    _, h1 = train(spec, init_parameters(spec, 0), (x, x), loss_bce,
                  OptimizerSpec("adam", lr=0.01), cfg, test_data=(x, x))
    losses = h1.column("train_loss")
    assert (np.diff(losses) < 0).all()
    _, h2 = train(spec, init_parameters(spec, 0), (x, x), loss_bce,
                  OptimizerSpec("adam", lr=0.01), cfg, test_data=(x, x))
    assert h1.records == h2.records


def test_divergence_aborts():
    spec, x = _identity_task()

    def bad_loss(p, t):
        return float("nan"), np.zeros_like(p)

    with pytest.raises(TrainingDiverged, match="epoch 0"):
        train(spec, init_parameters(spec, 0), (x, x), bad_loss, OptimizerSpec("adam"),
              TrainConfig(epochs=1))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(beta=-1)
    with pytest.raises(ValueError):
        TrainConfig(split=1.0)
    assert TrainConfig().with_(epochs=3).epochs == 3


# -- checkpoints -----------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    spec = GRAD_SPECS["dropout_reshape"]
    params = init_parameters(spec, 9)
    meta = {"seed": 9, "config": TrainConfig().to_dict()}
    save_checkpoint(tmp_path / "a.ckpt", {"net": (spec, params)}, meta)
    save_checkpoint(tmp_path / "b.ckpt", {"net": (spec, params)}, meta)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    nets, meta2 = load_checkpoint(tmp_path / "a.ckpt")
    spec2, params2 = nets["net"]
    assert spec2 == spec
    assert meta2["seed"] == 9 and meta2["config"] == meta["config"]
    for a, b in zip(params, params2):
        assert a.keys() == b.keys()
        for k in a:
            assert a[k].tobytes() == b[k].tobytes()


def test_checkpoint_rejects_foreign_zip(tmp_path):
    import zipfile
    with zipfile.ZipFile(tmp_path / "x.zip", "w") as zf:
        zf.writestr("meta.json", "{}")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x.zip")
