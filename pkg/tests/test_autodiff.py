import numpy as np
import pytest

from hlsdse import autodiff as ad
from hlsdse.autodiff import ParamStore, Tensor


def tensor(arr, grad=True):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad)


# ---------------------------------------------------------------------------
# forward values
# ---------------------------------------------------------------------------

def test_matmul_identity():
    x = np.arange(6.0).reshape(2, 3)
    out = ad.matmul(tensor(np.eye(2)), tensor(x))
    assert np.array_equal(out.data, x)


def test_softmax_uniform_logits():
    out = ad.softmax(tensor(np.zeros((1, 5))), axis=1)
    assert np.allclose(out.data, 0.2)


def test_softmax_rows_sum_to_one(rng):
    x = rng.normal(size=(7, 9)) * 10
    out = ad.softmax(tensor(x), axis=1)
    assert np.all(np.abs(out.data.sum(axis=1) - 1.0) <= 1e-12)


def test_three_layer_mlp_matches_straight_line_evaluation(rng):
    x = rng.normal(size=(2, 3))
    w1, b1 = rng.normal(size=(3, 4)), rng.normal(size=4)
    w2, b2 = rng.normal(size=(4, 4)), rng.normal(size=4)
    w3, b3 = rng.normal(size=(4, 2)), rng.normal(size=2)
    out = ad.matmul(ad.tanh(ad.matmul(ad.relu(
        ad.matmul(tensor(x), tensor(w1)) + tensor(b1)), tensor(w2)) + tensor(b2)),
        tensor(w3)) + tensor(b3)
    expect = np.tanh(np.maximum(x @ w1 + b1, 0) @ w2 + b2) @ w3 + b3
    assert np.allclose(out.data, expect, atol=1e-14)


def test_layer_norm_core_matches_brute_force(rng):
    x = rng.normal(size=(4, 8))
    out = ad.layer_norm_core(tensor(x))
    mu = x.mean(axis=1, keepdims=True)
    sd = np.sqrt(x.var(axis=1, keepdims=True) + 1e-5)
    assert np.allclose(out.data, (x - mu) / sd, atol=1e-12)


def test_row_gather_and_scatter_roundtrip(rng):
    x = rng.normal(size=(5, 3))
    idx = np.array([0, 2, 2, 4])
    gathered = ad.row_gather(tensor(x), idx)
    assert np.array_equal(gathered.data, x[idx])
    scattered = ad.index_add_scatter(gathered, idx, 5)
    expect = np.zeros((5, 3))
    np.add.at(expect, idx, x[idx])
    assert np.allclose(scattered.data, expect)


def test_dropout_eval_is_identity_and_train_is_seeded(rng):
    x = tensor(np.ones((4, 4)))
    assert ad.dropout(x, 0.5, rng, train=False) is x
    a = ad.dropout(x, 0.5, np.random.default_rng(3), train=True)
    b = ad.dropout(x, 0.5, np.random.default_rng(3), train=True)
    assert np.array_equal(a.data, b.data)
    assert set(np.unique(a.data)).issubset({0.0, 2.0})


def test_shape_mismatch_reports_both_shapes():
    with pytest.raises(ad.ShapeMismatch, match=r"\(2, 3\).*\(4, 5\)"):
        ad.matmul(tensor(np.zeros((2, 3))), tensor(np.zeros((4, 5))))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def test_dx_of_x_squared():
    x = tensor(3.0)
    ad.backward(x * x)
    assert np.allclose(x.grad, 6.0)


def test_mean_gradient_is_one_over_n():
    x = tensor(np.arange(12.0).reshape(3, 4))
    ad.backward(ad.mean_all(x))
    assert np.allclose(x.grad, 1.0 / 12.0)


def test_non_scalar_loss_rejected():
    with pytest.raises(ad.ShapeMismatch, match="scalar"):
        ad.backward(tensor(np.ones(3)))


def test_unreachable_parameter_gets_zero_gradient():
    used = tensor(2.0)
    unused = tensor(5.0)
    ad.backward(used * used)
    assert np.allclose(unused.grad, 0.0)


def test_grad_accumulates_across_reuse():
    x = tensor(np.array([1.0, 2.0]))
    y = ad.sum_all(x * x) + ad.sum_all(x)
    ad.backward(y)
    assert np.allclose(x.grad, 2 * x.data + 1)


def test_two_layer_net_matches_finite_differences(rng):
    x = rng.normal(size=(3, 4))
    t = rng.normal(size=(3, 2))
    store = ParamStore()
    store.add("w1", rng.normal(size=(4, 5)) * 0.5)
    store.add("b1", rng.normal(size=5) * 0.1)
    store.add("w2", rng.normal(size=(5, 2)) * 0.5)
    store.add("b2", rng.normal(size=2) * 0.1)

    def loss():
        h = ad.tanh(ad.matmul(ad.constant(x), store["w1"]) + store["b1"])
        out = ad.matmul(h, store["w2"]) + store["b2"]
        d = out - ad.constant(t)
        return ad.mean_all(d * d)

    report = ad.finite_diff_check(loss, store.params.items(), tol=1e-4, h=1e-5)
    assert max(report.values()) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_every_primitive_passes_finite_difference_check(seed):
    rng = np.random.default_rng(seed)
    n, d = 3, 4
    idx = rng.integers(0, n, size=6)
    cases = {
        "add": lambda a, b: ad.add(a, b),
        "sub": lambda a, b: ad.sub(a, b),
        "mul": lambda a, b: ad.mul(a, b),
        "div": lambda a, b: ad.div(a, ad.sigmoid(b) + ad.constant(0.5)),
        "matmul": lambda a, b: ad.matmul(a, ad.transpose(b)),
        "concat": lambda a, b: ad.concat([a, b], axis=1),
        "row_gather": lambda a, b: ad.row_gather(a + b, idx),
        "scatter": lambda a, b: ad.index_add_scatter(ad.row_gather(a * b, idx), idx, n),
        "mean_rows": lambda a, b: ad.mean_rows(a * b),
        "sum_rows": lambda a, b: ad.sum_rows(a + b),
        "relu": lambda a, b: ad.relu(a - b + ad.constant(0.05)),
        "tanh": lambda a, b: ad.tanh(a * b),
        "sigmoid": lambda a, b: ad.sigmoid(a + b),
        "softplus": lambda a, b: ad.softplus(a - b),
        "softmax": lambda a, b: ad.softmax(a * b, axis=1),
        "log": lambda a, b: ad.log(ad.sigmoid(a + b) + ad.constant(0.1)),
        "exp": lambda a, b: ad.exp(a * ad.constant(0.3) - b * ad.constant(0.2)),
        "sqrt": lambda a, b: ad.sqrt(a * a + b * b + ad.constant(0.1)),
        "layer_norm": lambda a, b: ad.layer_norm_core(a + b * ad.constant(2.0)),
        "col_slice": lambda a, b: ad.col_slice(a * b, 1, 3),
        "transpose": lambda a, b: ad.matmul(ad.transpose(a), b),
    }
    for name, fn in cases.items():
        store = ParamStore()
        a = store.add("a", rng.normal(size=(n, d)))
        b = store.add("b", rng.normal(size=(n, d)))

        def loss():
            out = fn(a, b)
            return ad.mean_all(out * out)

        report = ad.finite_diff_check(loss, store.params.items(), tol=1e-4, h=1e-5)
        assert max(report.values()) < 1e-4, name


def test_finite_diff_check_identity_and_constant():
    store = ParamStore()
    x = store.add("x", np.array([1.0, -2.0, 3.0]))
    report = ad.finite_diff_check(lambda: ad.sum_all(x), store.params.items())
    assert report["x"] <= 1e-10  # zero up to float rounding of x +/- h
    store2 = ParamStore()
    y = store2.add("y", np.array([1.0, 2.0]))
    report = ad.finite_diff_check(lambda: ad.sum_all(y * ad.constant(0.0)),
                                  store2.params.items())
    assert report["y"] == 0.0


# ---------------------------------------------------------------------------
# Adam and checkpoints
# ---------------------------------------------------------------------------

def test_adam_zero_gradient_leaves_parameters_unchanged():
    store = ParamStore()
    p = store.add("p", np.array([1.0, -1.0]))
    store.adam_step(lr=0.1)
    assert np.array_equal(p.data, [1.0, -1.0])


def test_adam_first_step_is_signed_lr():
    store = ParamStore()
    p = store.add("p", np.array([1.0, -2.0, 3.0]))
    before = p.data.copy()
    ad.backward(ad.sum_all(p * ad.constant(np.array([2.0, -3.0, 0.5]))))
    store.adam_step(lr=0.01)
    step = p.data - before
    assert np.allclose(step, -0.01 * np.sign([2.0, -3.0, 0.5]), atol=1e-6)
    assert all(t._grad is None for t in store.params.values())  # grads cleared


def test_adam_descends_convex_quadratic_monotonically():
    store = ParamStore()
    x = store.add("x", np.full(4, 5.0))
    losses = []
    for _ in range(100):
        store.zero_grad()
        loss = ad.sum_all(x * x)
        losses.append(loss.item())
        ad.backward(loss)
        store.adam_step(lr=0.05)
    assert losses[-1] < losses[0] * 0.1
    warm = losses[10:]
    assert all(b <= a + 1e-12 for a, b in zip(warm, warm[1:]))


def test_checkpoint_roundtrip(tmp_path, rng):
    store = ParamStore()
    store.add("layer.w", rng.normal(size=(3, 4)))
    store.add("layer.b", rng.normal(size=4))
    path = tmp_path / "ckpt.bin"
    store.save(path, hyperparams={"hidden": 4, "variant": "mpm"})
    loaded, hyper = ParamStore.load(path)
    assert hyper == {"hidden": 4, "variant": "mpm"}
    assert loaded.names() == store.names()
    for name in store.names():
        assert np.array_equal(loaded[name].data, store[name].data)


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTACKPTxxxx")
    with pytest.raises(ValueError, match="magic"):
        ParamStore.load(path)
