import math

import numpy as np
import pytest

from alignkit import numerics as nm


def test_matrix_requires_2d_and_finite():
    assert nm.constant(3.0).shape == (1, 1)
    assert nm.constant([1.0, 2.0]).shape == (1, 2)
    with pytest.raises(nm.ShapeError):
        nm.Matrix(np.zeros((2, 2, 2)))
    with pytest.raises(nm.NonFiniteError):
        nm.Matrix([[np.nan]])
    with pytest.raises(nm.NonFiniteError):
        nm.Matrix([[np.inf, 1.0]])


def test_matmul_forward_and_shape_error():
    a = nm.constant([[1.0, 2.0], [3.0, 4.0]])
    b = nm.constant([[1.0], [1.0]])
    assert nm.matmul(a, b).data.tolist() == [[3.0], [7.0]]
    with pytest.raises(nm.ShapeError):
        nm.matmul(b, b)


def test_broadcast_add_rows_and_cols():
    x = nm.parameter([[1.0, 2.0], [3.0, 4.0]])
    row = nm.parameter([[10.0, 20.0]])
    col = nm.parameter([[1.0], [2.0]])
    out = nm.sum_all(nm.add(nm.add(x, row), col))
    out.backward()
    assert row.grad.tolist() == [[2.0, 2.0]]
    assert col.grad.tolist() == [[2.0], [2.0]]
    assert x.grad.tolist() == [[1.0, 1.0], [1.0, 1.0]]


def test_backward_through_shared_node_accumulates():
    x = nm.parameter([[2.0]])
    y = nm.add(nm.mul(x, x), x)  # x^2 + x, dy/dx = 2x + 1 = 5
    y.backward()
    assert x.grad.tolist() == [[5.0]]


def test_bce_sum_matches_hand_value():
    probs = nm.constant([[0.9, 0.1], [0.2, 0.8]])
    labels = nm.constant([[1.0, 0.0], [0.0, 1.0]])
    loss = nm.bce_sum(probs, labels).item()
    expected = -(2 * math.log(0.9) + 2 * math.log(0.8))
    assert abs(loss - expected) < 1e-12
    assert abs(loss - 0.6570) < 5e-4


def test_bce_sum_clamps_saturated_probabilities():
    probs = nm.parameter([[0.0, 1.0]])
    labels = nm.constant([[1.0, 0.0]])
    loss = nm.bce_sum(probs, labels)
    assert math.isfinite(loss.item())
    assert loss.item() == pytest.approx(-2 * math.log(nm.BCE_CLAMP), rel=1e-6)
    loss.backward()
    # saturated entries sit outside the clamp range: zero gradient
    assert probs.grad.tolist() == [[0.0, 0.0]]


def test_bce_sum_rejects_soft_labels():
    with pytest.raises(ValueError):
        nm.bce_sum(nm.constant([[0.5]]), nm.constant([[0.3]]))


def test_sigmoid_is_stable_at_extremes():
    out = nm.sigmoid(nm.constant([[-1e6, 1e6, 0.0]]))
    assert out.data.tolist() == [[0.0, 1.0, 0.5]]


def test_row_softmax_rows_sum_to_one():
    out = nm.row_softmax(nm.constant([[1.0, 2.0, 3.0], [-1e9, 0.0, 0.0]]))
    np.testing.assert_allclose(out.data.sum(axis=1), [1.0, 1.0])
    assert out.data[1, 0] == pytest.approx(0.0, abs=1e-12)


def test_conv2d_same_identity_kernel():
    x = nm.constant(np.arange(12, dtype=float).reshape(3, 4))
    kernel = np.zeros((3, 3))
    kernel[1, 1] = 1.0
    out = nm.conv2d_same(x, nm.constant(kernel))
    np.testing.assert_array_equal(out.data, x.data)


def test_conv2d_same_averaging_kernel_on_ones():
    # interior cells see the full 3x3 sum, corners only 2x2
    x = nm.constant(np.ones((3, 3)))
    out = nm.conv2d_same(x, nm.constant(np.ones((3, 3))))
    assert out.data[1, 1] == 9.0
    assert out.data[0, 0] == 4.0
    assert out.data[0, 1] == 6.0


def test_conv2d_same_on_1x1_input():
    out = nm.conv2d_same(nm.constant([[2.0]]), nm.constant(np.full((3, 3), 5.0)))
    assert out.data.tolist() == [[10.0]]


def test_conv2d_same_rejects_even_or_rectangular_kernels():
    x = nm.constant(np.ones((2, 2)))
    with pytest.raises(nm.ShapeError):
        nm.conv2d_same(x, nm.constant(np.ones((2, 2))))
    with pytest.raises(nm.ShapeError):
        nm.conv2d_same(x, nm.constant(np.ones((1, 3))))


def test_gather_rows_and_scatter_gradient():
    table = nm.parameter(np.eye(4))
    out = nm.gather_rows(table, [2, 2, 0])
    loss = nm.sum_all(out)
    loss.backward()
    expected = np.zeros((4, 4))
    expected[2] = 2.0
    expected[0] = 1.0
    np.testing.assert_array_equal(table.grad, expected)
    with pytest.raises(IndexError):
        nm.gather_rows(table, [4])


def test_concat_cols_splits_gradient():
    a = nm.parameter([[1.0, 2.0]])
    b = nm.parameter([[3.0]])
    out = nm.concat_cols([a, b])
    assert out.data.tolist() == [[1.0, 2.0, 3.0]]
    nm.sum_all(nm.mul(out, nm.constant([[1.0, 2.0, 3.0]]))).backward()
    assert a.grad.tolist() == [[1.0, 2.0]]
    assert b.grad.tolist() == [[3.0]]


def test_softmax_xent_uniform_logits():
    logits = nm.constant(np.zeros((2, 5)))
    loss = nm.softmax_xent_sum(logits, [0, 3])
    assert loss.item() == pytest.approx(2 * math.log(5))


# ---------------------------------------------------------------------------
# finite-difference checks, one per differentiable op


def _check(build, store, tol=1e-6):
    err = nm.grad_check(build, store, fd_step=1e-5)
    assert err < tol, f"gradient check failed: {err}"


def _store_with(shapes: dict, seed=0) -> nm.ParamStore:
    store = nm.ParamStore(seed=seed)
    rng = np.random.default_rng(seed)
    for name, shape in shapes.items():
        store.add(name, rng.normal(0.0, 1.0, size=shape))
    return store


def test_grad_check_matmul_chain():
    store = _store_with({"a": (3, 4), "b": (4, 2)})

    def build():
        return nm.sum_all(nm.tanh(nm.matmul(store["a"], store["b"])))

    _check(build, store)


def test_grad_check_elementwise_ops():
    store = _store_with({"x": (2, 3), "y": (1, 3)})

    def build():
        z = nm.mul(nm.sigmoid(store["x"]), nm.tanh(store["y"]))
        return nm.sum_all(nm.scale(nm.add(z, store["x"]), 0.7))

    _check(build, store)


def test_grad_check_conv2d():
    store = _store_with({"x": (4, 5), "k": (3, 3)})

    def build():
        return nm.sum_all(nm.sigmoid(nm.conv2d_same(store["x"], store["k"])))

    _check(build, store)


def test_grad_check_row_softmax():
    store = _store_with({"x": (3, 4)})
    weights = nm.constant(np.linspace(0.5, 2.0, 12).reshape(3, 4))

    def build():
        return nm.sum_all(nm.mul(nm.row_softmax(store["x"]), weights))

    _check(build, store)


def test_grad_check_layer_norm():
    store = _store_with({"x": (3, 6), "g": (1, 6), "b": (1, 6)})
    weights = nm.constant(np.linspace(-1.0, 1.0, 18).reshape(3, 6))

    def build():
        out = nm.layer_norm(store["x"], store["g"], store["b"])
        return nm.sum_all(nm.mul(out, weights))

    _check(build, store)


def test_grad_check_bce_through_sigmoid():
    store = _store_with({"logits": (3, 4)})
    labels = nm.constant((np.arange(12).reshape(3, 4) % 3 == 0).astype(float))

    def build():
        return nm.bce_sum(nm.sigmoid(store["logits"]), labels)

    _check(build, store)


def test_grad_check_softmax_xent():
    store = _store_with({"logits": (4, 6)})

    def build():
        return nm.softmax_xent_sum(store["logits"], [0, 5, 2, 2])

    _check(build, store)


def test_grad_check_transpose_concat_gather():
    store = _store_with({"emb": (5, 3), "w": (3, 3)})

    def build():
        rows = nm.gather_rows(store["emb"], [0, 4, 2])
        both = nm.concat_cols([rows, nm.transpose(nm.matmul(store["w"], nm.transpose(rows)))])
        return nm.sum_all(nm.tanh(both))

    _check(build, store)


# ---------------------------------------------------------------------------
# optimizer


def test_adam_single_step_matches_hand_calc():
    store = nm.ParamStore()
    p = store.add("w", [[1.0]])
    p.grad = np.array([[1.0]])
    nm.adam_step(store, lr=0.1)
    # with fresh moments, mhat = g and vhat = g^2, so the step is ~lr
    assert p.data[0, 0] == pytest.approx(0.9, abs=1e-6)
    assert store.step == 1


def test_adam_two_steps_bias_correction():
    store = nm.ParamStore()
    p = store.add("w", [[0.0]])
    m = v = 0.0
    x = 0.0
    for t in range(1, 4):
        g = 2.0
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mhat = m / (1 - 0.9 ** t)
        vhat = v / (1 - 0.999 ** t)
        x -= 0.05 * mhat / (math.sqrt(vhat) + 1e-8)
        p.grad = np.array([[g]])
        nm.adam_step(store, lr=0.05)
    assert p.data[0, 0] == pytest.approx(x, abs=1e-12)


def test_reset_optimizer_restores_cold_start():
    store = nm.ParamStore()
    p = store.add("w", [[1.0]])
    for _ in range(5):
        p.grad = np.array([[0.7]])
        nm.adam_step(store, lr=0.1)
    warm = p.data.copy()
    store.reset_optimizer()
    assert store.step == 0

    fresh = nm.ParamStore()
    q = fresh.add("w", warm.copy())
    p.grad = np.array([[0.3]])
    q.grad = np.array([[0.3]])
    nm.adam_step(store, lr=0.1)
    nm.adam_step(fresh, lr=0.1)
    np.testing.assert_array_equal(p.data, q.data)


def test_adam_rejects_non_finite_gradient():
    store = nm.ParamStore()
    p = store.add("w", [[0.0]])
    p.grad = np.array([[np.inf]])
    with pytest.raises(nm.NonFiniteError):
        nm.adam_step(store, lr=0.1)


def test_adam_skip_leaves_parameter_untouched():
    store = nm.ParamStore()
    p = store.add("w", [[1.0]])
    q = store.add("frozen", [[1.0]])
    p.grad = np.array([[1.0]])
    q.grad = np.array([[1.0]])
    nm.adam_step(store, lr=0.1, skip=["frozen"])
    assert q.data[0, 0] == 1.0
    assert p.data[0, 0] != 1.0


def test_param_store_duplicate_name():
    store = nm.ParamStore()
    store.add("w", [[0.0]])
    with pytest.raises(KeyError):
        store.add("w", [[0.0]])


# ---------------------------------------------------------------------------
# container serialization


def test_container_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    arrays = {
        "w1": rng.normal(size=(3, 4)),
        "nested.name": rng.normal(size=(1, 1)),
        "z": np.array([[np.pi, -0.0], [1e-300, 1e300]]),
    }
    meta = {"alpha": 0.15, "kind": "test"}
    path = tmp_path / "params.alnf"
    nm.save_container(path, arrays, meta)
    back, back_meta = nm.load_container(path)
    assert back_meta == meta
    assert set(back) == set(arrays)
    for name in arrays:
        assert back[name].tobytes() == arrays[name].tobytes()


def test_container_double_save_identical_bytes(tmp_path):
    arrays = {"a": np.arange(6, dtype=float).reshape(2, 3)}
    p1, p2 = tmp_path / "one.alnf", tmp_path / "two.alnf"
    nm.save_container(p1, arrays, {"k": 1})
    nm.save_container(p2, arrays, {"k": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_container_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.alnf"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        nm.load_container(path)


def test_store_arrays_load_round_trip():
    store = nm.ParamStore()
    store.add("w", [[1.0, 2.0]])
    snapshot = store.arrays()
    store["w"].data[...] = 0.0
    store.load_arrays(snapshot)
    assert store["w"].data.tolist() == [[1.0, 2.0]]
    with pytest.raises(nm.ShapeError):
        store.load_arrays({"w": np.zeros((2, 2))})
