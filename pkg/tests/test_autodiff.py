import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seismda import autodiff as ad
from seismda.errors import ArgumentError, DimensionError, TrainingError

from helpers import naive_conv1d, numeric_grad, rel_error


def T(x, grad=False, name=None):
    return ad.Tensor(x, requires_grad=grad, name=name)


class TestConv1d:
    def test_difference_kernel(self):
        out = ad.conv1d(T([[1, 2, 3, 4, 5]]), T([[[1, 0, -1]]]), T([0.0]), stride=1)
        np.testing.assert_array_equal(out.data, [[-2, -2, -2]])

    @pytest.mark.parametrize("length,k,stride,expected", [(1000, 5, 2, 498), (61, 3, 2, 30)])
    def test_output_length(self, length, k, stride, expected):
        x = T(np.zeros((1, length)))
        out = ad.conv1d(x, T(np.zeros((2, 1, k))), T(np.zeros(2)), stride)
        assert out.shape == (2, expected)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            ad.conv1d(T(np.zeros((2, 10))), T(np.zeros((1, 3, 3))), T([0.0]))

    def test_kernel_longer_than_input(self):
        with pytest.raises(DimensionError):
            ad.conv1d(T(np.zeros((1, 2))), T(np.zeros((1, 1, 3))), T([0.0]))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 3, 20))
        w, b = rng.normal(size=(5, 3, 4)), rng.normal(size=5)
        batched = ad.conv1d(T(x), T(w), T(b), 3).data
        for i in range(4):
            np.testing.assert_allclose(batched[i], ad.conv1d(T(x[i]), T(w), T(b), 3).data)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_against_sliding_window(self, length, k, stride, seed):
        k = min(k, length)
        rng = np.random.default_rng(seed)
        x, w, b = rng.normal(size=(2, length)), rng.normal(size=(3, 2, k)), rng.normal(size=3)
        out = ad.conv1d(T(x), T(w), T(b), stride).data
        assert out.shape[1] == (length - k) // stride + 1
        np.testing.assert_allclose(out, naive_conv1d(x, w, b, stride), atol=1e-12)


class TestDense:
    def test_identity(self):
        out = ad.dense(T([3.0, -1.0]), T(np.eye(2)), T(np.zeros(2)))
        np.testing.assert_array_equal(out.data, [3, -1])

    def test_hand_sum(self):
        assert ad.dense(T([2.0, 3.0]), T([[1.0, 1.0]]), T([1.0])).data.tolist() == [6.0]

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            ad.dense(T([1.0, 2.0, 3.0]), T(np.eye(2)), T(np.zeros(2)))

    def test_flatten_then_five_logits(self):
        feat = T(np.ones((27, 28)))
        flat = ad.flatten(feat)
        assert flat.shape == (756,)
        w, b = T(np.zeros((5, 756))), T(np.zeros(5))
        assert ad.dense(flat, w, b).shape == (5,)
        assert w.size + b.size == 756 * 5 + 5


class TestActivationsAndShapes:
    def test_leaky_relu(self):
        np.testing.assert_array_equal(ad.leaky_relu(T([1.0, -1.0]), 0.2).data, [1.0, -0.2])
        x = np.array([0.0, 2.0, 3.5])
        np.testing.assert_array_equal(ad.leaky_relu(T(x)).data, x)

    def test_leaky_relu_gradient(self):
        x = T([-2.0], grad=True, name="x")
        g = ad.backward(ad.tsum(ad.leaky_relu(x, 0.2)), {"x": x})
        assert g["x"][0] == pytest.approx(0.2)

    def test_flatten_row_major(self):
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(ad.flatten(T(x)).data, [0, 1, 2, 3, 4, 5])
        assert ad.flatten(T(np.zeros((81, 61)))).shape == (4941,)
        assert ad.flatten(T(np.zeros((7, 81, 61)))).shape == (7, 4941)


class TestCrossEntropy:
    def test_uniform(self):
        loss = ad.softmax_cross_entropy(T(np.zeros(5)), 2)
        assert loss.item() == pytest.approx(math.log(5), abs=1e-12)

    def test_confident(self):
        loss = ad.softmax_cross_entropy(T([10.0, -10.0]), 0).item()
        assert loss == pytest.approx(math.log1p(math.exp(-20.0)), rel=1e-12)
        assert loss == pytest.approx(2.06e-9, rel=1e-3)

    def test_gradient_equal_logits(self):
        z = T([0.0, 0.0], grad=True, name="z")
        g = ad.backward(ad.softmax_cross_entropy(z, 0), [z])[0]
        np.testing.assert_allclose(g, [-0.5, 0.5], atol=1e-15)

    def test_label_out_of_range(self):
        with pytest.raises(ArgumentError):
            ad.softmax_cross_entropy(T([0.0, 1.0]), 2)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 8), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_softmax_sums_and_nonneg_loss(self, k, n, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(scale=20, size=(n, k))
        p = ad.softmax(z)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert ad.softmax_cross_entropy(T(z), rng.integers(0, k, n)).item() >= 0.0


class TestGradReverse:
    def test_forward_identity(self):
        x = np.array([1.5, -2.0])
        out = ad.grad_reverse(T(x), 0.7).data
        assert out.tobytes() == x.tobytes()

    @pytest.mark.parametrize("lam,expected", [(0.5, [-0.5, 1.0]), (0.0, [0.0, 0.0])])
    def test_backward_scaling(self, lam, expected):
        x = T([1.5, -2.0], grad=True)
        upstream = T([1.0, -2.0])
        g = ad.backward(ad.tsum(ad.grad_reverse(x, lam) * upstream), [x])[0]
        np.testing.assert_allclose(g, expected)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ArgumentError):
            ad.grad_reverse(T([1.0]), -0.1)


class TestBackward:
    def test_linear(self):
        x = np.array([0.3, -1.2, 4.0])
        w = T(np.ones(3), grad=True, name="w")
        g = ad.backward(ad.tsum(w * T(x)), {"w": w})
        np.testing.assert_array_equal(g["w"], x)

    def test_non_scalar_loss(self):
        with pytest.raises(ArgumentError):
            ad.backward(T(np.ones(2), grad=True))

    def test_unused_parameter_zero(self):
        a = T([1.0], grad=True)
        unused = T(np.ones((2, 2)), grad=True)
        grads = ad.backward(ad.tsum(a * a), [a, unused])
        np.testing.assert_array_equal(grads[1], np.zeros((2, 2)))

    def test_graph_order(self):
        a = T([1.0, 2.0], grad=True)
        b = ad.leaky_relu(a)
        c = ad.tsum(b * b)
        g = ad.Graph.trace(c)
        ids = [n._id for n in g.nodes]
        assert ids == sorted(ids) and len(set(ids)) == len(ids)
        position = {n._id: i for i, n in enumerate(g.nodes)}
        for node in g.nodes:
            for p in node._parents:
                if p.requires_grad:
                    assert position[p._id] < position[node._id]

    def test_shared_subgraph_accumulates(self):
        x = T([2.0], grad=True)
        y = x * x
        g = ad.backward(ad.tsum(y + y), [x])[0]
        assert g[0] == pytest.approx(8.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_composed_network_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        c_in, length = int(rng.integers(1, 4)), int(rng.integers(8, 16))
        k, stride = int(rng.integers(2, 4)), int(rng.integers(1, 3))
        c_mid, n_cls, batch = int(rng.integers(1, 4)), int(rng.integers(2, 5)), int(rng.integers(1, 4))
        l_out = (length - k) // stride + 1
        x = rng.normal(size=(batch, c_in, length))
        w1, b1 = rng.normal(size=(c_mid, c_in, k)), rng.normal(size=c_mid)
        w2, b2 = rng.normal(size=(n_cls, c_mid * l_out)), rng.normal(size=n_cls)
        labels = rng.integers(0, n_cls, batch)
        arrays = [x, w1, b1, w2, b2]

        def forward():
            ts = [T(a, grad=True) for a in arrays]
            h = ad.leaky_relu(ad.conv1d(ts[0], ts[1], ts[2], stride), 0.2)
            logits = ad.dense(ad.flatten(h), ts[3], ts[4])
            return ad.softmax_cross_entropy(logits, labels), ts

        loss, ts = forward()
        analytic = ad.backward(loss, ts)
        numeric = numeric_grad(lambda: forward()[0].item(), arrays)
        for a, n in zip(analytic, numeric):
            assert rel_error(a, n) < 1e-4

    def test_reversal_equals_negative_lambda_times_plain(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 1, 10))
        w, b = T(rng.normal(size=(2, 1, 3)), grad=True), T(np.zeros(2), grad=True)
        head = rng.normal(size=(2, 16))

        def loss(lam):
            z = ad.flatten(ad.conv1d(T(x), w, b, 1))
            if lam is not None:
                z = ad.grad_reverse(z, lam)
            return ad.softmax_cross_entropy(ad.dense(z, T(head), T(np.zeros(2))), [0, 1])

        plain = ad.backward(loss(None), [w, b])
        rev = ad.backward(loss(0.3), [w, b])
        for p, r in zip(plain, rev):
            np.testing.assert_allclose(r, -0.3 * p, rtol=0, atol=1e-15)

    def test_forward_determinism(self):
        def run():
            rng = np.random.default_rng(11)
            x = T(rng.normal(size=(3, 2, 30)))
            w = T(ad.init_uniform((4, 2, 5), 10, rng))
            return ad.leaky_relu(ad.conv1d(x, w, T(np.zeros(4)), 2)).data

        assert run().tobytes() == run().tobytes()


class TestAdam:
    def test_zero_gradient_no_decay(self):
        p = T([1.0, -2.0], grad=True)
        opt = ad.Adam({"p": p}, lr=0.1)
        opt.step({"p": np.zeros(2)})
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_magnitude(self):
        p = T([0.0], grad=True)
        opt = ad.Adam({"p": p}, lr=0.01)
        ad.adam_step(opt, {"p": np.array([1.0])})
        assert p.data[0] == pytest.approx(-0.01, rel=1e-7)
        assert opt.t == 1
        opt.step({"p": np.array([1.0])})
        assert opt.t == 2

    def test_weight_decay_is_l2_term(self):
        p = T([10.0], grad=True)
        opt = ad.Adam({"p": p}, lr=0.01, weight_decay=1e-4)
        opt.step({"p": np.zeros(1)})
        # first moment after one step is (1 - beta1) * effective gradient
        assert opt.m["p"][0] / (1 - opt.beta1) == pytest.approx(1e-3)

    def test_nan_gradient_names_parameter(self):
        p = T([1.0], grad=True)
        opt = ad.Adam({"enc.w": p})
        with pytest.raises(TrainingError, match="enc.w"):
            opt.step({"enc.w": np.array([np.nan])})

    def test_moment_shapes(self):
        p = T(np.zeros((2, 3)), grad=True)
        opt = ad.Adam({"p": p})
        assert opt.m["p"].shape == opt.v["p"].shape == (2, 3)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    params = {"a.w": T(rng.normal(size=(3, 2, 5))), "b": T(rng.normal(size=4) * 1e-300)}
    path = tmp_path / "ck.npz"
    ad.save_params(path, params)
    loaded = ad.load_params(path)
    assert set(loaded) == set(params)
    for k in params:
        assert loaded[k].tobytes() == params[k].data.tobytes()
        assert loaded[k].shape == params[k].shape
