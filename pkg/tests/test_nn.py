"""MLP forward/backward, Adam, time embedding, and checkpoint format."""

import math

import numpy as np
import pytest

from compsamp import nn


def identity_net(dim=3):
    p = nn.mlp_init([dim, dim], seed=0)
    p.weights[0] = np.eye(dim)
    p.biases[0] = np.zeros(dim)
    return p


class TestMlpInit:
    def test_deterministic(self):
        a = nn.mlp_init([2, 2], seed=7)
        b = nn.mlp_init([2, 2], seed=7)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_shapes(self):
        p = nn.mlp_init([2, 64, 64, 2], seed=0)
        assert [w.shape for w in p.weights] == [(64, 2), (64, 64), (2, 64)]
        assert [b.shape for b in p.biases] == [(64,), (64,), (2,)]

    def test_first_layer_variance(self):
        # declared law: N(0, 1/fan_in) with fan_in = 2 -> variance 1/2
        vals = np.concatenate([nn.mlp_init([2, 16, 2], seed=s).weights[0].ravel()
                               for s in range(320)])
        se = 0.5 * math.sqrt(2.0 / vals.size)
        assert abs(vals.var() - 0.5) < 3 * se

    def test_zero_last(self):
        p = nn.mlp_init([3, 8, 3], seed=1, zero_last=True)
        assert np.all(p.weights[-1] == 0.0)
        assert np.any(p.weights[0] != 0.0)

    @pytest.mark.parametrize("dims", [[], [4], [4, 0, 2], [4, -1]])
    def test_bad_dims(self, dims):
        with pytest.raises(ValueError):
            nn.mlp_init(dims, seed=0)

    def test_bad_activation(self):
        with pytest.raises(ValueError):
            nn.mlp_init([2, 2], seed=0, activation="tanh")


class TestMlpForward:
    def test_identity_single_layer(self, rng):
        p = identity_net()
        x = rng.standard_normal(3)
        np.testing.assert_array_equal(nn.mlp_forward(p, x), x)

    def test_zero_weights_bias(self):
        p = nn.mlp_init([4, 2], seed=0)
        p.weights[0][:] = 0.0
        p.biases[0] = np.array([1.5, -2.0])
        np.testing.assert_array_equal(nn.mlp_forward(p, np.ones(4)),
                                      [1.5, -2.0])

    def test_against_hand_written_evaluator(self, rng):
        p = nn.mlp_init([3, 5, 2], seed=42)

        def oracle(x):
            # independent evaluation of the declared architecture
            h = p.weights[0] @ x + p.biases[0]
            sig = 1.0 / (1.0 + np.exp(-h))
            h = h * sig
            return p.weights[1] @ h + p.biases[1]

        for _ in range(10):
            x = rng.standard_normal(3)
            np.testing.assert_allclose(nn.mlp_forward(p, x), oracle(x),
                                       atol=1e-12)

    def test_batched_matches_vector(self, rng):
        p = nn.mlp_init([3, 7, 2], seed=5)
        batch = rng.standard_normal((6, 3))
        out = nn.mlp_forward(p, batch)
        for i in range(6):
            np.testing.assert_allclose(out[i], nn.mlp_forward(p, batch[i]),
                                       atol=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            nn.mlp_forward(nn.mlp_init([3, 2], seed=0), np.ones(4))


def finite_difference_grads(p, x, y, loss, h=1e-5):
    def loss_at():
        out = nn.mlp_forward(p, x)
        r = out - y
        return float(np.mean(r**2) if loss == "mean-squared"
                     else np.mean(np.abs(r)))

    fd_w, fd_b = [], []
    for arr_list, out_list in ((p.weights, fd_w), (p.biases, fd_b)):
        for arr in arr_list:
            g = np.empty_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                up = loss_at()
                arr[idx] = orig - h
                down = loss_at()
                arr[idx] = orig
                g[idx] = (up - down) / (2 * h)
            out_list.append(g)
    return fd_w, fd_b


@pytest.mark.parametrize("loss", ["mean-squared", "mean-absolute"])
@pytest.mark.parametrize("dims", [[2, 8, 2], [4, 16, 16, 4]])
def test_grad_matches_finite_differences(dims, loss, rng):
    p = nn.mlp_init(dims, seed=3)
    x = rng.standard_normal((5, dims[0]))
    y = rng.standard_normal((5, dims[-1]))
    _, gw, gb = nn.mlp_grad(p, x, y, loss=loss)
    fw, fb = finite_difference_grads(p, x, y, loss)
    rel_errs = []
    for a, b in zip(gw + gb, fw + fb):
        denom = np.maximum(np.abs(b), 1e-8)
        rel_errs.append((np.abs(a - b) / denom).ravel())
    rel_errs = np.concatenate(rel_errs)
    assert np.mean(rel_errs < 1e-4) >= 0.99
    assert np.max(rel_errs) < 1e-3


class TestMlpGrad:
    def test_zero_loss_zero_grads(self, rng):
        p = nn.mlp_init([3, 6, 2], seed=2)
        x = rng.standard_normal((4, 3))
        y = nn.mlp_forward(p, x)
        loss, gw, gb = nn.mlp_grad(p, x, y, loss="mean-squared")
        assert loss == 0.0
        assert all(np.all(g == 0.0) for g in gw + gb)

    def test_l1_scalar_gradient(self):
        # single linear unit, scalar residual r: dL/d(bias) = sign(r)/batch
        p = nn.mlp_init([1, 1], seed=0)
        p.weights[0][:] = 1.0
        x = np.array([[2.0], [3.0]])
        y = np.array([[1.0], [5.0]])  # residuals +1, -2
        _, _, gb = nn.mlp_grad(p, x, y, loss="mean-absolute")
        assert gb[0][0] == pytest.approx((1.0 - 1.0) / 2)
        y_zero = nn.mlp_forward(p, x)  # residual exactly 0
        _, gw, gb = nn.mlp_grad(p, x, y_zero, loss="mean-absolute")
        assert all(np.all(g == 0.0) for g in gw + gb)

    def test_empty_batch(self):
        p = nn.mlp_init([2, 2], seed=0)
        with pytest.raises(ValueError):
            nn.mlp_grad(p, np.empty((0, 2)), np.empty((0, 2)))

    def test_unknown_loss(self):
        p = nn.mlp_init([2, 2], seed=0)
        with pytest.raises(ValueError):
            nn.mlp_grad(p, np.ones((1, 2)), np.ones((1, 2)), loss="huber")


class TestAdam:
    def test_first_step_is_signed_lr(self):
        p = nn.mlp_init([2, 2], seed=0)
        before = p.copy()
        st = nn.adam_init(p, lr=1e-3)
        gw = [np.full_like(p.weights[0], 0.7)]
        gb = [np.full_like(p.biases[0], -0.3)]
        nn.adam_step(p, gw, gb, st)
        np.testing.assert_allclose(p.weights[0] - before.weights[0],
                                   -1e-3, rtol=1e-6)
        np.testing.assert_allclose(p.biases[0] - before.biases[0],
                                   1e-3, rtol=1e-6)
        assert st.step_count == 1

    def test_zero_gradient_no_motion(self):
        p = nn.mlp_init([2, 3, 2], seed=1)
        before = p.digest()
        st = nn.adam_init(p)
        for _ in range(5):
            nn.adam_step(p, [np.zeros_like(w) for w in p.weights],
                         [np.zeros_like(b) for b in p.biases], st)
        assert p.digest() == before

    def test_deterministic_trajectory(self, rng):
        x = rng.standard_normal((8, 2))
        y = rng.standard_normal((8, 2))
        digests = []
        for _ in range(2):
            p = nn.mlp_init([2, 4, 2], seed=3)
            st = nn.adam_init(p, lr=1e-2)
            for _ in range(20):
                _, gw, gb = nn.mlp_grad(p, x, y)
                nn.adam_step(p, gw, gb, st)
            digests.append(p.digest())
        assert digests[0] == digests[1]

    def test_shape_mismatch(self):
        p = nn.mlp_init([2, 2], seed=0)
        st = nn.adam_init(p)
        with pytest.raises(ValueError):
            nn.adam_step(p, [np.zeros((3, 3))], [np.zeros(2)], st)

    def test_loss_drops_90_percent_on_regression_toy(self, rng):
        x = rng.standard_normal((64, 2))
        y = x @ np.array([[1.0, -2.0], [0.5, 3.0]]) + 0.7
        p = nn.mlp_init([2, 16, 2], seed=4)
        st = nn.adam_init(p, lr=1e-2)
        first, _, _ = nn.mlp_grad(p, x, y)
        last = first
        for _ in range(200):
            last, gw, gb = nn.mlp_grad(p, x, y)
            nn.adam_step(p, gw, gb, st)
        assert last <= 0.1 * first


class TestTimeEmbedding:
    def test_matches_declared_formula(self):
        dim, t_max = 16, 100
        emb = nn.time_embedding(37, dim, t_max)
        assert emb.shape == (dim,)
        for k in range(dim // 2):
            omega = 10000.0 ** (-2.0 * k / dim)
            assert emb[k] == pytest.approx(math.sin(37 / t_max * omega), abs=1e-12)
            assert emb[dim // 2 + k] == pytest.approx(
                math.cos(37 / t_max * omega), abs=1e-12)

    def test_batched(self):
        t = np.array([1, 50, 100])
        emb = nn.time_embedding(t, 8, 100)
        assert emb.shape == (3, 8)
        np.testing.assert_allclose(emb[1], nn.time_embedding(50, 8, 100),
                                   atol=1e-15)

    @pytest.mark.parametrize("dim", [0, 3, -2])
    def test_bad_dim(self, dim):
        with pytest.raises(ValueError):
            nn.time_embedding(1, dim, 10)


class TestCheckpoints:
    def roundtrip(self, tmp_path, p, st):
        path = tmp_path / "net.ckpt"
        nn.save_checkpoint(p, st, path)
        return nn.load_checkpoint(path), path

    def test_bitwise_roundtrip(self, tmp_path, rng):
        p = nn.mlp_init([3, 8, 3], seed=9)
        st = nn.adam_init(p, lr=5e-4)
        _, gw, gb = nn.mlp_grad(p, rng.standard_normal((4, 3)),
                                rng.standard_normal((4, 3)))
        nn.adam_step(p, gw, gb, st)
        (p2, st2), _ = self.roundtrip(tmp_path, p, st)
        assert p2.layer_dims == p.layer_dims
        assert p2.activation == p.activation
        assert p2.digest() == p.digest()
        assert st2.step_count == st.step_count and st2.lr == st.lr
        for a, b in zip(st.m_w + st.v_w + st.m_b + st.v_b,
                        st2.m_w + st2.v_w + st2.m_b + st2.v_b):
            np.testing.assert_array_equal(a, b)

    def test_wrong_magic(self, tmp_path):
        p = nn.mlp_init([2, 2], seed=0)
        path = tmp_path / "net.ckpt"
        nn.save_checkpoint(p, nn.adam_init(p), path)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(bytes(data))
        with pytest.raises(nn.CheckpointFormatError):
            nn.load_checkpoint(bad)

    def test_truncated(self, tmp_path):
        p = nn.mlp_init([2, 2], seed=0)
        path = tmp_path / "net.ckpt"
        nn.save_checkpoint(p, nn.adam_init(p), path)
        short = tmp_path / "short.ckpt"
        short.write_bytes(path.read_bytes()[:20])
        with pytest.raises(nn.CheckpointFormatError, match="byte offset"):
            nn.load_checkpoint(short)

    def test_corrupted_payload(self, tmp_path):
        p = nn.mlp_init([2, 2], seed=0)
        path = tmp_path / "net.ckpt"
        nn.save_checkpoint(p, nn.adam_init(p), path)
        data = bytearray(path.read_bytes())
        data[12] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(nn.CheckpointFormatError, match="checksum"):
            nn.load_checkpoint(path)

    def test_expect_dims_mismatch(self, tmp_path):
        p = nn.mlp_init([2, 64, 2], seed=0)
        path = tmp_path / "net.ckpt"
        nn.save_checkpoint(p, nn.adam_init(p), path)
        with pytest.raises(ValueError, match="do not match"):
            nn.load_checkpoint(path, expect_dims=[2, 32, 2])
