"""Tensor engine tests: hand-computed oracles, finite differences, errors.

Every analytic gradient is checked against an oracle that does not share
code with the engine: either a value worked out by hand or a central finite
difference of the forward pass alone.
"""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mcsteer import autodiff as ad
from mcsteer.autodiff import ComputationTape, Parameter, Tensor
from mcsteer.errors import NumericError, ShapeError, TapeError


class TestTensor:
    def test_wraps_to_contiguous_float64(self):
        t = Tensor(np.arange(6, dtype=np.int32).reshape(2, 3))
        assert t.data.dtype == np.float64
        assert t.data.flags.c_contiguous
        assert t.shape == (2, 3)

    def test_scalar_allowed(self):
        t = Tensor(3.5)
        assert t.rank == 0
        assert t.item() == 3.5

    def test_zero_extent_rejected(self):
        with pytest.raises(ShapeError, match="zero"):
            Tensor(np.empty((2, 0, 3)))

    def test_item_requires_single_element(self):
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0]).item()


class TestParameter:
    def test_gradient_matches_shape_and_starts_zero(self):
        p = Parameter("w", Tensor(np.ones((3, 2))))
        assert p.gradient.shape == (3, 2)
        assert np.all(p.gradient.data == 0.0)

    def test_zero_grad_clears_in_place(self):
        p = Parameter("w", Tensor(np.ones(4)))
        buf = p.gradient.data
        p.gradient.data += 2.0
        p.zero_grad()
        assert buf is p.gradient.data
        assert np.all(buf == 0.0)


class TestConvForward:
    def test_all_ones_3x3_gives_nine(self):
        x = Tensor(np.ones((1, 3, 3)))
        k = Tensor(np.ones((1, 1, 3, 3)))
        b = Tensor(np.zeros(1))
        out = ad.conv2d(x, k, b, stride=1)
        assert out.shape == (1, 1, 1)
        assert_allclose(out.data, [[[9.0]]])

    def test_stride_two_on_5x5_ones(self):
        x = Tensor(np.ones((1, 5, 5)))
        k = Tensor(np.ones((1, 1, 3, 3)))
        b = Tensor(np.zeros(1))
        out = ad.conv2d(x, k, b, stride=2)
        assert out.shape == (1, 2, 2)
        assert_allclose(out.data, np.full((1, 2, 2), 9.0))

    def test_matches_explicit_loop_reference(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 3, 8, 9))
        k = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        stride = 2
        out = ad.conv2d(Tensor(x), Tensor(k), Tensor(b), stride=stride).data
        hp = (8 - 3) // stride + 1
        wp = (9 - 3) // stride + 1
        ref = np.zeros((2, 4, hp, wp))
        for n in range(2):
            for co in range(4):
                for i in range(hp):
                    for j in range(wp):
                        patch = x[n, :, i * stride:i * stride + 3, j * stride:j * stride + 3]
                        ref[n, co, i, j] = np.sum(patch * k[co]) + b[co]
        assert_allclose(out, ref, rtol=1e-12, atol=1e-12)

    def test_bias_applied_per_output_channel(self):
        x = Tensor(np.zeros((1, 3, 3)))
        k = Tensor(np.zeros((2, 1, 3, 3)))
        b = Tensor(np.array([1.5, -2.0]))
        out = ad.conv2d(x, k, b, stride=1)
        assert_allclose(out.data[:, 0, 0], [1.5, -2.0])

    def test_shape_errors_name_the_dimension(self):
        x = Tensor(np.ones((2, 4, 4)))
        k = Tensor(np.ones((1, 3, 3, 3)))
        b = Tensor(np.zeros(1))
        with pytest.raises(ShapeError, match="C_in"):
            ad.conv2d(x, k, b, stride=1)
        small = Tensor(np.ones((3, 2, 9)))
        with pytest.raises(ShapeError, match="H=2"):
            ad.conv2d(small, k, b, stride=1)
        with pytest.raises(ShapeError, match="stride"):
            ad.conv2d(Tensor(np.ones((3, 9, 9))), k, b, stride=0)


class TestDenseForward:
    def test_hand_case(self):
        w = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        b = Tensor(np.array([1.0, 1.0]))
        out = ad.dense(Tensor(np.array([1.0, 1.0])), w, b)
        assert_allclose(out.data, [4.0, 8.0])

    def test_batched_matches_stacked_single(self):
        rng = np.random.default_rng(3)
        w = Tensor(rng.normal(size=(5, 7)))
        b = Tensor(rng.normal(size=5))
        xs = rng.normal(size=(4, 7))
        batch = ad.dense(Tensor(xs), w, b).data
        singles = np.stack([ad.dense(Tensor(x), w, b).data for x in xs])
        # batched GEMM and per-sample GEMV may sum in different orders
        assert_allclose(batch, singles, rtol=1e-12)

    def test_width_mismatch(self):
        with pytest.raises(ShapeError, match="width"):
            ad.dense(Tensor(np.ones(3)), Tensor(np.ones((2, 4))), Tensor(np.zeros(2)))


class TestMse:
    def test_hand_case(self):
        out = ad.mse(Tensor([1.0, 3.0]), Tensor([0.0, 1.0]))
        assert out.rank == 0
        assert out.item() == 2.5

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.normal(size=5)
            assert ad.mse(Tensor(a), Tensor(a.copy())).item() == 0.0
            b = a.copy()
            b[2] += 1e-6
            assert ad.mse(Tensor(a), Tensor(b)).item() > 0.0

    def test_nonnegative(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b = rng.normal(size=(2, 8))
            assert ad.mse(Tensor(a), Tensor(b)).item() >= 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.mse(Tensor(np.ones(3)), Tensor(np.ones(4)))


class TestBackwardOracles:
    def test_chain_rule_hand_case(self):
        # loss = (w x - 5)^2 at w=2, x=3: d loss / d w = 2 (6 - 5) * 3 = 6
        w = Parameter("w", Tensor(np.array([[2.0]])))
        b = Parameter("b", Tensor(np.array([0.0])))
        tape = ComputationTape()
        pred = ad.dense(Tensor(np.array([3.0])), w, b, tape=tape)
        loss = ad.mse(pred, Tensor(np.array([5.0])), tape=tape)
        assert loss.item() == 1.0
        grads = ad.backward(loss, tape)
        assert_allclose(grads["w"].data, [[6.0]])
        assert_allclose(grads["b"].data, [2.0])

    def test_gradients_accumulate_across_calls(self):
        w = Parameter("w", Tensor(np.array([[2.0]])))
        b = Parameter("b", Tensor(np.array([0.0])))
        for _ in range(2):
            tape = ComputationTape()
            pred = ad.dense(Tensor(np.array([3.0])), w, b, tape=tape)
            loss = ad.mse(pred, Tensor(np.array([5.0])), tape=tape)
            ad.backward(loss, tape)
        assert_allclose(w.gradient.data, [[12.0]])

    def test_fan_out_adjoints_add(self):
        # loss = mean((2a - a)^2) = mean(a^2) built so `a` feeds two ops;
        # d loss / d a = 2 a / n must come out of the two-branch sum.
        x = Parameter("x", Tensor(np.array([1.0, -2.0, 3.0])))
        tape = ComputationTape()
        a = ad.relu(x, tape=tape)  # relu keeps the graph nontrivial
        twice = ad.scale_by(a, Tensor(np.full(3, 2.0)), tape=tape)
        once = ad.scale_by(a, Tensor(np.ones(3)), tape=tape)
        loss = ad.mse(twice, once, tape=tape)
        ad.backward(loss, tape)
        expected = (2.0 * np.maximum(x.value.data, 0.0) / 3.0) * (x.value.data > 0)
        assert_allclose(x.gradient.data, expected, rtol=1e-12)

    def test_relu_blocks_gradient_at_negative_inputs(self):
        x = Parameter("x", Tensor(np.array([-1.0, 2.0, -3.0, 4.0])))
        tape = ComputationTape()
        y = ad.relu(x, tape=tape)
        loss = ad.mse(y, Tensor(np.zeros(4)), tape=tape)
        ad.backward(loss, tape)
        assert x.gradient.data[0] == 0.0
        assert x.gradient.data[2] == 0.0
        assert x.gradient.data[1] != 0.0

    def test_scale_by_routes_zero_through_dropped(self):
        x = Parameter("x", Tensor(np.ones(6)))
        factor = Tensor(np.array([0.0, 2.0, 0.0, 2.0, 2.0, 0.0]))
        tape = ComputationTape()
        y = ad.scale_by(x, factor, tape=tape)
        loss = ad.mse(y, Tensor(np.zeros(6)), tape=tape)
        ad.backward(loss, tape)
        assert np.all(x.gradient.data[factor.data == 0.0] == 0.0)
        assert np.all(x.gradient.data[factor.data != 0.0] != 0.0)

    def test_backward_errors(self):
        tape = ComputationTape()
        with pytest.raises(TapeError, match="empty"):
            ad.backward(Tensor(1.0), tape)
        x = ad.relu(Tensor(np.ones(3)), tape=tape)
        with pytest.raises(TapeError, match="not produced"):
            ad.backward(Tensor(1.0), tape)
        with pytest.raises(ShapeError, match="single element"):
            ad.backward(x, tape)


def _finite_difference(params: list[Parameter], forward, h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences of a scalar-valued closure, one coordinate at a time."""
    grads = {}
    for p in params:
        g = np.zeros_like(p.value.data)
        flat = p.value.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = forward()
            flat[i] = orig - h
            down = forward()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[p.name] = g
    return grads


class TestFiniteDifference:
    def test_conv_dense_stack_matches_central_differences(self):
        rng = np.random.default_rng(42)
        x = Tensor(rng.normal(size=(2, 7, 8)) * 0.5)
        target = Tensor(np.array(0.3))
        k = Parameter("k", Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.4))
        kb = Parameter("kb", Tensor(rng.normal(size=3) * 0.1))
        w = Parameter("w", Tensor(rng.normal(size=(1, 3 * 3 * 3)) * 0.3))
        wb = Parameter("wb", Tensor(rng.normal(size=1) * 0.1))
        params = [k, kb, w, wb]

        def forward(tape=None):
            h1 = ad.relu(ad.conv2d(x, k, kb, stride=2, tape=tape), tape=tape)
            flat = ad.reshape(h1, (27,), tape=tape)
            out = ad.dense(flat, w, wb, tape=tape)
            return ad.mse(out, Tensor(np.array([target.item()])), tape=tape)

        tape = ComputationTape()
        loss = forward(tape)
        ad.backward(loss, tape)
        numeric = _finite_difference(params, lambda: forward().item())
        for p in params:
            scale = np.maximum(np.abs(numeric[p.name]), 1e-6)
            rel = np.abs(p.gradient.data - numeric[p.name]) / scale
            assert rel.max() < 1e-5, f"{p.name}: max rel err {rel.max()}"


class TestSgd:
    def test_hand_case(self):
        p = Parameter("w", Tensor(np.array([1.0])))
        p.gradient.data[:] = 0.5
        ad.sgd_step([p], learning_rate=0.1)
        assert_allclose(p.value.data, [0.95])
        assert np.all(p.gradient.data == 0.0)

    def test_zero_learning_rate_is_identity(self):
        p = Parameter("w", Tensor(np.array([1.0, 2.0])))
        p.gradient.data[:] = 3.0
        ad.sgd_step([p], learning_rate=0.0)
        assert_allclose(p.value.data, [1.0, 2.0])

    def test_negative_learning_rate_rejected(self):
        with pytest.raises(NumericError):
            ad.sgd_step([], learning_rate=-0.1)

    def test_non_finite_gradient_names_parameter(self):
        p = Parameter("conv3.bias", Tensor(np.zeros(2)))
        p.gradient.data[1] = np.nan
        with pytest.raises(NumericError, match="conv3.bias"):
            ad.sgd_step([p], learning_rate=0.1)

    def test_no_parameter_moves_when_one_gradient_is_bad(self):
        good = Parameter("good", Tensor(np.array([1.0])))
        good.gradient.data[:] = 1.0
        bad = Parameter("bad", Tensor(np.array([1.0])))
        bad.gradient.data[:] = np.inf
        with pytest.raises(NumericError):
            ad.sgd_step([good, bad], learning_rate=0.1)
        assert good.value.data[0] == 1.0


class TestGlorot:
    def test_bounds_and_determinism(self):
        t1 = ad.glorot_uniform((50, 40), fan_in=40, fan_out=50, seed=9)
        t2 = ad.glorot_uniform((50, 40), fan_in=40, fan_out=50, seed=9)
        a = np.sqrt(6.0 / 90.0)
        assert np.all(np.abs(t1.data) <= a)
        assert np.array_equal(t1.data, t2.data)
        t3 = ad.glorot_uniform((50, 40), fan_in=40, fan_out=50, seed=10)
        assert not np.array_equal(t1.data, t3.data)
