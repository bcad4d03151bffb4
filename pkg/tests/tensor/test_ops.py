import math

import numpy as np
import pytest

from attrnet.errors import ContractError, DimensionError, NumericError, ParameterError
from attrnet.tensor import (
    ComputeGraph,
    Tensor,
    add,
    affine,
    backward,
    conv2d,
    default_dtype,
    dropout,
    finite_difference_gradient,
    float64_mode,
    grad_enabled,
    maxpool2,
    mul,
    no_grad,
    relu,
    sigmoid,
    tensor_sum,
)


class TestConv2d:
    def test_hand_computed_output(self) -> None:
        x = Tensor(np.arange(1, 10, dtype=np.float32).reshape(1, 3, 3))
        kernel = Tensor(np.array([[[[1, 0], [0, 1]]]], dtype=np.float32))
        out = conv2d(x, kernel, Tensor(np.zeros(1)))
        np.testing.assert_array_equal(out.data, [[[6, 8], [12, 14]]])

    def test_zero_kernels_give_the_bias(self, rng: np.random.Generator) -> None:
        x = Tensor(rng.normal(size=(2, 5, 5)))
        out = conv2d(x, Tensor(np.zeros((3, 2, 3, 3))), Tensor(np.array([1.0, -2.0, 0.5])))
        for channel, bias in enumerate([1.0, -2.0, 0.5]):
            np.testing.assert_array_equal(out.data[channel], np.full((3, 3), bias, dtype=np.float32))

    def test_unit_kernel_is_identity(self, rng: np.random.Generator) -> None:
        x = Tensor(rng.normal(size=(1, 4, 6)))
        out = conv2d(x, Tensor(np.ones((1, 1, 1, 1))), Tensor(np.zeros(1)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_output_size(self, rng: np.random.Generator) -> None:
        x = Tensor(rng.normal(size=(2, 3, 7, 9)))
        out = conv2d(x, Tensor(rng.normal(size=(4, 3, 3, 3))), Tensor(np.zeros(4)), stride=2, padding=1)
        assert out.shape == (2, 4, 4, 5)

    def test_linearity(self, rng: np.random.Generator) -> None:
        with float64_mode():
            kernels = Tensor(rng.normal(size=(2, 3, 3, 3)))
            bias = Tensor(np.zeros(2))
            x, y = rng.normal(size=(3, 6, 6)), rng.normal(size=(3, 6, 6))
            combined = conv2d(Tensor(2.0 * x - 0.5 * y), kernels, bias).data
            separate = 2.0 * conv2d(Tensor(x), kernels, bias).data - 0.5 * conv2d(Tensor(y), kernels, bias).data
        np.testing.assert_allclose(combined, separate, atol=1e-5)

    def test_batched_matches_unbatched(self, rng: np.random.Generator) -> None:
        kernels, bias = Tensor(rng.normal(size=(2, 1, 3, 3))), Tensor(rng.normal(size=2))
        batch = rng.normal(size=(3, 1, 5, 5))
        batched = conv2d(Tensor(batch), kernels, bias, padding=1).data
        for index in range(3):
            np.testing.assert_allclose(batched[index], conv2d(Tensor(batch[index]), kernels, bias, padding=1).data)

    def test_errors(self, rng: np.random.Generator) -> None:
        x = Tensor(rng.normal(size=(2, 4, 4)))
        with pytest.raises(ParameterError):
            conv2d(x, Tensor(np.ones((1, 2, 3, 3))), Tensor(np.zeros(1)), stride=0)
        with pytest.raises(DimensionError):
            conv2d(x, Tensor(np.ones((1, 3, 3, 3))), Tensor(np.zeros(1)))
        with pytest.raises(DimensionError):
            conv2d(x, Tensor(np.ones((1, 2, 5, 5))), Tensor(np.zeros(1)))
        with pytest.raises(DimensionError):
            conv2d(x, Tensor(np.ones((1, 2, 3, 3))), Tensor(np.zeros(2)))
        with pytest.raises(NumericError):
            conv2d(Tensor(np.full((2, 4, 4), np.nan)), Tensor(np.ones((1, 2, 3, 3))), Tensor(np.zeros(1)))


class TestMaxPool2:
    def test_single_window(self) -> None:
        assert maxpool2(Tensor(np.array([[[1, 2], [3, 4]]]))).data.tolist() == [[[4]]]

    def test_constant_input(self) -> None:
        np.testing.assert_array_equal(maxpool2(Tensor(np.full((2, 4, 4), 7.0))).data, np.full((2, 2, 2), 7.0))

    def test_window_maxima(self) -> None:
        x = np.array([[[1, 5, 2, 0], [3, 4, 8, 6], [9, 13, 10, 7], [12, 11, 14, 15]]], dtype=np.float32)
        np.testing.assert_array_equal(maxpool2(Tensor(x)).data, [[[5, 8], [13, 15]]])

    def test_gradient_goes_to_the_argmax(self) -> None:
        x = Tensor(np.array([[[1.0, 2.0], [4.0, 3.0]]]), requires_grad=True)
        backward(tensor_sum(maxpool2(x)))
        np.testing.assert_array_equal(x.grad, [[[0, 0], [1, 0]]])

    def test_odd_dimensions(self) -> None:
        with pytest.raises(DimensionError):
            maxpool2(Tensor(np.ones((1, 3, 4))))


class TestActivations:
    def test_relu(self) -> None:
        x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
        out = relu(x)
        assert out.data.tolist() == [0, 0, 2]
        backward(tensor_sum(out))
        assert x.grad is not None
        assert x.grad.tolist() == [0, 0, 1]
        assert not relu(Tensor(-np.ones(4))).data.any()

    def test_sigmoid_values(self) -> None:
        assert sigmoid(Tensor(0.0)).item() == 0.5
        assert sigmoid(Tensor(math.log(3), dtype=np.float64)).item() == pytest.approx(0.75, abs=1e-12)

    def test_sigmoid_saturates_inside_the_open_interval(self) -> None:
        values = sigmoid(Tensor(np.array([-40.0, 40.0, -1000.0, 1000.0]))).data
        assert np.all(values > 0)
        assert np.all(values < 1)
        assert values[1] == np.nextafter(np.float32(1), np.float32(0))

    def test_sigmoid_gradient_at_zero(self) -> None:
        x = Tensor(0.0, requires_grad=True)
        backward(sigmoid(x))
        assert x.grad is not None
        assert float(x.grad) == pytest.approx(0.25)


class TestAffine:
    def test_hand_computed_output(self) -> None:
        out = affine(Tensor(np.ones(2)), Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])), Tensor(np.zeros(2)))
        assert out.data.tolist() == [3, 7]

    def test_identity_and_zero_weights(self, rng: np.random.Generator) -> None:
        x = Tensor(rng.normal(size=4))
        np.testing.assert_array_equal(affine(x, Tensor(np.eye(4)), Tensor(np.zeros(4))).data, x.data)
        bias = Tensor(np.array([1.0, 2.0]))
        np.testing.assert_array_equal(affine(x, Tensor(np.zeros((2, 4))), bias).data, bias.data)

    def test_shape_mismatch(self) -> None:
        with pytest.raises(DimensionError):
            affine(Tensor(np.ones(3)), Tensor(np.ones((2, 4))), Tensor(np.zeros(2)))


class TestDropout:
    def test_identity_when_not_training_or_rate_zero(self, rng: np.random.Generator) -> None:
        x = Tensor(rng.normal(size=(5, 5)))
        assert dropout(x, 0.5, False, rng) is x
        assert dropout(x, 0.0, True, rng) is x

    def test_inverted_scaling_keeps_the_mean(self) -> None:
        out = dropout(Tensor(np.ones(100_000)), 0.5, True, np.random.default_rng(0)).data
        assert set(np.unique(out).tolist()) == {0.0, 2.0}
        assert abs(out.mean() - 1.0) < 0.01

    def test_deterministic_given_the_seed(self) -> None:
        x = Tensor(np.ones(1000))
        first = dropout(x, 0.3, True, np.random.default_rng(4)).data
        second = dropout(x, 0.3, True, np.random.default_rng(4)).data
        np.testing.assert_array_equal(first, second)

    @pytest.mark.parametrize("rate", [1.0, -0.1, 1.5])
    def test_rate_out_of_range(self, rate: float, rng: np.random.Generator) -> None:
        with pytest.raises(ParameterError):
            dropout(Tensor(np.ones(3)), rate, True, rng)


class TestBackward:
    def test_sum_gives_ones(self, rng: np.random.Generator) -> None:
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        backward(tensor_sum(x))
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_fan_out_accumulates(self, rng: np.random.Generator) -> None:
        with float64_mode():
            values = rng.normal(size=5)
            x = Tensor(values, requires_grad=True)
            backward(tensor_sum(add(mul(x, x), x)))
        # d/dx (x^2 + x)
        np.testing.assert_allclose(x.grad, 2 * values + 1)

    def test_graph_visits_each_node_once(self) -> None:
        x = Tensor(np.ones(3), requires_grad=True)
        y = mul(x, x)
        graph = ComputeGraph.from_output(tensor_sum(add(y, y)))
        assert [node.kind for node in graph.nodes] == ["mul", "add", "sum"]

    def test_non_scalar_loss(self) -> None:
        with pytest.raises(ContractError):
            backward(mul(Tensor(np.ones(3), requires_grad=True), Tensor(np.ones(3))))

    def test_loss_without_parameters(self) -> None:
        with pytest.raises(ContractError):
            backward(tensor_sum(Tensor(np.ones(3))))

    def test_non_finite_output(self) -> None:
        with pytest.raises(NumericError):
            mul(Tensor(np.array([1e30]), requires_grad=True), Tensor(np.array([1e30])))

    def test_no_grad_records_nothing(self) -> None:
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            assert not grad_enabled()
            y = relu(x)
        assert grad_enabled()
        assert y.node is None
        assert not y.requires_grad


class TestTensor:
    def test_default_dtype(self) -> None:
        assert Tensor([1.0]).dtype == np.float32
        with float64_mode():
            assert default_dtype() == np.float64
            assert Tensor([1.0]).dtype == np.float64
        assert default_dtype() == np.float32

    def test_zero_sized_dimension(self) -> None:
        with pytest.raises(ContractError):
            Tensor(np.zeros((0, 3)))

    def test_leaves_own_their_data(self) -> None:
        source = np.ones(3, dtype=np.float32)
        leaf = Tensor(source, requires_grad=True)
        source[0] = 5
        assert leaf.data[0] == 1


class TestFiniteDifferences:
    def test_sum_of_squares(self) -> None:
        gradient = finite_difference_gradient(lambda x: tensor_sum(mul(x, x)), Tensor(np.array([1.0, 2.0])))
        np.testing.assert_allclose(gradient.data, [2.0, 4.0], atol=1e-6)

    def test_constant(self) -> None:
        gradient = finite_difference_gradient(lambda x: 3.0, Tensor(np.ones(4)))
        assert not gradient.data.any()

    def test_sigmoid_at_zero(self) -> None:
        gradient = finite_difference_gradient(lambda x: tensor_sum(sigmoid(x)), Tensor(np.zeros(1)))
        assert abs(gradient.data[0] - 0.25) < 1e-6

    def test_non_finite_evaluation(self) -> None:
        with pytest.raises(NumericError):
            finite_difference_gradient(lambda x: float("nan"), Tensor(np.ones(2)))
