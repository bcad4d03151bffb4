import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attrnet.errors import DimensionError, NumericError, ParameterError
from attrnet.loss import batch_class_weights, weighted_ce_loss, weighted_ce_terms
from attrnet.tensor import Tensor, backward, float64_mode


def scalar_loss(logits: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> float:
    """The batch loss written out one term at a time."""
    total = 0.0
    batch, classes = logits.shape
    for j in range(batch):
        for k in range(classes):
            score = 1.0 / (1.0 + math.exp(-logits[j, k]))
            y = targets[j, k]
            total += weights[k] * (-y * math.log(score) - (1.0 - y) * math.log(1.0 - score))
    return total / batch


def loss_value(logits: np.ndarray, targets: np.ndarray, weights: np.ndarray | None = None) -> float:
    weights = batch_class_weights(targets) if weights is None else weights
    with float64_mode():
        return weighted_ce_loss(Tensor(logits), targets, weights).item()


class TestBatchClassWeights:
    def test_hand_computed(self) -> None:
        targets = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
        np.testing.assert_array_equal(batch_class_weights(targets), [0.5, 0.0, 1.0])

    def test_ambiguous_labels_count_half(self) -> None:
        np.testing.assert_array_equal(batch_class_weights(np.array([[0.5], [0.5]])), [0.5])

    def test_matches_brute_force_means(self) -> None:
        rng = np.random.default_rng(0)
        for _ in range(100):
            targets = rng.choice([0.0, 0.5, 1.0], size=(int(rng.integers(1, 9)), int(rng.integers(1, 11))))
            expected = [1.0 - sum(targets[:, k]) / targets.shape[0] for k in range(targets.shape[1])]
            np.testing.assert_allclose(batch_class_weights(targets), expected, rtol=0, atol=1e-15)

    @given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 10)), elements=st.sampled_from([0, 0.5, 1])))
    def test_weights_stay_in_the_unit_interval(self, targets: np.ndarray) -> None:
        weights = batch_class_weights(targets)
        assert np.all(weights >= 0)
        assert np.all(weights <= 1)

    @pytest.mark.parametrize("targets", [np.zeros((0, 3)), np.zeros(3)])
    def test_rejects_bad_batches(self, targets: np.ndarray) -> None:
        with pytest.raises(ParameterError):
            batch_class_weights(targets)


class TestWeightedCrossEntropy:
    def test_saturated_positive(self) -> None:
        assert weighted_ce_terms(np.array([[40.0]]), np.array([[1.0]]), np.array([1.0]))[0, 0] <= 1e-15

    def test_zero_logit_negative_label(self) -> None:
        value = loss_value(np.array([[0.0]]), np.array([[0.0]]), np.array([1.0]))
        assert value == pytest.approx(math.log(2), abs=1e-12)

    def test_ambiguous_label_at_half_has_no_gradient(self) -> None:
        with float64_mode():
            logits = Tensor(np.zeros((2, 2)), requires_grad=True)
            targets = np.full((2, 2), 0.5)
            backward(weighted_ce_loss(logits, targets, np.array([0.3, 0.9])))
        assert logits.grad is not None
        assert not logits.grad.any()

    def test_zero_weight_class_has_no_gradient(self) -> None:
        with float64_mode():
            logits = Tensor(np.array([[2.0, -1.0], [0.5, 3.0]]), requires_grad=True)
            targets = np.array([[1.0, 0.0], [1.0, 1.0]])
            backward(weighted_ce_loss(logits, targets, batch_class_weights(targets)))
        assert logits.grad is not None
        assert not logits.grad[:, 0].any()
        assert logits.grad[:, 1].all()

    def test_gradient_formula(self) -> None:
        logits_array = np.array([[0.3, -2.0, 1.5]])
        targets = np.array([[1.0, 0.5, 0.0]])
        weights = np.array([0.2, 0.7, 1.0])
        with float64_mode():
            logits = Tensor(logits_array, requires_grad=True)
            backward(weighted_ce_loss(logits, targets, weights))
        expected = weights * (1.0 / (1.0 + np.exp(-logits_array)) - targets)
        np.testing.assert_allclose(logits.grad, expected, atol=1e-12)

    def test_matches_the_scalar_formula(self) -> None:
        rng = np.random.default_rng(1)
        for _ in range(100):
            shape = (int(rng.integers(1, 9)), int(rng.integers(1, 11)))
            logits = rng.uniform(-10, 10, size=shape)
            targets = rng.choice([0.0, 0.5, 1.0], size=shape)
            weights = batch_class_weights(targets)
            assert loss_value(logits, targets) == pytest.approx(scalar_loss(logits, targets, weights), abs=1e-6)

    def test_extreme_logits_stay_finite(self) -> None:
        logits = np.array([[1000.0, -1000.0, 1000.0, -1000.0]])
        targets = np.array([[0.0, 1.0, 1.0, 0.0]])
        value = loss_value(logits, targets, np.ones(4))
        assert value == pytest.approx(2000.0)
        assert math.isfinite(value)

    def test_loss_is_nonnegative(self) -> None:
        rng = np.random.default_rng(2)
        for _ in range(20):
            targets = rng.choice([0.0, 0.5, 1.0], size=(4, 6))
            assert loss_value(rng.normal(scale=5, size=(4, 6)), targets) >= 0

    def test_shape_errors(self) -> None:
        logits = Tensor(np.zeros((2, 3)))
        with pytest.raises(DimensionError):
            weighted_ce_loss(logits, np.zeros((2, 4)), np.ones(3))
        with pytest.raises(DimensionError):
            weighted_ce_loss(logits, np.zeros((2, 3)), np.ones(2))
        with pytest.raises(DimensionError):
            weighted_ce_loss(Tensor(np.zeros(3)), np.zeros(3), np.ones(3))

    def test_non_finite_logits(self) -> None:
        with pytest.raises(NumericError):
            weighted_ce_loss(Tensor(np.array([[np.nan, 0.0]])), np.zeros((1, 2)), np.ones(2))
