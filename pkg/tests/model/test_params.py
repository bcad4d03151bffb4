import numpy as np
import pytest

from attrnet.consts import Phase
from attrnet.errors import ConfigMismatchError
from attrnet.model.checkpoint import Checkpoint
from attrnet.model.config import ModelConfig, build_tinydan, set_trainable
from attrnet.model.params import initialize, mark_trainable, parameter_arrays, warm_start
from tests.conftest import tiny_config


class TestInitialize:
    def test_affine_statistics(self) -> None:
        params = initialize(build_tinydan(5), np.random.default_rng(0))
        weights = params["fc6.weight"].data
        assert weights.size > 100_000
        assert abs(float(weights.mean())) < 4 * 0.005 / np.sqrt(weights.size)
        assert float(weights.std()) == pytest.approx(0.005, rel=0.02)
        for layer in ("fc6", "fcA", "fcB"):
            assert np.all(params[f"{layer}.bias"].data == np.float32(0.1))

    def test_conv_statistics(self) -> None:
        params = initialize(build_tinydan(5), np.random.default_rng(0))
        weights = params["conv2_1.weight"].data
        fan_in = 16 * 3 * 3
        assert float(weights.std()) == pytest.approx(np.sqrt(2.0 / fan_in), rel=0.05)
        assert not params["conv2_1.bias"].data.any()

    def test_shapes_and_dtype(self, tiny_model_config: ModelConfig) -> None:
        params = initialize(tiny_model_config, np.random.default_rng(1))
        assert {name: tensor.shape for name, tensor in params.items()} == tiny_model_config.parameter_shapes()
        assert all(tensor.dtype == np.float32 for tensor in params.values())

    def test_same_seed_same_parameters(self, tiny_model_config: ModelConfig) -> None:
        first = parameter_arrays(initialize(tiny_model_config, np.random.default_rng(3)))
        second = parameter_arrays(initialize(tiny_model_config, np.random.default_rng(3)))
        assert all(np.array_equal(first[name], second[name]) for name in first)


def test_mark_trainable_follows_the_phase(tiny_model_config: ModelConfig) -> None:
    params = initialize(tiny_model_config, np.random.default_rng(1))
    mark_trainable(set_trainable(tiny_model_config, Phase.phase1), params)
    assert not params["conv1_1.weight"].requires_grad
    assert params["fcB.bias"].requires_grad
    mark_trainable(set_trainable(tiny_model_config, Phase.phase2), params)
    assert params["conv4_1.weight"].requires_grad
    assert not params["conv3_2.weight"].requires_grad


class TestWarmStart:
    def _checkpoint(self, num_classes: int = 3) -> Checkpoint:
        config = tiny_config(num_classes=num_classes)
        return Checkpoint(config=config, params=parameter_arrays(initialize(config, np.random.default_rng(10))))

    def test_copies_every_parameter(self, tiny_model_config: ModelConfig) -> None:
        checkpoint = self._checkpoint()
        params = warm_start(initialize(tiny_model_config, np.random.default_rng(11)), checkpoint)
        for name, tensor in params.items():
            np.testing.assert_array_equal(tensor.data, checkpoint.params[name])

    def test_reinitialized_head_keeps_fresh_values(self) -> None:
        checkpoint = self._checkpoint(num_classes=3)
        config = tiny_config(num_classes=6)
        fresh = initialize(config, np.random.default_rng(11))
        params = warm_start(fresh, checkpoint, reinit_layers=("fcA", "fcB"))
        assert params["fcB.weight"].shape == (6, 8)
        np.testing.assert_array_equal(params["fcA.weight"].data, fresh["fcA.weight"].data)
        np.testing.assert_array_equal(params["conv1_1.weight"].data, checkpoint.params["conv1_1.weight"])
        np.testing.assert_array_equal(params["fc6.bias"].data, checkpoint.params["fc6.bias"])

    def test_shape_mismatch(self) -> None:
        fresh = initialize(tiny_config(num_classes=6), np.random.default_rng(11))
        with pytest.raises(ConfigMismatchError, match="fcB"):
            warm_start(fresh, self._checkpoint(num_classes=3))
