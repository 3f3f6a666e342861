import numpy as np
import pytest

from kanlab.errors import DomainError
from kanlab.mlp import MlpNetwork, Perceptron, mlp_forward, mlp_param_count, perceptron_forward


class TestPerceptron:
    def test_zero_tanh(self):
        assert perceptron_forward(Perceptron([0.0, 0.0], 0.0, "tanh"), [0.3, -2.0]) == 0.0

    def test_identity_is_affine(self, rng):
        w, x = rng.normal(size=4), rng.normal(size=4)
        got = perceptron_forward(Perceptron(w, 0.25, "identity"), x)
        assert got == pytest.approx(sum(a * b for a, b in zip(w, x)) + 0.25, abs=1e-14)

    def test_relu_clamps(self):
        assert perceptron_forward(Perceptron([1.0, -2.0], 0.5, "relu"), [1.0, 1.0]) == 0.0

    def test_width_mismatch(self):
        with pytest.raises(DomainError):
            perceptron_forward(Perceptron([1.0, 2.0]), [1.0])

    def test_unknown_activation(self):
        with pytest.raises(DomainError):
            Perceptron([1.0], activation="sigmoid")


class TestMlp:
    def test_zero_net(self):
        net = MlpNetwork([np.zeros((3, 2)), np.zeros((1, 3))], [np.zeros(3), np.zeros(1)])
        np.testing.assert_array_equal(mlp_forward(net, [0.4, -0.2]), [0.0])

    def test_single_layer_matches_loop(self, rng):
        w, b = rng.normal(size=(3, 4)), rng.normal(size=3)
        net = MlpNetwork([w], [b], "identity")
        x = rng.normal(size=4)
        expected = [sum(w[j, i] * x[i] for i in range(4)) + b[j] for j in range(3)]
        np.testing.assert_allclose(mlp_forward(net, x), expected, atol=1e-14)

    def test_relu_identity_construction(self, rng):
        net = MlpNetwork([np.array([[1.0], [-1.0]]), np.array([[1.0, -1.0]])], [np.zeros(2), np.zeros(1)], "relu")
        for x in rng.uniform(-10, 10, 100):
            assert mlp_forward(net, [x])[0] == x

    def test_identity_activation_composes_affine_maps(self, rng):
        net = MlpNetwork.create([3, 5, 4, 2], activation="identity", rng=rng)
        x = rng.normal(size=3)
        h = x
        for w, b in zip(net.weights, net.biases):
            h = w @ h + b
        np.testing.assert_allclose(mlp_forward(net, x), h, atol=1e-12)

    def test_output_layer_is_linear(self):
        net = MlpNetwork([np.array([[1.0]]), np.array([[5.0]])], [np.zeros(1), np.array([10.0])])
        assert mlp_forward(net, [100.0])[0] == pytest.approx(15.0)

    def test_batch_equals_single(self, rng):
        net = MlpNetwork.create([2, 6, 3], rng=rng)
        xs = rng.normal(size=(10, 2))
        batch = net(xs)
        for k in range(10):
            np.testing.assert_allclose(batch[k], net(xs[k]), atol=1e-15)

    @pytest.mark.parametrize("shape,count", [([2, 5, 1], 21), ([1, 1], 2), ([3, 7, 2], 44)])
    def test_param_count(self, shape, count):
        assert mlp_param_count(MlpNetwork.create(shape)) == count

    def test_invalid_shape(self):
        with pytest.raises(DomainError):
            MlpNetwork.create([2, 0, 1])

    def test_weights_must_chain(self):
        with pytest.raises(DomainError):
            MlpNetwork([np.zeros((3, 2)), np.zeros((1, 4))], [np.zeros(3), np.zeros(1)])

    def test_input_width(self):
        with pytest.raises(DomainError):
            MlpNetwork.create([2, 3, 1])(np.zeros(3))

    def test_init_bounds(self):
        net = MlpNetwork.create([16, 4, 1], seed=3)
        assert np.abs(net.weights[0]).max() <= 0.25
        assert np.abs(net.weights[1]).max() <= 0.5
        assert net.shape == [16, 4, 1]
