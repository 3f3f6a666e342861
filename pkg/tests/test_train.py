import numpy as np
import pytest

from kanlab.errors import DomainError
from kanlab.interp import fit_residual, spline_fit, uniform_knots
from kanlab.kan import KanLayer, KanNetwork
from kanlab.mlp import MlpNetwork
from kanlab.train import (
    Dataset,
    TrainConfig,
    backward,
    finite_diff_grad,
    grid_refine,
    max_relative_error,
    mse_loss,
    normalize_inputs,
    read_report,
    rmse,
    sgd_step,
    train,
)


def sine_data(n=256):
    x = np.linspace(-1, 1, n)[:, None]
    return Dataset(x, np.sin(np.pi * x))


class TestLoss:
    def test_equal(self):
        assert mse_loss([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_scalar(self):
        assert mse_loss([2.0], [0.0]) == 4.0

    def test_against_loop(self, rng):
        a, b = rng.normal(size=(30, 2)), rng.normal(size=(30, 2))
        total = 0.0
        for u, v in zip(a.ravel(), b.ravel()):
            total += (u - v) ** 2
        assert mse_loss(a, b) == pytest.approx(total / 60, abs=1e-15)
        assert rmse(a, b) == pytest.approx(np.sqrt(total / 60), abs=1e-15)

    def test_empty(self):
        with pytest.raises(DomainError):
            mse_loss([], [])

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            mse_loss([1.0, 2.0], [1.0])


class TestGradients:
    def test_zero_residual(self, rng):
        net = KanNetwork.create([2, 3, 1], rng=rng)
        x = rng.uniform(-1, 1, (10, 2))
        loss, grads = backward(net, x, net(x))
        assert loss == 0.0
        assert all(np.all(g == 0) for g in grads)

    def test_single_edge_hand_chain_rule(self):
        net = KanNetwork.create([1, 1], grid_size=4, degree=3, seed=2)
        x = np.array([[0.3], [-0.6], [0.9]])
        y = np.array([[0.5], [0.1], [-0.2]])
        _, grads = backward(net, x, y)
        from kanlab.interp import design_matrix

        basis = design_matrix(net.layers[0].knots, x[:, 0])
        residual = net(x)[:, 0] - y[:, 0]
        expected = 2 * residual @ basis / 3
        np.testing.assert_allclose(grads[0][0, 0], expected, atol=1e-15)
        np.testing.assert_allclose(grads[0], finite_diff_grad(net, x, y)[0], atol=1e-9)

    @pytest.mark.parametrize("shape", [[1, 1], [2, 5, 1], [3, 7, 2], [2, 3, 3, 1]])
    @pytest.mark.parametrize("linear", [False, True])
    def test_kan_matches_finite_differences(self, rng, shape, linear):
        net = KanNetwork.create(shape, grid_size=5, linear=linear, rng=rng)
        for layer in net.layers:
            layer.coefficients *= 10  # make hidden activations span the grid
            layer.linear_weights[:] = rng.normal(size=layer.linear_weights.shape) * linear
        x = rng.uniform(-1, 1, (12, shape[0]))
        y = rng.normal(size=(12, shape[-1]))
        _, grads = backward(net, x, y)
        assert max_relative_error(grads, finite_diff_grad(net, x, y)) < 1e-5

    @pytest.mark.parametrize("shape", [[1, 1], [2, 5, 1], [3, 7, 2]])
    @pytest.mark.parametrize("activation", ["tanh", "relu", "identity"])
    def test_mlp_matches_finite_differences(self, rng, shape, activation):
        net = MlpNetwork.create(shape, activation, rng=rng)
        x = rng.normal(size=(12, shape[0]))
        y = rng.normal(size=(12, shape[-1]))
        _, grads = backward(net, x, y)
        assert max_relative_error(grads, finite_diff_grad(net, x, y)) < 1e-5

    def test_gradient_order_matches_parameters(self, rng):
        net = KanNetwork.create([2, 3, 1], linear=True, rng=rng)
        _, grads = backward(net, rng.uniform(-1, 1, (4, 2)), np.zeros((4, 1)))
        assert [g.shape for g in grads] == [p.shape for p in net.parameters()]

    def test_finite_diff_quadratic(self):
        # loss = (c - 1)^2 for a constant [1,1] edge evaluated anywhere
        net = KanNetwork.create([1, 1], grid_size=1, degree=0)
        net.layers[0].coefficients[:] = 3.0
        g = finite_diff_grad(net, [[0.2]], [[1.0]])[0]
        assert g[0, 0, 0] == pytest.approx(4.0, abs=1e-9)

    def test_finite_diff_rejects_zero_step(self):
        with pytest.raises(DomainError):
            finite_diff_grad(KanNetwork.create([1, 1]), [[0.0]], [[0.0]], h=0)

    def test_batch_shape_checked(self):
        with pytest.raises(DomainError):
            backward(KanNetwork.create([2, 1]), np.zeros((3, 3)), np.zeros((3, 1)))

    def test_relative_error_floor(self):
        a = [np.array([1e-12, 1.0])]
        b = [np.array([2e-12, 1.0 + 1e-7])]
        assert max_relative_error(a, b) < 1e-5


class TestSgd:
    def test_zero_gradient(self):
        p = [np.array([1.0, 2.0])]
        sgd_step(p, [np.zeros(2)], 0.5)
        np.testing.assert_array_equal(p[0], [1.0, 2.0])

    def test_arithmetic(self):
        p = [np.zeros(2)]
        sgd_step(p, [np.array([1.0, -1.0])], 1.0)
        np.testing.assert_array_equal(p[0], [-1.0, 1.0])

    def test_updates_network_in_place(self):
        net = KanNetwork.create([1, 1], seed=0)
        before = net.layers[0].coefficients.copy()
        params = net.parameters()
        sgd_step(params, [np.ones_like(params[0])], 0.1)
        np.testing.assert_allclose(net.layers[0].coefficients, before - 0.1)

    def test_linear_model_two_steps(self):
        # y = w x on one point: gradient depends on w, so two steps differ from one summed step
        x, y = 2.0, 1.0

        def grad(w):
            return 2 * (w * x - y) * x

        w = np.array([0.0])
        g1 = grad(w[0])
        sgd_step([w], [np.array([g1])], 0.1)
        g2 = grad(w[0])
        sgd_step([w], [np.array([g2])], 0.1)
        assert w[0] == pytest.approx(-0.1 * (g1 + g2))
        assert g1 != g2
        # constant gradients do add up
        v = np.array([0.0])
        sgd_step([v], [np.array([3.0])], 0.1)
        sgd_step([v], [np.array([3.0])], 0.1)
        assert v[0] == pytest.approx(-0.1 * 6.0)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            sgd_step([np.zeros(2)], [np.zeros(3)], 0.1)


class TestNormalize:
    def test_identity_on_unit_box(self):
        data = Dataset(np.array([[-1.0], [0.0], [1.0]]), np.zeros(3))
        out, t = normalize_inputs(data)
        np.testing.assert_array_equal(out.inputs, data.inputs)
        assert not t.degenerate.any()

    def test_affine_formula(self, rng):
        x = np.concatenate([[0.0, 10.0], rng.uniform(0, 10, 20)])[:, None]
        out, t = normalize_inputs(Dataset(x, np.zeros(22)))
        np.testing.assert_allclose(out.inputs, x / 5 - 1, atol=1e-15)

    def test_constant_dimension(self):
        x = np.array([[3.0, 0.0], [3.0, 1.0]])
        out, t = normalize_inputs(Dataset(x, np.zeros(2)))
        np.testing.assert_array_equal(out.inputs[:, 0], 0.0)
        assert t.degenerate.tolist() == [True, False]

    def test_transform_round_trip(self):
        x = np.array([[1.0, -4.0], [2.0, 6.0]])
        _, t = normalize_inputs(Dataset(x, np.zeros(2)))
        assert type(t).from_dict(t.to_dict()).apply(x).tolist() == t.apply(x).tolist()


class TestTrain:
    def test_zero_stays_zero(self):
        net = KanNetwork([KanLayer(1, 1)])
        report = train(net, Dataset(np.linspace(-1, 1, 20)[:, None], np.zeros(20)), TrainConfig(steps=50))
        assert report.losses == [0.0] * 50

    def test_sine_fit_default_config(self):
        net = KanNetwork.create([1, 1], grid_size=10, degree=3, seed=0)
        report = train(net, sine_data(), TrainConfig())
        assert not report.diverged
        assert report.final_train_rmse < 1e-2
        assert len(report.losses) == 2000

    def test_single_layer_loss_non_increasing(self):
        net = KanNetwork.create([1, 1], grid_size=10, degree=3, seed=0)
        report = train(net, sine_data(), TrainConfig(learning_rate=0.05, steps=1000))
        losses = np.array(report.losses)
        assert np.all(np.diff(losses) <= 1e-15)

    def test_deterministic(self):
        reports = []
        for _ in range(2):
            net = KanNetwork.create([2, 3, 1], seed=4)
            x = np.random.default_rng(1).uniform(-1, 1, (64, 2))
            data = Dataset(x, np.sin(x.sum(axis=1)))
            reports.append(train(net, data, TrainConfig(steps=40, batch_size=16, seed=9)))
        assert reports[0].to_csv() == reports[1].to_csv()

    def test_minibatch_seed_matters(self):
        x = np.random.default_rng(1).uniform(-1, 1, (64, 1))
        data = Dataset(x, np.sin(3 * x))
        a = train(KanNetwork.create([1, 1]), data, TrainConfig(steps=20, batch_size=8, seed=1))
        b = train(KanNetwork.create([1, 1]), data, TrainConfig(steps=20, batch_size=8, seed=2))
        assert a.losses != b.losses

    def test_divergence_reported(self):
        net = KanNetwork.create([1, 1], grid_size=10, seed=0)
        report = train(net, sine_data(), TrainConfig(learning_rate=1e4, steps=500))
        assert report.diverged
        assert report.diverged_step is not None
        assert len(report.losses) == report.diverged_step + 1
        assert "diverged=true" in report.to_csv()

    def test_test_split_used(self):
        x = np.linspace(-1, 1, 40)[:, None]
        split = np.array(["train", "test"] * 20)
        report = train(KanNetwork.create([1, 1]), Dataset(x, np.sin(x), split), TrainConfig(steps=10))
        assert np.isfinite(report.final_test_rmse)

    def test_normalized_training(self):
        x = np.linspace(0, 10, 100)[:, None]
        net = KanNetwork.create([1, 1], grid_size=8)
        report = train(net, Dataset(x, np.cos(x / 3)), TrainConfig(steps=300, normalize_inputs=True))
        assert report.transform is not None
        assert report.final_train_rmse < 0.1

    def test_report_csv_layout(self):
        report = train(KanNetwork.create([1, 1]), sine_data(32), TrainConfig(steps=5, seed=3))
        rows, summary = read_report(report.to_csv())
        assert rows[0] == ["step", "loss"]
        assert len(rows) == 6
        assert float(rows[1][1]) == report.losses[0]
        assert summary["seed"] == "3"
        assert summary["params"] == str(report.params)
        assert float(summary["final_train_rmse"]) == report.final_train_rmse
        assert "wall_ms" not in summary
        assert "wall_ms" in read_report(report.to_csv(include_time=True))[1]

    def test_config_validation(self):
        with pytest.raises(DomainError):
            TrainConfig(learning_rate=0)
        with pytest.raises(DomainError):
            TrainConfig(steps=0)


class TestGridRefine:
    def test_same_grid_unchanged(self, rng):
        net = KanNetwork.create([2, 3, 1], grid_size=5, rng=rng)
        x = rng.uniform(-1, 1, (256, 2))
        np.testing.assert_allclose(grid_refine(net, 5)(x), net(x), atol=1e-10)

    def test_constant_edge_exact(self):
        net = KanNetwork.create([1, 1], grid_size=4)
        net.layers[0].coefficients[:] = 0.37
        refined = grid_refine(net, 13)
        np.testing.assert_array_equal(refined.layers[0].coefficients, 0.37)

    def test_refined_output_close(self, rng):
        net = KanNetwork.create([2, 3, 1], grid_size=5, rng=rng)
        for layer in net.layers:
            layer.coefficients *= 5
        x = rng.uniform(-1, 1, (256, 2))
        refined = grid_refine(net, 20)
        assert np.sqrt(np.mean((refined(x) - net(x)) ** 2)) < 1e-6

    def test_sine_edge_refine_then_train(self):
        xs = np.linspace(-1, 1, 256)
        kv5 = uniform_knots((-1, 1), 5, 3)
        net = KanNetwork([KanLayer(1, 1, 5, 3, coefficients=spline_fit(xs, np.sin(np.pi * xs), kv5).coefficients[None, None])])
        data = Dataset(xs[:, None], np.sin(np.pi * xs))
        coarse_loss = train(net.copy(), data, TrainConfig(steps=200)).final_train_rmse
        refined = grid_refine(net, 20)
        probes = np.linspace(-1, 1, 256)[:, None]
        assert np.sqrt(np.mean((refined(probes) - net(probes)) ** 2)) < 1e-6
        fine = train(refined, data, TrainConfig(steps=200, learning_rate=0.2))
        assert fine.final_train_rmse < coarse_loss
        assert fine.final_train_rmse < fit_residual(spline_fit(xs, np.sin(np.pi * xs), kv5), xs, np.sin(np.pi * xs))

    def test_coarsening_rejected(self):
        with pytest.raises(DomainError):
            grid_refine(KanNetwork.create([1, 1], grid_size=8), 4)
