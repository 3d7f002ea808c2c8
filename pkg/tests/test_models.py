import numpy as np
import pytest

from mazeflux.dataset import (
    CorpusView,
    NormalizationMeta,
    assemble_operator_samples,
    cell_center_points,
    fit_normalization,
    subsample_points,
)
from mazeflux.errors import ProtocolError, ShapeError
from mazeflux.models import (
    CnnBaseline,
    DeepONetModel,
    FcnBaseline,
    TrainConfig,
    cnn_feature_length,
    conv1d_output_length,
    deeponet_gradient_probe,
    deeponet_predict,
    evaluate_on_function,
    gradient_check_suite,
    inference_timing,
    init_cnn,
    init_deeponet,
    load_checkpoint,
    predict_field,
    save_checkpoint,
    train_cnn,
    train_deeponet,
    train_fcn,
)
from mazeflux.nets import MLPParams, forward, init_adam, init_params
from mazeflux.rng import substream
from mazeflux.transport import TallyGrid

from test_dataset import tiny_corpus


def flat_norm(m, ncells):
    return NormalizationMeta(target_mean=np.zeros(ncells), target_std=np.ones(ncells),
                             branch_mean=np.zeros(m), branch_std=np.ones(m),
                             trunk_lo=np.array([-1.0, -1.0]),
                             trunk_hi=np.array([1.0, 1.0]))


class TestDeepONetPredict:
    def test_zero_branch_gives_bias(self):
        norm = flat_norm(6, 16)
        model = init_deeponet(6, norm, substream(1, "i"), hidden=5, features=4)
        for w in model.branch.weights:
            w[:] = 0.0
        model = DeepONetModel(branch=model.branch, trunk=model.trunk,
                              output_bias=0.37, norm_meta=norm)
        pts = substream(2, "p").uniform(-1, 1, (9, 2))
        pred = deeponet_predict(model, np.ones(6), pts)
        assert np.allclose(pred, 0.37, atol=1e-15)

    def test_scalar_dot_product(self):
        norm = flat_norm(1, 4)
        branch = MLPParams((1, 1), [np.array([[0.0]])], [np.array([2.0])],
                           "tanh", "identity")
        trunk = MLPParams((2, 1), [np.zeros((2, 1))],
                          [np.array([3.0])], "tanh", "identity")
        model = DeepONetModel(branch=branch, trunk=trunk, output_bias=0.0,
                              norm_meta=norm)
        pred = deeponet_predict(model, np.array([0.0]), np.array([[0.1, 0.2]]))
        assert pred[0] == pytest.approx(6.0, abs=1e-14)

    def test_batched_equals_per_point(self):
        norm = flat_norm(8, 16)
        model = init_deeponet(8, norm, substream(3, "i"), hidden=7, features=5)
        u = substream(4, "u").standard_normal(8)
        pts = substream(5, "p").uniform(-1, 1, (11, 2))
        batched = deeponet_predict(model, u, pts)
        single = np.array([deeponet_predict(model, u, pts[i:i + 1])[0]
                           for i in range(11)])
        assert np.abs(batched - single).max() < 1e-12

    def test_sensor_count_mismatch(self):
        norm = flat_norm(8, 16)
        model = init_deeponet(8, norm, substream(6, "i"))
        with pytest.raises(ShapeError):
            deeponet_predict(model, np.ones(9), np.zeros((2, 2)))

    def test_identical_sensors_identical_predictions(self):
        corpus = tiny_corpus(n=6)
        norm = fit_normalization(CorpusView(corpus, tuple(range(6))))
        model = init_deeponet(25, norm, substream(7, "i"), hidden=6, features=4)
        grid = corpus.tally_grid
        u = corpus.entries[0].sensors.values
        a = predict_field(model, u, grid)
        b = predict_field(model, u.copy(), grid)
        assert np.array_equal(a, b)

    def test_trunk_feature_scaling_scales_prediction(self):
        # scaling every trunk output feature by c scales (pred - bias) by c
        norm = flat_norm(5, 9)
        model = init_deeponet(5, norm, substream(8, "i"), hidden=6, features=4)
        u = substream(9, "u").standard_normal(5)
        pts = substream(10, "p").uniform(-1, 1, (7, 2))
        g, _ = forward(model.branch, norm.transform_branch(u))
        f, _ = forward(model.trunk, pts)
        c = 2.7
        base = f @ g + model.output_bias
        scaled = (c * f) @ g + model.output_bias
        assert np.allclose(scaled - model.output_bias,
                           c * (base - model.output_bias), atol=1e-12)


class TestDeepONetTraining:
    def test_overfits_single_function(self):
        corpus = tiny_corpus(n=6)
        view = CorpusView(corpus, (0,))
        norm = fit_normalization(CorpusView(corpus, tuple(range(6))))
        cfg = TrainConfig(iterations=1500, batch_functions=1,
                          points_per_function=36, seed=11, log_every=100)
        model, log = train_deeponet(view, norm, cfg, hidden=24, features=16,
                                    trunk_hidden=(24, 24))
        assert log[-1][1] < 0.05  # final training mse

    def test_loss_improves_over_training(self):
        corpus = tiny_corpus(n=10)
        view = CorpusView(corpus, tuple(range(8)))
        norm = fit_normalization(view)
        cfg = TrainConfig(iterations=600, batch_functions=4,
                          points_per_function=36, seed=13, log_every=20)
        model, log = train_deeponet(view, norm, cfg, hidden=16, features=8)
        first = np.mean([mse for _, mse, _ in log[:5]])
        last = np.mean([mse for _, mse, _ in log[-5:]])
        assert last < first

    def test_deterministic_given_seed(self):
        corpus = tiny_corpus(n=8)
        view = CorpusView(corpus, tuple(range(6)))
        norm = fit_normalization(view)
        cfg = TrainConfig(iterations=120, batch_functions=3,
                          points_per_function=18, seed=17, log_every=40)
        m1, log1 = train_deeponet(view, norm, cfg, hidden=8, features=6)
        m2, log2 = train_deeponet(view, norm, cfg, hidden=8, features=6)
        assert log1 == log2
        for a, b in zip(m1.branch.weights + m1.trunk.weights,
                        m2.branch.weights + m2.trunk.weights):
            assert np.array_equal(a, b)
        assert m1.output_bias == m2.output_bias

    def test_subset_training_runs(self):
        corpus = tiny_corpus(n=8)
        view = CorpusView(corpus, tuple(range(6)))
        norm = fit_normalization(view)
        sub = subsample_points(view, 0.5, 3)
        cfg = TrainConfig(iterations=60, batch_functions=4,
                          points_per_function=12, seed=19)
        model, log = train_deeponet(view, norm, cfg, subset=sub,
                                    hidden=8, features=6)
        assert isinstance(model, DeepONetModel)

    def test_composite_gradients_match_fd(self):
        norm = flat_norm(12, 16)
        model = init_deeponet(12, norm, substream(23, "i"), hidden=9, features=7)
        rng = substream(24, "d")
        worst = deeponet_gradient_probe(
            model.branch, model.trunk, 0.05,
            rng.standard_normal((3, 12)), rng.uniform(-1, 1, (18, 2)),
            rng.standard_normal((3, 6)), rng, n_probes=80)
        assert worst < 1e-4


class TestBaselines:
    def test_conv_output_lengths_ceil_rule(self):
        assert conv1d_output_length(190, 2) == 95
        assert conv1d_output_length(95, 2) == 48
        assert cnn_feature_length(190) == 48 * 16

    def test_fcn_protocol_rejects_mixed_functions(self):
        corpus = tiny_corpus(n=4)
        view = CorpusView(corpus, (0, 1))
        norm = fit_normalization(view)
        samples = list(assemble_operator_samples(view, norm))
        with pytest.raises(ProtocolError):
            train_fcn(samples, norm, TrainConfig(iterations=5, seed=1))

    def test_fcn_pooled_accepts_mixed_functions(self):
        corpus = tiny_corpus(n=4)
        view = CorpusView(corpus, (0, 1))
        norm = fit_normalization(view)
        samples = list(assemble_operator_samples(view, norm))
        model = train_fcn(samples, norm, TrainConfig(iterations=5, seed=1),
                          pooled=True)
        assert model.trained_spec_id == "pooled"

    def test_fcn_fits_single_function(self):
        corpus = tiny_corpus(n=4)
        view = CorpusView(corpus, (2,))
        norm = fit_normalization(CorpusView(corpus, tuple(range(4))))
        samples = list(assemble_operator_samples(view, norm))
        cfg = TrainConfig(iterations=1200, batch_functions=1,
                          points_per_function=36, seed=5)
        model = train_fcn(samples, norm, cfg)
        rep, _ = evaluate_on_function(model, corpus.entries[2], corpus.tally_grid)
        assert rep.r2 > 0.95

    def test_cnn_shapes_and_training(self):
        corpus = tiny_corpus(n=4)
        view = CorpusView(corpus, (0, 1))
        norm = fit_normalization(view)
        samples = list(assemble_operator_samples(view, norm))
        cfg = TrainConfig(iterations=30, batch_functions=2,
                          points_per_function=12, seed=7)
        model = train_cnn(samples, norm, cfg)
        assert model.sensor_count == 25
        pred = predict_field(model, corpus.entries[0].sensors.values,
                             corpus.tally_grid)
        assert pred.shape == (6, 6)

    def test_zero_iterations_returns_initialized_model(self):
        corpus = tiny_corpus(n=4)
        view = CorpusView(corpus, (0,))
        norm = fit_normalization(CorpusView(corpus, (0, 1)))
        samples = list(assemble_operator_samples(view, norm))
        cfg = TrainConfig(iterations=0, seed=3)
        fcn = train_fcn(samples, norm, cfg)
        ref = init_params((2, 64, 64, 64, 1), "tanh", substream(cfg.seed, "init"))
        for a, b in zip(fcn.net.weights, ref.weights):
            assert np.array_equal(a, b)

    def test_gradient_check_suite_all_families(self):
        results = gradient_check_suite(seed=5, n_probes=50)
        assert set(results) == {"deeponet", "fcn", "cnn"}
        for name, worst in results.items():
            assert worst < 1e-4, name


class TestEvaluation:
    def test_truth_against_itself(self):
        corpus = tiny_corpus(n=4)
        entry = corpus.entries[0]
        norm = fit_normalization(CorpusView(corpus, (1, 2, 3)))

        class Oracle:
            norm_meta = norm

        oracle = Oracle()
        # bypass model dispatch: evaluate_on_function needs a model; use a
        # trained-free check through compute_metrics instead
        from mazeflux.metrics import compute_metrics
        rep = compute_metrics(entry.flux.values.ravel(), entry.flux.values.ravel())
        assert rep.r2 == 1.0 and rep.rmse == 0.0 and rep.mae == 0.0

    def test_grid_mismatch_rejected(self):
        corpus = tiny_corpus(n=4)
        norm = fit_normalization(CorpusView(corpus, (0, 1)))
        model = init_deeponet(25, norm, substream(9, "i"), hidden=4, features=3)
        with pytest.raises(ShapeError):
            evaluate_on_function(model, corpus.entries[0], TallyGrid(nx=9, ny=9))

    def test_predictions_nonnegative(self):
        corpus = tiny_corpus(n=4)
        norm = fit_normalization(CorpusView(corpus, (0, 1, 2)))
        model = init_deeponet(25, norm, substream(10, "i"), hidden=4, features=3)
        pred = predict_field(model, corpus.entries[3].sensors.values,
                             corpus.tally_grid)
        assert np.all(pred >= 0)

    def test_inference_timing_positive(self):
        corpus = tiny_corpus(n=4)
        norm = fit_normalization(CorpusView(corpus, (0, 1)))
        model = init_deeponet(25, norm, substream(11, "i"), hidden=4, features=3)
        t = inference_timing(model, 3, corpus.tally_grid)
        assert t > 0


class TestCheckpoints:
    def test_deeponet_round_trip_bitwise(self, tmp_path):
        corpus = tiny_corpus(n=6)
        view = CorpusView(corpus, tuple(range(4)))
        norm = fit_normalization(view)
        cfg = TrainConfig(iterations=40, batch_functions=2,
                          points_per_function=12, seed=21)
        model, _ = train_deeponet(view, norm, cfg, hidden=8, features=6)
        path = tmp_path / "model.mzck"
        save_checkpoint(path, model, extra={"note": "test"})
        loaded, opt, extra = load_checkpoint(path)
        assert extra == {"note": "test"}
        assert opt is None
        u = corpus.entries[5].sensors.values
        a = predict_field(model, u, corpus.tally_grid)
        b = predict_field(loaded, u, corpus.tally_grid)
        assert np.array_equal(a, b)

    def test_optimizer_state_round_trip(self, tmp_path):
        norm = flat_norm(5, 9)
        model = init_deeponet(5, norm, substream(12, "i"), hidden=4, features=3)
        state = init_adam(model.branch, lr=0.002)
        state.m[0][:] = 0.5
        state = type(state)(m=state.m, v=state.v, step_count=7, lr=0.002,
                            beta1=0.9, beta2=0.999, eps_hat=1e-8)
        path = tmp_path / "m.mzck"
        save_checkpoint(path, model, opt_state=state)
        _, loaded_state, _ = load_checkpoint(path)
        assert loaded_state.step_count == 7
        assert loaded_state.lr == 0.002
        assert np.array_equal(loaded_state.m[0], state.m[0])

    def test_fcn_and_cnn_round_trip(self, tmp_path):
        corpus = tiny_corpus(n=4)
        view = CorpusView(corpus, (0,))
        norm = fit_normalization(CorpusView(corpus, (0, 1)))
        samples = list(assemble_operator_samples(view, norm))
        cfg = TrainConfig(iterations=10, batch_functions=1,
                          points_per_function=12, seed=3)
        for model in (train_fcn(samples, norm, cfg), train_cnn(samples, norm, cfg)):
            path = tmp_path / f"{type(model).__name__}.mzck"
            save_checkpoint(path, model)
            loaded, _, _ = load_checkpoint(path)
            u = corpus.entries[0].sensors.values
            assert np.array_equal(predict_field(model, u, corpus.tally_grid),
                                  predict_field(loaded, u, corpus.tally_grid))

    def test_checkpoint_bytes_stable(self, tmp_path):
        norm = flat_norm(5, 9)
        model = init_deeponet(5, norm, substream(13, "i"), hidden=4, features=3)
        p1, p2 = tmp_path / "a.mzck", tmp_path / "b.mzck"
        save_checkpoint(p1, model)
        save_checkpoint(p2, model)
        assert p1.read_bytes() == p2.read_bytes()
