import numpy as np
import pytest

from mvdrift.basics import standard_normal_logpdf
from mvdrift.diffgraph import Graph, ParamStore, grad_check, graph_closure
from mvdrift.drift import TrueDrift, build_drift
from mvdrift.errors import ConfigError, TrainingDivergedError, UsageError
from mvdrift.estimate import (
    batch_compatibility,
    compatibility_criterion,
    girsanov_loglik,
    im_norm_probe,
    impute_paths,
    linear_fp_elbo,
    path_loglik,
    refine_grid,
    train,
    train_bridge,
    train_mle,
    train_ml,
)
from mvdrift.simulate import generate
from mvdrift.types import ArchitectureSpec, EvalGrid, GeneratorSpec, TrainConfig, TrajectoryDataset


def linear_ito(dim=1):
    return build_drift(ArchitectureSpec(variant="ito_mlp", dim=dim, f_layers=0, hidden_width=4))


def constant_drift(c):
    model = linear_ito()
    model.f_net.assign(0, np.zeros((1, 2)), np.array([c]))
    return model


def one_particle(times, path):
    return TrajectoryDataset(np.asarray(times, float), np.asarray(path, float)[None, :, None], metadata={"sigma": 1.0})


@pytest.fixture
def tiny_paths(rng):
    """Two particles observed at three times in R^2."""
    return rng.standard_normal((2, 3, 2)), np.array([0.0, 0.1, 0.25])


@pytest.fixture(scope="module")
def ou_data():
    return generate(GeneratorSpec("ou", T=0.5, n_particles=8, seed=0))


class GaussianMarginals:
    """Independent centred Gaussian density with per-coordinate variance v(t)."""

    def __init__(self, variance):
        self.variance = variance

    def values(self, x, t):
        v = self.variance(np.asarray(t, float).reshape(-1, 1))
        return np.sum(-0.5 * np.log(2 * np.pi * v) - 0.5 * x ** 2 / v, axis=1)

    def log_prob(self, x, t, graph):
        h = graph.constant(x) if isinstance(x, np.ndarray) else x
        n_rows, dim = graph.shape(h)
        v = np.broadcast_to(self.variance(np.asarray(t, float).reshape(-1, 1)), (n_rows, dim))
        quad = graph.sum(graph.mul(graph.square(h), graph.constant(-0.5 / v)), axis=1)
        return graph.add(quad, graph.constant(np.sum(-0.5 * np.log(2 * np.pi * v), axis=1)))


def ou_variance(t, rates=(3.0, 2.0), sigma=1.0):
    rates = np.asarray(rates)
    decay = np.exp(-2 * rates * t)
    return decay + sigma ** 2 * (1 - decay) / (2 * rates)


class TestGirsanov:
    def test_zero_drift(self):
        model = constant_drift(0.0)
        ds = one_particle([0.0, 0.1, 0.3], [0.0, 0.4, -0.2])
        graph = Graph(model.store)
        assert graph.value(girsanov_loglik(model, ds, 0, graph)) == 0.0

    def test_single_step(self):
        model = constant_drift(1.0)
        ds = one_particle([0.0, 0.1], [0.0, 0.5])
        graph = Graph(model.store)
        assert graph.value(girsanov_loglik(model, ds, 0, graph)) == pytest.approx(0.5 - 0.5 * 0.1)

    def test_constant_drift_telescopes(self, rng):
        c = -1.7
        model = constant_drift(c)
        times = np.cumsum(np.r_[0.0, rng.uniform(0.05, 0.2, size=9)])
        path = rng.standard_normal(10)
        graph = Graph(model.store)
        ll = graph.value(girsanov_loglik(model, one_particle(times, path), 0, graph))
        assert ll == pytest.approx(c * (path[-1] - path[0]) - 0.5 * c ** 2 * (times[-1] - times[0]))

    def test_sigma_scaling(self):
        model = constant_drift(1.0)
        ds = one_particle([0.0, 0.1], [0.0, 0.5])
        graph = Graph(model.store)
        ll = graph.value(girsanov_loglik(model, ds, 0, graph, sigma=2.0))
        assert ll == pytest.approx((0.5 - 0.05) / 4.0)

    def test_irregular_particle_rejected(self):
        ds = generate(GeneratorSpec("ou", n_irregular=3, seed=0))
        model = build_drift(ArchitectureSpec(variant="ito_mlp", dim=2, f_layers=0))
        particle = int(np.flatnonzero(~ds.mask.all(axis=1))[0])
        with pytest.raises(UsageError):
            girsanov_loglik(model, ds, particle, Graph(model.store))

    @pytest.mark.parametrize("variant", ["ito_mlp", "em", "im", "ml"])
    def test_gradient(self, variant, small_arch, tiny_paths):
        paths, times = tiny_paths
        model = build_drift(small_arch(variant), seed=5)
        clouds = np.swapaxes(paths[:, :-1], 0, 1)

        def build(graph):
            return graph.sum(path_loglik(graph, model, paths, times, 0.7, clouds, np.random.default_rng(0)))

        assert grad_check(graph_closure(model.store, build), model.store.values) < 1e-4


class TestBridges:
    def test_regular_data_is_kept(self, ou_data, rng):
        paths = impute_paths(ou_data, np.arange(ou_data.n_particles), 1.0, rng)
        np.testing.assert_array_equal(paths, ou_data.states)

    def test_refined_grid_passes_through_observations(self, ou_data, rng):
        paths = impute_paths(ou_data, np.arange(3), 1.0, rng, substeps=3)
        assert paths.shape[1] == 3 * (ou_data.n_times - 1) + 1
        np.testing.assert_array_equal(paths[:, ::3], ou_data.states[:3])
        np.testing.assert_allclose(refine_grid(ou_data.times, 3)[::3], ou_data.times)

    def test_irregular_gaps_are_filled(self, rng):
        ds = generate(GeneratorSpec("kuramoto", n_irregular=4, seed=2))
        paths = impute_paths(ds, np.arange(ds.n_particles), 1.0, rng)
        assert np.all(np.isfinite(paths))
        np.testing.assert_array_equal(paths[ds.mask], ds.states[ds.mask])

    def test_bridge_loss_gradient(self, small_arch, tiny_paths):
        paths, times = tiny_paths
        mask = np.ones((2, 3), dtype=bool)
        mask[0, 1] = False
        ds = TrajectoryDataset(times, paths, mask, {"sigma": 1.0})
        filled = impute_paths(ds, np.arange(2), 1.0, np.random.default_rng(3), substeps=2)
        fine = refine_grid(times, 2)
        model = build_drift(small_arch("em"), seed=1)
        clouds = np.swapaxes(filled[:, :-1], 0, 1)

        def build(graph):
            return graph.mean(path_loglik(graph, model, filled, fine, 1.0, clouds))

        assert grad_check(graph_closure(model.store, build), model.store.values) < 1e-4


class TestCompatibilityCriterion:
    def test_stationary_density_without_motion(self):
        density = GaussianMarginals(lambda t: np.ones_like(t))
        still = constant_drift(0.0)
        graph = Graph(still.store)
        cc = compatibility_criterion(
            still, np.array([[0.3], [-1.2]]), 0.0, 0.1, 4, graph, 0, density=density, sigma=0.0
        )
        assert graph.value(cc) == pytest.approx(0.0, abs=1e-14)

    def test_deterministic_ou_paths(self):
        truth = TrueDrift("ou")
        density = GaussianMarginals(ou_variance)
        x = np.array([[0.5, -0.4], [1.0, 0.2]])
        t0, t1 = 0.2, 0.25
        graph = Graph(ParamStore())
        cc = compatibility_criterion(truth, x, t0, t1, 3, graph, 0, density=density, sigma=0.0, steps=2)
        z = x.copy()
        for k in range(2):
            z = z + truth.evaluate(z, None, t0 + k * 0.025) * 0.025
        gap = density.values(x, np.full(2, t0)) - density.values(z, np.full(2, t1))
        assert graph.value(cc) == pytest.approx(np.mean(gap ** 2), rel=1e-10)

    def test_heat_flow_spreads_the_normal(self):
        density = GaussianMarginals(lambda t: np.ones_like(t))
        still = constant_drift(0.0)
        graph = Graph(still.store)
        cc = compatibility_criterion(
            still, np.array([0.0]), 0.0, 0.1, 20000, graph, 11, density=density
        )
        # log p_0(0) - E log p(W_0.1) = 0.05 for the standard normal
        assert graph.value(cc) == pytest.approx(0.05 ** 2, rel=0.1)

    def test_gradient_through_drift_and_flow(self, small_arch, rng):
        model = build_drift(small_arch("ml"), seed=2)
        x = rng.standard_normal((2, 2))

        def build(graph):
            return compatibility_criterion(model, x, 0.1, 0.2, 2, graph, np.random.default_rng(4), sigma=0.5)

        assert grad_check(graph_closure(model.store, build), model.store.values) < 1e-4

    def test_needs_a_density(self):
        model = linear_ito()
        with pytest.raises(UsageError):
            compatibility_criterion(model, np.zeros(1), 0.0, 1.0, 2, Graph(model.store))

    def test_reversed_interval(self, small_arch):
        model = build_drift(small_arch("ml"))
        with pytest.raises(UsageError):
            compatibility_criterion(model, np.zeros(2), 1.0, 0.5, 2, Graph(model.store))


class TestBatchCompatibility:
    @pytest.fixture
    def setting(self, small_arch, quick_train, rng):
        model = build_drift(small_arch("ml"), seed=3)
        times = np.array([0.0, 0.1, 0.25, 0.3])
        return model, rng.standard_normal((3, 4, 2)), times, quick_train(cc_samples=2)

    def test_every_interval_once_gives_the_sum(self, setting):
        model, paths, times, cfg = setting
        graph = Graph(model.store)
        total = batch_compatibility(graph, model, paths, times, np.arange(3), cfg, 0.5, np.random.default_rng(7))
        value = graph.value(total)
        draws = np.random.default_rng(7)
        graph = Graph(model.store)
        parts = [
            graph.value(compatibility_criterion(model, paths[j, j], times[j], times[j + 1], 2, graph, draws, sigma=0.5))
            for j in range(3)
        ]
        assert value == pytest.approx(sum(parts), rel=1e-12)

    def test_one_interval_is_scaled_to_the_grid(self, setting):
        model, paths, times, cfg = setting
        graph = Graph(model.store)
        value = graph.value(
            batch_compatibility(graph, model, paths, times, np.array([1, 1, 1]), cfg, 0.5, np.random.default_rng(2))
        )
        graph = Graph(model.store)
        single = graph.value(
            compatibility_criterion(model, paths[:, 1], times[1], times[2], 2, graph, np.random.default_rng(2),
                                    sigma=0.5)
        )
        assert value == pytest.approx(3 * single, rel=1e-12)


class TestFokkerPlanck:
    def test_zero_drift_gaussian_expectation(self):
        model = constant_drift(0.0)
        graph = Graph(model.store)
        n, T = 100000, 0.1
        elbo = graph.value(linear_fp_elbo(model, np.array([1.0]), graph, 8, T=T, steps=1, n_paths=n))
        expected = -0.5 * np.log(2 * np.pi) - 0.5 * (1 + T)
        # Var of -(1 + W_T)^2 / 2 is (4 T + 2 T^2) / 4
        assert abs(elbo - expected) < 3 * np.sqrt((4 * T + 2 * T ** 2) / 4 / n)

    def test_unit_divergence_contributes_minus_horizon(self):
        model = linear_ito()
        model.f_net.assign(0, np.array([[1.0, 0.0]]), np.zeros(1))
        graph = Graph(model.store)
        x, T, steps, paths, seed = np.array([[0.4], [-0.3]]), 0.5, 4, 3, 9
        elbo = graph.value(linear_fp_elbo(model, x, graph, seed, T=T, steps=steps, n_paths=paths))

        dt = T / steps
        increments = np.sqrt(dt) * np.random.default_rng(seed).standard_normal((len(x) * paths, steps, 1))
        walk = np.repeat(x, paths, axis=0)[:, None, :] + np.concatenate(
            [np.zeros((len(x) * paths, 1, 1)), np.cumsum(increments, axis=1)], axis=1
        )
        b = walk[:, :-1, 0]
        girsanov = np.sum(b * increments[:, :, 0] - 0.5 * b ** 2 * dt, axis=1)
        without_divergence = np.mean(girsanov + standard_normal_logpdf(walk[:, -1]))
        assert elbo == pytest.approx(without_divergence - T, rel=1e-10)

    @pytest.mark.parametrize("variant", ["ito_mlp", "em", "im"])
    def test_gradient(self, variant, small_arch, rng):
        model = build_drift(small_arch(variant), seed=6)
        x = rng.standard_normal((2, 2))

        def build(graph):
            return linear_fp_elbo(model, x, graph, 1, T=0.2, steps=3, n_paths=2)

        assert grad_check(graph_closure(model.store, build), model.store.values) < 1e-4

    def test_marginal_law_drift_rejected(self, small_arch):
        model = build_drift(small_arch("ml"))
        with pytest.raises(UsageError):
            linear_fp_elbo(model, np.zeros(2), Graph(model.store))


class TestProbe:
    def test_zero_interaction(self, small_arch, ou_data):
        model = build_drift(small_arch("im"), seed=1)
        model.phi_net.zero()
        assert im_norm_probe(model, ou_data) == 0.0

    def test_irregular_data(self, small_arch):
        ds = generate(GeneratorSpec("ou", n_irregular=5, seed=3))
        model = build_drift(small_arch("im"), seed=1)
        assert np.isfinite(im_norm_probe(model, ds))

    def test_unit_rows_give_one(self):
        spec = ArchitectureSpec(variant="im", dim=1, f_layers=0, phi_layers=1, hidden_width=2, activation="relu",
                                width=4)
        model = build_drift(spec)
        # phi(x, w, t) = relu(w) + relu(-w) = |w|^2 on rows of norm one
        model.phi_net.assign(0, np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]]))
        model.phi_net.assign(1, np.array([[1.0, 1.0]]))
        model.store.set(model.w0, np.array([[1.0], [-1.0], [1.0], [-1.0]]))
        ds = generate(GeneratorSpec("mean_field_atlas", T=0.5, seed=0))
        assert im_norm_probe(model, ds) == pytest.approx(1.0, rel=1e-12)


class TestTraining:
    @pytest.mark.parametrize(
        "variant, estimator",
        [("ito_mlp", "mle"), ("em", "mle"), ("em", "bridge"), ("im", "bridge"), ("ml", "marginal"),
         ("im", "fokker_planck")],
    )
    def test_smoke(self, variant, estimator, small_arch, quick_train, ou_data):
        model = build_drift(small_arch(variant), seed=0)
        before = model.store.values.copy()
        report = train(model, ou_data, quick_train(estimator=estimator))
        assert len(report.loss_trace) == 2
        assert np.all(np.isfinite(report.loss_trace))
        assert not np.array_equal(before, model.store.values)
        np.testing.assert_array_equal(report.final_parameters, model.store.values)

    def test_marginal_traces(self, small_arch, quick_train, ou_data):
        model = build_drift(small_arch("ml"), seed=0)
        report = train(model, ou_data, quick_train(estimator="marginal"))
        assert set(report.traces) == {"elbo", "log_density", "cc"}
        assert all(v >= 0 for v in report.traces["cc"])

    def test_same_seed_same_parameters(self, small_arch, quick_train, ou_data):
        runs = []
        for _ in range(2):
            model = build_drift(small_arch("em"), seed=4)
            train(model, ou_data, quick_train(estimator="bridge", seed=9))
            runs.append(model.store.values)
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_irregular_data_on_bridge_estimator(self, small_arch, quick_train):
        ds = generate(GeneratorSpec("kuramoto", n_irregular=5, n_particles=6, seed=1))
        model = build_drift(small_arch("ito_mlp"), seed=0)
        report = train(model, ds, quick_train(estimator="bridge", bridge_substeps=2))
        assert np.all(np.isfinite(report.loss_trace))

    def test_fokker_planck_on_samples(self, small_arch, quick_train, rng):
        model = build_drift(small_arch("ito_mlp"), seed=0)
        samples = rng.standard_normal((10, 2))
        report = train(model, samples, quick_train(estimator="fokker_planck", sigma=1.0, horizon=0.1))
        assert len(report.loss_trace) == 2
        with pytest.raises(ConfigError):
            train(model, samples, quick_train(estimator="fokker_planck", sigma=1.0))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_is_reported(self, quick_train, ou_data):
        model = build_drift(ArchitectureSpec(variant="ito_mlp", dim=2, f_layers=0))
        model.f_net.assign(0, np.zeros((2, 3)), np.full(2, 1e200))
        with pytest.raises(TrainingDivergedError) as err:
            train(model, ou_data, quick_train())
        assert (err.value.epoch, err.value.step) == (1, 1)
        assert err.value.report.aborted
        assert err.value.exit_code == 3

    def test_unknown_estimator(self, small_arch, ou_data):
        with pytest.raises(ConfigError):
            train(build_drift(small_arch("ito_mlp")), ou_data, TrainConfig(estimator="sgd"))

    def test_estimator_requirements(self, small_arch, quick_train):
        irregular = generate(GeneratorSpec("ou", n_irregular=5, seed=0))
        with pytest.raises(UsageError):
            train_mle(build_drift(small_arch("ito_mlp")), irregular, quick_train())
        with pytest.raises(UsageError):
            train_ml(build_drift(small_arch("ito_mlp")), irregular, quick_train())

    def test_missing_sigma(self, small_arch, quick_train, ou_data):
        ds = TrajectoryDataset(ou_data.times, ou_data.states)
        with pytest.raises(ConfigError):
            train(build_drift(small_arch("ito_mlp")), ds, quick_train())

    def test_bridges_on_complete_data_match_mle(self, small_arch, quick_train, ou_data):
        traces = []
        for trainer in (train_mle, train_bridge):
            model = build_drift(small_arch("ito_mlp"), seed=3)
            cfg = quick_train(epochs=1, batch_size=ou_data.n_particles, n_bridges=3)
            traces.append(trainer(model, ou_data, cfg).loss_trace[0])
        assert traces[1] == pytest.approx(traces[0], rel=1e-12)

    def test_mle_shrinks_drift_on_driftless_data(self, small_arch):
        rng = np.random.default_rng(8)
        times = np.linspace(0.0, 2.0, 41)
        steps = np.sqrt(0.05) * rng.standard_normal((20, 40, 2))
        walk = np.concatenate([np.zeros((20, 1, 2)), np.cumsum(steps, axis=1)], axis=1)
        ds = TrajectoryDataset(times, rng.standard_normal((20, 1, 2)) + walk, metadata={"sigma": 1.0})
        model = build_drift(small_arch("ito_mlp"), seed=0)
        model.store.set(model.f_net.biases[-1], np.full(2, 2.0))
        grid = EvalGrid.lattice(-1.0, 1.0, 5, 2).points

        def magnitude():
            return np.mean(np.linalg.norm(model.evaluate(grid, None, 1.0), axis=1))

        before = magnitude()
        train_mle(model, ds, TrainConfig(epochs=150, batch_size=20, lr=5e-2, log_every=0))
        assert magnitude() <= 0.5 * before

    @pytest.mark.slow
    def test_marginal_training_reduces_the_criterion(self, small_arch):
        ds = generate(GeneratorSpec("ou", T=1.0, n_particles=20, seed=4))
        model = build_drift(small_arch("ml"), seed=0)
        # a large constant drift is incompatible with the flow's near-static marginals
        model.store.set(model.f_net.biases[-1], np.full(2, 5.0))
        cfg = TrainConfig(estimator="marginal", epochs=100, batch_size=10, lr=3e-2, cc_samples=4, log_every=0)
        cc = np.asarray(train_ml(model, ds, cfg).traces["cc"])
        assert np.mean(cc[-10:]) < np.mean(cc[:10])
