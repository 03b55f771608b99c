import numpy as np
import pytest
from scipy.integrate import trapezoid

from mvdrift.diffgraph import Graph, ParamStore, grad_check, graph_closure
from mvdrift.errors import ConfigError, NumericError
from mvdrift.flow import CouplingFlow, forward, inverse, log_prob, sample


def make_flow(dim=2, n_layers=2, seed=0, scale=None):
    store = ParamStore()
    flow = CouplingFlow(dim, store, np.random.default_rng(seed), n_layers=n_layers, hidden_layers=1, hidden_width=8)
    if scale is not None:
        store.load(scale * np.random.default_rng(seed + 100).standard_normal(store.size))
    return flow, store


def set_constant_scale(flow, c):
    for layer in flow.layers:
        net = layer.scale_net
        last = len(net.widths) - 2
        net.assign(last, np.zeros((net.widths[-1], net.widths[-2])), np.full(net.widths[-1], c))


class TestIdentityFlow:
    def test_standard_normal_density(self):
        flow, store = make_flow()
        graph = Graph(store)
        assert graph.value(log_prob(flow, np.zeros(2), 0.0, graph)) == pytest.approx(-np.log(2 * np.pi))
        graph = Graph(store)
        value = graph.value(log_prob(flow, np.array([1.0, 0.0]), 0.7, graph))
        assert value == pytest.approx(-np.log(2 * np.pi) - 0.5)

    def test_inverse_is_identity(self, rng):
        flow, _ = make_flow()
        x = rng.standard_normal((4, 2))
        z, logdet = inverse(flow, x, 0.0)
        np.testing.assert_array_equal(z, x)
        np.testing.assert_array_equal(logdet, 0.0)

    def test_samples_are_standard_normal(self):
        flow, store = make_flow()
        graph = Graph(store)
        n = 100000
        draws = graph.value(sample(flow, 0.3, np.random.default_rng(5), graph, n))
        assert np.all(np.abs(draws.mean(axis=0)) < 3.0 / np.sqrt(n))
        graph = Graph(store)
        assert np.all(np.isfinite(graph.value(flow.log_prob(draws[:10000], 0.3, graph))))

    def test_fixed_generator_is_reproducible(self):
        flow, store = make_flow(scale=0.3)
        a = Graph(store)
        b = Graph(store)
        np.testing.assert_array_equal(
            a.value(sample(flow, 0.1, np.random.default_rng(2), a, 3)),
            b.value(sample(flow, 0.1, np.random.default_rng(2), b, 3)),
        )


class TestRandomFlow:
    def test_density_integrates_to_one(self):
        flow, store = make_flow(dim=1, scale=0.3, seed=3)
        grid = np.linspace(-30.0, 30.0, 30001)
        graph = Graph(store)
        density = np.exp(graph.value(flow.log_prob(grid[:, None], 0.5, graph)))
        assert trapezoid(density, grid) == pytest.approx(1.0, abs=1e-3)

    def test_forward_inverts_inverse(self, rng):
        flow, store = make_flow(scale=0.3, seed=4)
        x = rng.standard_normal((1000, 2))
        z, logdet = inverse(flow, x, 0.25)
        graph = Graph(store)
        back, forward_logdet = flow.push_forward(graph, z, 0.25)
        assert np.max(np.abs(graph.value(back) - x)) < 1e-8
        np.testing.assert_allclose(graph.value(forward_logdet), logdet, atol=1e-10)
        graph = Graph(store)
        np.testing.assert_allclose(graph.value(forward(flow, z, 0.25, graph)), x, atol=1e-8)

    def test_constant_scale_determinant(self):
        flow, _ = make_flow()
        set_constant_scale(flow, 0.4)
        _, logdet = inverse(flow, np.array([0.3, -0.2]), 0.0)
        assert logdet == pytest.approx(2 * 0.4)

    def test_log_prob_gradient(self, rng):
        flow, store = make_flow(scale=0.3, seed=6)
        x = rng.standard_normal((3, 2))

        def build(graph):
            return graph.mean(flow.log_prob(x, np.array([0.0, 0.5, 1.0]), graph))

        assert grad_check(graph_closure(store, build), store.values.copy()) < 1e-4


class TestFlowErrors:
    def test_scale_overflow(self):
        flow, store = make_flow()
        set_constant_scale(flow, 25.0)
        with pytest.raises(NumericError):
            flow.log_prob(np.zeros((1, 2)), 0.0, Graph(store))

    def test_untransformed_coordinate(self):
        with pytest.raises(ConfigError):
            make_flow(dim=2, n_layers=1)
