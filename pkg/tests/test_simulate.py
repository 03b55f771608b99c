import numpy as np
import pytest

from mvdrift.constants import EIGHT_GAUSSIAN_MEANS, SYSTEM_DEFAULTS
from mvdrift.drift import TrueDrift
from mvdrift.errors import ConfigError, NumericError
from mvdrift.simulate import (
    bridge_fill,
    eight_gaussians,
    euler_maruyama,
    generate,
    irregular_mask,
    resolve_spec,
    sample_bridge,
    time_grid,
)
from mvdrift.types import BridgeSpec, GeneratorSpec


class ZeroDrift:
    def evaluate(self, x, population, t, rng=None):
        return np.zeros_like(x)


class ExplodingDrift:
    def evaluate(self, x, population, t, rng=None):
        return np.full_like(x, np.inf)


class TestEulerMaruyama:
    def test_no_dynamics(self, rng):
        init = rng.standard_normal((5, 2))
        ds = euler_maruyama(ZeroDrift(), init, np.linspace(0, 1, 11), 0.0, rng)
        np.testing.assert_array_equal(ds.states, np.repeat(init[:, None, :], 11, axis=1))

    def test_deterministic_ou_step(self):
        init = np.array([[1.0, 2.0]])
        ds = euler_maruyama(TrueDrift("ou"), init, np.array([0.0, 0.1]), 0.0, 0)
        np.testing.assert_allclose(ds.states[0, 1], [1.0 * (1 - 0.3), 2.0 * (1 - 0.2)])

    def test_same_seed_same_paths(self):
        init = np.zeros((4, 2))
        a = euler_maruyama(TrueDrift("kuramoto"), init, time_grid(1.0, 0.1), 1.0, 3)
        b = euler_maruyama(TrueDrift("kuramoto"), init, time_grid(1.0, 0.1), 1.0, 3)
        np.testing.assert_array_equal(a.states, b.states)

    def test_noise_mask_freezes_coordinates(self, rng):
        init = np.zeros((3, 2))
        ds = euler_maruyama(ZeroDrift(), init, time_grid(1.0, 0.1), 1.0, rng, noise_mask=np.array([1.0, 0.0]))
        np.testing.assert_array_equal(ds.states[:, :, 1], 0.0)
        assert np.any(ds.states[:, :, 0] != 0.0)

    def test_non_finite_state_reports_step(self):
        with pytest.raises(NumericError) as err:
            euler_maruyama(ExplodingDrift(), np.ones((2, 1)), np.linspace(0, 2, 3), 0.0, 0)
        assert err.value.step == 1


class TestBridges:
    def test_endpoints_are_pinned(self, rng):
        spec = BridgeSpec(a=np.array([1.0, -2.0]), b=np.array([0.5, 3.0]), t0=0.2, t1=1.7, n_steps=9, sigma=2.0)
        path = sample_bridge(spec, rng)
        assert path.shape == (10, 2)
        np.testing.assert_array_equal(path[0], spec.a)
        np.testing.assert_array_equal(path[-1], spec.b)

    def test_midpoint_moments(self):
        n = 100000
        paths = bridge_fill(np.zeros((n, 1)), np.zeros((n, 1)), np.linspace(0.0, 1.0, 3), 1.0,
                            np.random.default_rng(21))
        mid = paths[:, 1, 0]
        assert abs(mid.mean()) < 3 * np.sqrt(0.25 / n)
        assert abs(mid.var() - 0.25) < 3 * 0.25 * np.sqrt(2.0 / n)

    def test_noiseless_bridge_is_straight(self, rng):
        spec = BridgeSpec(a=np.array([0.0]), b=np.array([4.0]), t0=0.0, t1=1.0, n_steps=4, sigma=0.0)
        np.testing.assert_allclose(sample_bridge(spec, rng)[:, 0], [0.0, 1.0, 2.0, 3.0, 4.0])

    def test_reversed_interval(self):
        with pytest.raises(ConfigError):
            sample_bridge(BridgeSpec(a=np.zeros(1), b=np.zeros(1), t0=1.0, t1=0.5, n_steps=2))


class TestGenerate:
    def test_kuramoto_defaults(self):
        ds = generate(GeneratorSpec("kuramoto", seed=7))
        assert (ds.n_particles, ds.n_times, ds.dim) == (20, 101, 2)
        assert ds.is_regular
        assert ds.metadata["sigma"] == 1.0

    def test_same_seed_same_dataset(self):
        spec = GeneratorSpec("opinion_dynamics", T=10.0, seed=2)
        np.testing.assert_array_equal(generate(spec).states, generate(spec).states)

    def test_irregular_observations(self):
        ds = generate(GeneratorSpec("ou", n_irregular=20, seed=1))
        assert not ds.is_regular
        assert ds.mask[:, 0].all() and ds.mask[:, -1].all()
        assert ds.mask.sum() < ds.mask.size
        assert np.all(np.isfinite(ds.states))

    def test_observation_noise_changes_states(self):
        clean = generate(GeneratorSpec("circle", seed=4))
        noisy = generate(GeneratorSpec("circle", seed=4, observation_noise=0.5))
        np.testing.assert_array_equal(clean.states[:, 0] == noisy.states[:, 0], False)

    @pytest.mark.parametrize("count", [1, 2, 4])
    def test_jump_count(self, count):
        ds = generate(GeneratorSpec("jump_ou", jump_count=count, seed=count))
        dt = ds.times[1] - ds.times[0]
        increments = np.diff(ds.states, axis=1).max(axis=(0, 2))
        jump_steps = np.flatnonzero(increments > 5.0 * 1.0 * np.sqrt(dt)) + 1
        assert jump_steps.tolist() == [j["step"] for j in ds.metadata["jumps"]]
        assert len(jump_steps) == count

    def test_ou_stationary_variance(self):
        # a finer step than the default keeps the Euler bias on the variance near 1%
        ds = generate(GeneratorSpec("ou", dt=0.01, n_particles=5000, seed=3))
        variance = ds.states[:, -1].var(axis=0)
        np.testing.assert_allclose(variance, [1.0 / (2 * 3.0), 1.0 / (2 * 2.0)], rtol=0.1)

    @pytest.mark.parametrize("system", list(SYSTEM_DEFAULTS))
    def test_defaults_are_regular(self, system):
        spec = resolve_spec(GeneratorSpec(system))
        assert spec.n_irregular is None
        assert set(SYSTEM_DEFAULTS[system]) == {"sigma", "T", "dt", "n_particles", "dim"}

    def test_unknown_system_and_dimension(self):
        with pytest.raises(ConfigError):
            resolve_spec(GeneratorSpec("lorenz"))
        with pytest.raises(ConfigError):
            resolve_spec(GeneratorSpec("ou", dim=3))


class TestEightGaussians:
    def test_planar_mixture(self):
        x = eight_gaussians(8000, 0)
        assert x.shape == (8000, 2)
        means = np.asarray(EIGHT_GAUSSIAN_MEANS)
        assert len({tuple(np.round(m, 9)) for m in means}) == 8
        nearest = np.argmin(((x[:, None, :] - means[None]) ** 2).sum(axis=2), axis=1)
        assert np.bincount(nearest, minlength=8).min() > 500

    def test_repeated_blocks(self):
        x = eight_gaussians(10, 1, dim=5)
        assert x.shape == (10, 5)

    def test_generative_dataset(self):
        ds = generate(GeneratorSpec("eight_gaussians", seed=3))
        assert (ds.n_particles, ds.n_times, ds.dim) == (100, 51, 2)
        np.testing.assert_array_equal(ds.mask.sum(axis=1), 2)


def test_irregular_mask_keeps_ends(rng):
    times = time_grid(5.0, 0.05)
    mask = irregular_mask(50, times, 10, rng)
    assert mask[:, 0].all() and mask[:, -1].all()
    assert 5 < mask.sum(axis=1).mean() < 14
