import numpy as np
import pandas as pd
import pytest

from mvdrift.drift import TrueDrift, build_drift
from mvdrift.errors import ConfigError
from mvdrift.metrics import (
    RESULT_COLUMNS,
    append_results,
    crps,
    drift_mse,
    ecdf_distances,
    energy_distance_sq,
    marginal_ecdf_distances,
    marginal_ks,
    terminal_crps,
)
from mvdrift.types import ArchitectureSpec, EvalGrid


def zero_drift(dim=2):
    model = build_drift(ArchitectureSpec(variant="ito_mlp", dim=dim, f_layers=0))
    model.f_net.zero()
    return model


class TestDriftMse:
    def test_zero_estimate_against_ou(self):
        grid = EvalGrid.lattice(-1.0, 1.0, 3, 2)
        # mean of (9 x^2 + 4 y^2) / 2 over {-1, 0, 1}^2
        assert drift_mse(zero_drift(), TrueDrift("ou"), grid) == pytest.approx(13.0 / 3.0)

    def test_truth_against_itself(self, rng):
        cloud = rng.standard_normal((30, 2))
        truth = TrueDrift("kuramoto")
        assert drift_mse(truth, truth, cloud, cloud) == 0.0

    def test_grid_from_cloud(self, rng):
        cloud = rng.standard_normal((10, 2))
        expected = np.mean(np.sum(TrueDrift("ou").evaluate(cloud) ** 2, axis=1)) / 2
        assert drift_mse(zero_drift(), TrueDrift("ou"), EvalGrid.from_cloud(cloud)) == pytest.approx(expected)


class TestEnergyDistance:
    def test_identical_samples(self, rng):
        x = rng.standard_normal((50, 3))
        assert energy_distance_sq(x, x.copy()) == 0.0

    def test_point_masses(self):
        assert energy_distance_sq(np.zeros((5, 1)), np.ones((7, 1))) == pytest.approx(2.0)

    def test_blocks_match_direct_sum(self, rng):
        p, q = rng.standard_normal((3000, 2)), rng.standard_normal((100, 2)) + 0.5
        direct = (
            2 * np.mean(np.linalg.norm(p[:, None] - q[None], axis=2))
            - np.mean(np.linalg.norm(q[:, None] - q[None], axis=2))
        )
        pp = np.mean([np.linalg.norm(p - row, axis=1).mean() for row in p])
        assert energy_distance_sq(p, q) == pytest.approx(direct - pp, rel=1e-9)

    @pytest.mark.slow
    def test_same_law(self):
        rng = np.random.default_rng(5)
        assert energy_distance_sq(rng.standard_normal(10000), rng.standard_normal(10000)) < 0.02

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            energy_distance_sq(np.zeros((3, 2)), np.zeros((3, 1)))


class TestCrps:
    def test_two_member_ensembles(self):
        assert crps(np.array([0.0, 1.0]), 0.5) == pytest.approx(0.25)
        assert crps(np.array([0.0, 0.0]), 0.5) == pytest.approx(0.5)
        assert crps(np.array([1.0, 0.0]), 0.0) == pytest.approx(0.25)

    def test_perfect_forecast(self):
        assert crps(np.full(10, 2.0), 2.0) == 0.0

    def test_matches_pairwise_form(self, rng):
        members, obs = rng.standard_normal(40), 0.3
        pairwise = np.mean(np.abs(members - obs)) - 0.5 * np.mean(np.abs(members[:, None] - members[None]))
        assert crps(members, obs) == pytest.approx(pairwise)

    def test_multivariate_average(self):
        ensemble = np.array([[0.0, 0.0], [1.0, 0.0]])
        assert crps(ensemble, np.array([0.5, 0.5])) == pytest.approx((0.25 + 0.5) / 2)
        with pytest.raises(ConfigError):
            crps(ensemble, np.zeros(3))

    def test_terminal_average(self):
        assert terminal_crps(np.array([0.0, 1.0]), np.array([0.5, 0.5])) == pytest.approx(0.25)


class TestEcdf:
    def test_same_sample(self, rng):
        a = rng.standard_normal(100)
        d = ecdf_distances(a, a.copy())
        assert (d.mean, d.p75, d.p90, d.ks) == (0.0, 0.0, 0.0, 0.0)

    def test_disjoint_samples(self):
        d = ecdf_distances(np.zeros(10), np.ones(10))
        assert d.ks == 1.0
        assert 0.0 < d.mean <= 1.0

    def test_large_normal_samples(self):
        rng = np.random.default_rng(17)
        assert ecdf_distances(rng.standard_normal(10000), rng.standard_normal(10000)).ks < 0.03

    def test_empty(self):
        with pytest.raises(ConfigError):
            ecdf_distances(np.array([]), np.zeros(3))

    def test_time_marginals(self, rng):
        paths = rng.standard_normal((20, 4, 1))
        d = marginal_ecdf_distances(paths, paths)
        assert d.ks == 0.0
        assert marginal_ks(paths, paths + 100.0) == 1.0

    def test_multivariate_marginals_are_skipped(self, rng):
        paths = rng.standard_normal((20, 4, 2))
        with pytest.warns(RuntimeWarning):
            assert np.isnan(marginal_ks(paths, paths))
        with pytest.warns(RuntimeWarning):
            assert marginal_ecdf_distances(paths, paths) is None


def test_results_file(tmp_path):
    path = str(tmp_path / "results.csv")
    append_results(path, "ou_ito", {"drift_mse": 0.125, "crps": 1.5}, seed=0)
    append_results(path, "ou_ito", {"drift_mse": 0.25}, seed=1)
    frame = pd.read_csv(path)
    assert list(frame.columns) == RESULT_COLUMNS
    assert frame["metric"].tolist() == ["drift_mse", "crps", "drift_mse"]
    assert frame["value"].tolist() == [0.125, 1.5, 0.25]
    assert frame["seed"].tolist() == [0, 0, 1]
