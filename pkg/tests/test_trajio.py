import numpy as np
import pandas as pd
import pytest

from mvdrift.errors import ParseError
from mvdrift.simulate import generate
from mvdrift.trajio import dataset_frame, read_dataset, write_dataset
from mvdrift.types import GeneratorSpec, TrajectoryDataset


def write_text(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestRoundTrip:
    def test_regular(self, tmp_path):
        ds = generate(GeneratorSpec("ou", T=1.0, seed=5))
        path = str(tmp_path / "ou.csv")
        write_dataset(ds, path)
        back = read_dataset(path)
        assert back.is_regular
        np.testing.assert_allclose(back.times, ds.times, rtol=0, atol=1e-12)
        np.testing.assert_allclose(back.states, ds.states, rtol=0, atol=1e-12)

    def test_irregular(self, tmp_path):
        ds = generate(GeneratorSpec("kuramoto", n_irregular=5, seed=1))
        path = str(tmp_path / "irregular.csv")
        write_dataset(ds, path)
        back = read_dataset(path)
        assert not back.is_regular
        assert np.isnan(back.states[~back.mask]).all()
        np.testing.assert_allclose(dataset_frame(back).to_numpy(), dataset_frame(ds).to_numpy(), rtol=0, atol=1e-12)

    def test_full_grid(self, tmp_path):
        ds = generate(GeneratorSpec("kuramoto", n_irregular=5, seed=1))
        path = str(tmp_path / "full.csv")
        write_dataset(ds, path, observed_only=False)
        back = read_dataset(path)
        assert back.is_regular
        np.testing.assert_allclose(back.states, ds.states, atol=1e-12)


def test_frame_layout():
    ds = TrajectoryDataset(np.array([0.0, 0.5]), np.arange(8, dtype=float).reshape(2, 2, 2))
    frame = dataset_frame(ds)
    assert list(frame.columns) == ["particle_id", "t", "x0", "x1"]
    assert frame["particle_id"].tolist() == [0, 0, 1, 1]
    assert frame["t"].tolist() == [0.0, 0.5, 0.0, 0.5]


def test_hand_written_file(tmp_path):
    path = write_text(tmp_path, "particle_id,t,x0\n0,0,1.0\n0,1,2.0\n1,0,3.0\n1,1,4.0\n")
    ds = read_dataset(path, metadata={"sigma": 0.5})
    assert (ds.n_particles, ds.n_times, ds.dim) == (2, 2, 1)
    np.testing.assert_array_equal(ds.states[:, :, 0], [[1.0, 2.0], [3.0, 4.0]])
    assert ds.metadata["sigma"] == 0.5


def test_unsorted_rows_are_placed(tmp_path):
    path = write_text(tmp_path, "particle_id,t,x0\n1,1,4.0\n0,0,1.0\n1,0,3.0\n0,1,2.0\n")
    np.testing.assert_array_equal(read_dataset(path).states[:, :, 0], [[1.0, 2.0], [3.0, 4.0]])


class TestMalformed:
    def test_empty(self, tmp_path):
        with pytest.raises(ParseError) as err:
            read_dataset(write_text(tmp_path, ""))
        assert err.value.line == 1

    def test_header_only(self, tmp_path):
        with pytest.raises(ParseError):
            read_dataset(write_text(tmp_path, "particle_id,t,x0\n"))

    @pytest.mark.parametrize("header", ["id,t,x0", "particle_id,t,y0", "particle_id,t,x1", "particle_id,t"])
    def test_bad_header(self, tmp_path, header):
        with pytest.raises(ParseError) as err:
            read_dataset(write_text(tmp_path, f"{header}\n0,0,1\n"))
        assert err.value.line == 1

    def test_non_numeric_field(self, tmp_path):
        path = write_text(tmp_path, "particle_id,t,x0\n0,0,1.0\n0,1,abc\n")
        with pytest.raises(ParseError) as err:
            read_dataset(path)
        assert err.value.line == 3
        assert "abc" in str(err.value)

    def test_fractional_particle_id(self, tmp_path):
        with pytest.raises(ParseError) as err:
            read_dataset(write_text(tmp_path, "particle_id,t,x0\n0,0,1\n0.5,1,2\n"))
        assert err.value.line == 3

    def test_repeated_pair(self, tmp_path):
        with pytest.raises(ParseError):
            read_dataset(write_text(tmp_path, "particle_id,t,x0\n0,0,1\n0,0,2\n0,1,3\n"))

    def test_missing_endpoint(self, tmp_path):
        text = "particle_id,t,x0\n0,0,1\n0,1,2\n1,0,3\n"
        with pytest.raises(ParseError):
            read_dataset(write_text(tmp_path, text))


def test_written_file_is_plain_csv(tmp_path):
    ds = generate(GeneratorSpec("mean_field_atlas", T=0.5, seed=2))
    path = str(tmp_path / "atlas.csv")
    write_dataset(ds, path)
    frame = pd.read_csv(path)
    assert len(frame) == ds.n_particles * ds.n_times
    assert list(frame.columns) == ["particle_id", "t", "x0"]
