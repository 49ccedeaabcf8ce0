import numpy as np
import pytest

from geoprior.dataio import (
    FeatureSet,
    SynthConfig,
    evaluation_groups,
    generate_longtailed,
    head_tail_split,
    load_features,
    longtailed_counts,
    sample_from_truth,
    save_features,
)
from geoprior.errors import DimensionInconsistent, InvalidConfig, ParseError, ShapeMismatch
from geoprior.geometry import geometry_from_matrix, geometry_similarity


class TestFeatureSet:
    def test_counts(self):
        fs = FeatureSet(np.zeros((5, 2), dtype=np.float32), np.array([0, 0, 1, 1, 1]))
        assert fs.class_counts() == {0: 2, 1: 3}
        assert fs.n_samples == 5 and fs.dim == 2 and fs.n_classes == 2

    def test_rejects_bad_shapes(self):
        with pytest.raises(ShapeMismatch):
            FeatureSet(np.zeros((3, 2), dtype=np.float32), np.array([0, 1]))
        with pytest.raises(ShapeMismatch):
            FeatureSet(np.full((2, 2), np.nan, dtype=np.float32), np.array([0, 1]))

    def test_head_tail_split(self):
        counts = {0: 500, 1: 120, 2: 80, 3: 10}
        head, tail = head_tail_split(counts, 100)
        assert head == {0, 1} and tail == {2, 3}

    def test_evaluation_groups(self):
        counts = {0: 500, 1: 50, 2: 5}
        groups = evaluation_groups(counts)
        assert groups == {"head": {0}, "middle": {1}, "tail": {2}}

    def test_empty_bucket_omitted(self):
        groups = evaluation_groups({0: 500, 1: 5})
        assert "middle" not in groups


class TestCounts:
    def test_balanced(self):
        assert np.array_equal(longtailed_counts(5, 100, 1.0), [100] * 5)

    def test_if100_min_count(self):
        counts = longtailed_counts(10, 1000, 100.0)
        assert counts[0] == 1000
        assert counts[-1] == 10
        assert np.all(np.diff(counts) <= 0)

    def test_ratio_within_rounding(self):
        counts = longtailed_counts(7, 500, 20.0)
        assert counts[0] / counts[-1] == pytest.approx(20.0, abs=1.0)


class TestGenerate:
    def test_balanced_factor_one(self):
        cfg = SynthConfig(classes=4, dim=4, imbalance_factor=1.0, max_count=50, seed=0)
        data, truth = generate_longtailed(cfg)
        assert all(n == 50 for n in data.class_counts().values())
        assert np.array_equal(truth.counts, [50] * 4)

    def test_spectrum_recovered_at_large_n(self):
        spectrum = (8.0, 4.0, 2.0, 1.0, 0.5, 0.25)
        cfg = SynthConfig(classes=2, dim=6, imbalance_factor=1.0, max_count=100_000, spectrum=spectrum, seed=1)
        data, truth = generate_longtailed(cfg)
        rows = data.class_rows(0) - truth.means[0].astype(np.float32)
        g = geometry_from_matrix(rows, 0)
        assert np.abs(g.eigenvalues / np.array(spectrum) - 1.0).max() <= 0.05

    def test_basis_sharing_raises_similarity(self):
        wins = 0
        for seed in range(20):
            cfg = SynthConfig(
                classes=3, dim=8, imbalance_factor=1.0, max_count=500,
                basis_sharing={0: 0, 1: 0, 2: 2}, mean_scale=0.0, seed=seed,
            )
            data, truth = generate_longtailed(cfg)
            geoms = {
                c: geometry_from_matrix(data.class_rows(c) - truth.means[c].astype(np.float32), c)
                for c in range(3)
            }
            shared = geometry_similarity(geoms[0], geoms[1], 5)
            independent = geometry_similarity(geoms[0], geoms[2], 5)
            wins += shared > independent
        assert wins >= 19

    def test_sample_from_truth_reuses_generators(self):
        cfg = SynthConfig(classes=3, dim=5, imbalance_factor=10.0, max_count=100, seed=3)
        _, truth = generate_longtailed(cfg)
        balanced = sample_from_truth(truth, np.array([40, 40, 40]), np.random.default_rng(0))
        assert balanced.class_counts() == {0: 40, 1: 40, 2: 40}
        assert balanced.dim == 5

    def test_invalid_config(self):
        with pytest.raises(InvalidConfig):
            SynthConfig(classes=1, dim=4, imbalance_factor=10.0, max_count=10)
        with pytest.raises(InvalidConfig):
            SynthConfig(classes=4, dim=4, imbalance_factor=0.5, max_count=10)


def random_set(n=100, p=7, classes=4, seed=0):
    rng = np.random.default_rng(seed)
    return FeatureSet(
        rng.standard_normal((n, p)).astype(np.float32),
        rng.integers(0, classes, n).astype(np.int32),
    )


class TestRoundTrip:
    def test_binary_bit_exact(self, tmp_path):
        fs = random_set()
        path = tmp_path / "x.fgeo"
        save_features(fs, path, "binary")
        back = load_features(path)
        assert np.array_equal(fs.features, back.features)
        assert fs.features.tobytes() == back.features.tobytes()
        assert np.array_equal(fs.labels, back.labels)

    def test_csv_value_exact(self, tmp_path):
        fs = random_set(seed=1)
        path = tmp_path / "x.csv"
        save_features(fs, path, "csv")
        back = load_features(path)
        assert np.array_equal(fs.features, back.features)
        assert np.array_equal(fs.labels, back.labels)

    def test_large_roundtrip(self, tmp_path):
        fs = random_set(n=10_000, p=64, seed=2)
        path = tmp_path / "big.fgeo"
        save_features(fs, path, "binary")
        assert np.array_equal(load_features(path).features, fs.features)

    def test_empty_set(self, tmp_path):
        fs = FeatureSet(np.zeros((0, 3), dtype=np.float32), np.zeros(0, dtype=np.int32))
        csv_path = tmp_path / "empty.csv"
        save_features(fs, csv_path, "csv")
        assert csv_path.read_text() == "label,f0,f1,f2\n"
        bin_path = tmp_path / "empty.fgeo"
        save_features(fs, bin_path, "binary")
        assert load_features(bin_path).n_samples == 0

    def test_single_cell(self, tmp_path):
        fs = FeatureSet(np.array([[1.5]], dtype=np.float32), np.array([3]))
        path = tmp_path / "one.csv"
        save_features(fs, path, "csv")
        assert path.read_text() == "label,f0\n3,1.5\n"

    def test_csv_two_rows(self, tmp_path):
        path = tmp_path / "two.csv"
        path.write_text("label,f0,f1\n0,1.0,2.0\n1,3.0,4.0\n")
        fs = load_features(path)
        assert fs.n_samples == 2 and fs.dim == 2

    def test_ragged_row_cites_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,f0,f1\n0,1.0,2.0\n1,3.0\n")
        with pytest.raises(ParseError, match="line 3"):
            load_features(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fgeo"
        path.write_bytes(b"XXXX" + b"\x00" * 30)
        with pytest.raises(ParseError):
            load_features(path)

    def test_truncated_binary(self, tmp_path):
        fs = random_set(seed=3)
        path = tmp_path / "trunc.fgeo"
        save_features(fs, path, "binary")
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(DimensionInconsistent):
            load_features(path)

    def test_binary_is_little_endian(self, tmp_path):
        fs = FeatureSet(np.array([[1.0]], dtype=np.float32), np.array([0]))
        path = tmp_path / "le.fgeo"
        save_features(fs, path, "binary")
        blob = path.read_bytes()
        assert blob[:4] == b"FGEO"
        assert int.from_bytes(blob[4:8], "little") == 1  # version
        assert int.from_bytes(blob[8:16], "little") == 1  # N as u64
        assert int.from_bytes(blob[16:20], "little") == 1  # P
        assert blob[-4:] == np.float32(1.0).tobytes()  # LE float32 payload
