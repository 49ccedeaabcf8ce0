import json

import numpy as np
import pytest

from geoprior.cli import main
from geoprior.dataio import load_features


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = run(["synth", "--classes", 6, "--dim", 8, "--if", 20, "--max", 120, "--seed", 3, "--out", out])
    assert code == 0
    return out


class TestSynth:
    def test_outputs_exist(self, synth_dir):
        for name in ["dataset.fgeo", "dataset.csv", "manifest.json"]:
            assert (synth_dir / name).exists()

    def test_counts_follow_profile(self, synth_dir):
        manifest = json.loads((synth_dir / "manifest.json").read_text())
        counts = manifest["counts"]
        assert counts[0] == 120
        assert counts[-1] == round(120 / 20)
        data = load_features(synth_dir / "dataset.fgeo")
        assert [data.class_counts()[c] for c in range(6)] == counts

    def test_csv_and_binary_agree(self, synth_dir):
        a = load_features(synth_dir / "dataset.fgeo")
        b = load_features(synth_dir / "dataset.csv")
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_rerun_byte_identical(self, synth_dir, tmp_path):
        assert run(["synth", "--classes", 6, "--dim", 8, "--if", 20, "--max", 120, "--seed", 3, "--out", tmp_path]) == 0
        for name in ["dataset.fgeo", "dataset.csv", "manifest.json"]:
            assert (tmp_path / name).read_bytes() == (synth_dir / name).read_bytes()


class TestAnalyze:
    def test_similarity_diagonal(self, synth_dir, tmp_path):
        code = run(["analyze", "--features", synth_dir / "dataset.fgeo", "--top", 5, "--out", tmp_path,
                    "--pair", "0:1"])
        assert code == 0
        lines = (tmp_path / "similarity_matrix.csv").read_text().strip().split("\n")
        header = lines[0].split(",")
        assert header == ["class", "0", "1", "2", "3", "4", "5"]
        for i, line in enumerate(lines[1:]):
            cells = line.split(",")
            assert float(cells[1 + i]) == pytest.approx(5.0, abs=1e-9)
        assert (tmp_path / "alignment_0_1.csv").exists()
        assert (tmp_path / "eigenvalues.csv").exists()
        report = json.loads((tmp_path / "analysis.json").read_text())
        assert all(0.0 < r <= 1.0 for r in report["topk_ratios"].values())

    def test_missing_file_exit_code(self, tmp_path):
        assert run(["analyze", "--features", tmp_path / "missing.fgeo", "--out", tmp_path]) == 3


class TestRandvec:
    def test_flat_pdf_for_dim3(self, tmp_path):
        assert run(["randvec", "--dim", 3, "--grid", 21, "--out", tmp_path]) == 0
        lines = (tmp_path / "inner_product_pdf.csv").read_text().strip().split("\n")[1:]
        vals = [float(l.split(",")[1]) for l in lines]
        assert all(v == pytest.approx(0.5, rel=1e-12) for v in vals)

    def test_mc_histogram(self, tmp_path):
        assert run(["randvec", "--dim", 8, "--draws", 20000, "--bins", 10, "--seed", 1, "--out", tmp_path]) == 0
        lines = (tmp_path / "mc_histogram.csv").read_text().strip().split("\n")
        assert lines[0] == "x,analytic,empirical"
        assert len(lines) == 11
        payload = json.loads((tmp_path / "randvec.json").read_text())
        assert payload["mc_max_abs_deviation"] <= 0.1

    def test_byte_identical_rerun(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in [a, b]:
            assert run(["randvec", "--dim", 16, "--draws", 10000, "--seed", 9, "--out", out]) == 0
        for name in ["inner_product_pdf.csv", "angle_pdf_cdf.csv", "mc_histogram.csv", "randvec.json"]:
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestAugment:
    def test_na_zero_passthrough(self, synth_dir, tmp_path):
        out = tmp_path / "aug.csv"
        assert run(["augment", "--features", synth_dir / "dataset.fgeo", "--na", 0,
                    "--head-threshold", 50, "--out-file", out]) == 0
        data = load_features(synth_dir / "dataset.fgeo")
        lines = out.read_text().strip().split("\n")
        assert len(lines) == 1 + data.n_samples
        assert lines[0].endswith(",provenance")

    def test_synthetic_rows_added(self, synth_dir, tmp_path):
        out = tmp_path / "aug.csv"
        assert run(["augment", "--features", synth_dir / "dataset.fgeo", "--na", 2,
                    "--head-threshold", 50, "--seed", 4, "--out-file", out]) == 0
        data = load_features(synth_dir / "dataset.fgeo")
        tail_rows = sum(n for c, n in data.class_counts().items() if n <= 50)
        lines = out.read_text().strip().split("\n")[1:]
        tags = [l.rsplit(",", 1)[1] for l in lines]
        assert tags.count("synthetic-tail") == 2 * tail_rows
        assert len(lines) == data.n_samples + 2 * tail_rows

    def test_degenerate_threshold_is_config_error(self, synth_dir, tmp_path):
        assert run(["augment", "--features", synth_dir / "dataset.fgeo",
                    "--head-threshold", 100000, "--out-file", tmp_path / "x.csv"]) == 2


class TestTrain:
    def base_args(self, synth_dir, out):
        return ["train", "--data", synth_dir / "dataset.fgeo", "--m1", 3, "--m2", 2, "--m3", 1,
                "--hidden", 8, "--feature-dim", 6, "--n-t", 4, "--n-a", 2,
                "--head-threshold", 50, "--seed", 2, "--out", out]

    def test_outputs(self, synth_dir, tmp_path):
        assert run(self.base_args(synth_dir, tmp_path)) == 0
        for name in ["report.json", "model.gpmd", "loss_curves.csv", "accuracy.csv"]:
            assert (tmp_path / name).exists()
        report = json.loads((tmp_path / "report.json").read_text())
        assert set(report["accuracy"]) == {"phase1", "phase2", "phase3"}

    def test_erm_equals_explicit_zero_epochs(self, synth_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(self.base_args(synth_dir, a) + ["--erm"]) == 0
        args_b = self.base_args(synth_dir, b)
        args_b[args_b.index("--m2") + 1] = 0
        args_b[args_b.index("--m3") + 1] = 0
        assert run(args_b) == 0
        assert (a / "model.gpmd").read_bytes() == (b / "model.gpmd").read_bytes()
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()

    def test_rerun_byte_identical(self, synth_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in [a, b]:
            assert run(self.base_args(synth_dir, out)) == 0
        for name in ["report.json", "model.gpmd", "loss_curves.csv", "accuracy.csv"]:
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestPhenomena:
    def test_with_two_models(self, synth_dir, tmp_path):
        m1, m2 = tmp_path / "m1", tmp_path / "m2"
        for seed, out in [(2, m1), (3, m2)]:
            assert run(["train", "--data", synth_dir / "dataset.fgeo", "--m1", 3, "--m2", 0, "--m3", 0,
                        "--hidden", 8, "--feature-dim", 6, "--head-threshold", 50,
                        "--seed", seed, "--out", out]) == 0
        assert run(["phenomena", "--data", synth_dir / "dataset.fgeo",
                    "--models", m1 / "model.gpmd", m2 / "model.gpmd",
                    "--head-threshold", 50, "--out", tmp_path]) == 0
        payload = json.loads((tmp_path / "phenomena.json").read_text())
        assert payload["cross_model_similarity"] is not None
        assert payload["random_baseline_mean"] is not None
        assert 0.0 <= payload["tail_matched_to_head_fraction"] <= 1.0


class TestProject:
    def test_coordinates(self, synth_dir, tmp_path):
        out = tmp_path / "proj.csv"
        assert run(["project", "--features", synth_dir / "dataset.fgeo", "--out-file", out]) == 0
        lines = out.read_text().strip().split("\n")
        data = load_features(synth_dir / "dataset.fgeo")
        assert lines[0] == "label,x,y"
        assert len(lines) == 1 + data.n_samples


class TestConfigAndSeed:
    def test_config_file_sets_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"dim": 3, "grid": 11}))
        assert run(["randvec", "--config", cfg, "--out", tmp_path]) == 0
        payload = json.loads((tmp_path / "randvec.json").read_text())
        assert payload["config"]["dim"] == 3 and payload["config"]["grid"] == 11

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"dim": 3}))
        assert run(["randvec", "--config", cfg, "--dim", 5, "--out", tmp_path]) == 0
        payload = json.loads((tmp_path / "randvec.json").read_text())
        assert payload["config"]["dim"] == 5

    def test_seed_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GEOPRIOR_SEED", "17")
        import importlib

        import geoprior.cli as cli_mod

        importlib.reload(cli_mod)
        try:
            assert cli_mod.main(["randvec", "--dim", "4", "--out", str(tmp_path)]) == 0
            payload = json.loads((tmp_path / "randvec.json").read_text())
            assert payload["seed"] == 17
        finally:
            monkeypatch.delenv("GEOPRIOR_SEED")
            importlib.reload(cli_mod)

    def test_invalid_synth_config_exit_code(self, tmp_path):
        assert run(["synth", "--classes", 1, "--out", tmp_path]) == 2
