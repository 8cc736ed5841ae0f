import json

import numpy as np
import pytest

from pactkit import read_image_csv, read_matrix, read_signal
from pactkit.cli import PRESETS, argv_from_manifest, main, read_manifest


def run(argv):
    return main([str(a) for a in argv])


class TestPhantomCommand:
    def test_vessel_writes_artifacts(self, tmp_path):
        code = run(["phantom", "--kind", "vessel", "--nx", "64", "--ny", "64",
                    "--seed", "1", "--out-dir", tmp_path, "--out", "v"])
        assert code == 0
        assert (tmp_path / "v.csv").exists()
        assert (tmp_path / "v.pgm").exists()
        manifest = read_manifest(tmp_path / "v.manifest.json")
        assert manifest["command"] == "phantom"
        assert manifest["parameters"]["nx"] == 64
        assert manifest["artifact_paths"] == ["v.csv", "v.pgm"]
        assert manifest["results"]["fill_fraction"] <= 0.15

    def test_repeat_run_bit_identical(self, tmp_path):
        argv = ["phantom", "--kind", "vessel", "--nx", "32", "--ny", "32", "--seed", "9",
                "--out-dir", tmp_path / "a", "--out", "p"]
        assert run(argv) == 0
        argv[-3] = tmp_path / "b"
        assert run(argv) == 0
        assert (tmp_path / "a" / "p.csv").read_bytes() == (tmp_path / "b" / "p.csv").read_bytes()

    def test_point_out_of_bounds_exits_2(self, tmp_path, capsys):
        code = run(["phantom", "--kind", "point", "--nx", "64", "--ny", "64",
                    "--i", "200", "--out-dir", tmp_path])
        assert code == 2
        assert "bounds" in capsys.readouterr().err

    def test_scientific_notation_integers(self, tmp_path):
        assert run(["phantom", "--nx", "1e1", "--ny", "10", "--out-dir", tmp_path]) == 0


class TestSimulateCommand:
    def make_phantom(self, tmp_path, kind="vessel", nx=32):
        run(["phantom", "--kind", kind, "--nx", nx, "--ny", nx, "--seed", "1",
             "--amplitude", "0", "--out-dir", tmp_path, "--out", "ph"])
        return tmp_path / "ph.csv"

    def test_zero_phantom_zero_signal(self, tmp_path):
        path = self.make_phantom(tmp_path, kind="point")
        code = run(["simulate", "--phantom", path, "--preset", "desk32",
                    "--out-dir", tmp_path, "--out", "sig"])
        assert code == 0
        y = read_signal(tmp_path / "sig.sig")
        assert not y.values.any()
        assert y.domain == "time"

    def test_frequency_domain_signal(self, tmp_path):
        path = self.make_phantom(tmp_path)
        code = run(["simulate", "--phantom", path, "--preset", "desk32",
                    "--domain", "frequency", "--out-dir", tmp_path, "--out", "sigf"])
        assert code == 0
        y = read_signal(tmp_path / "sigf.sig")
        assert y.domain == "frequency"
        assert y.values.dtype == np.complex128

    def test_truncation_warning_on_stderr(self, tmp_path, capsys):
        path = self.make_phantom(tmp_path)
        code = run(["simulate", "--phantom", path, "--preset", "desk32",
                    "--samples", "8", "--freqs", "8",  # far too short a window
                    "--out-dir", tmp_path, "--out", "trunc"])
        assert code == 0  # warning, not an error
        assert "window" in capsys.readouterr().err
        manifest = read_manifest(tmp_path / "trunc.manifest.json")
        assert manifest["results"]["truncated_pairs"] > 0

    def test_save_matrix(self, tmp_path):
        path = self.make_phantom(tmp_path)
        code = run(["simulate", "--phantom", path, "--preset", "desk32", "--save-matrix",
                    "--out-dir", tmp_path, "--out", "sim"])
        assert code == 0
        K = read_matrix(tmp_path / "sim.mat")
        assert (K.rows, K.cols) == (16 * 64, 32 * 32)

    def test_missing_phantom_file_exits_3(self, tmp_path):
        code = run(["simulate", "--phantom", tmp_path / "nope.csv", "--preset", "desk32",
                    "--out-dir", tmp_path])
        assert code == 3

    def test_geometry_violation_exits_2(self, tmp_path):
        path = self.make_phantom(tmp_path)
        code = run(["simulate", "--phantom", path, "--preset", "desk32",
                    "--radius", "1e-4", "--out-dir", tmp_path])
        assert code == 2


class TestReconstructCommand:
    @pytest.fixture()
    def scene(self, tmp_path):
        run(["phantom", "--kind", "vessel", "--nx", "32", "--ny", "32", "--seed", "2",
             "--out-dir", tmp_path, "--out", "truth"])
        run(["simulate", "--phantom", tmp_path / "truth.csv", "--preset", "desk32",
             "--sensors", "4",  # 25% of the desk32 ring
             "--out-dir", tmp_path, "--out", "y"])
        return tmp_path

    def test_bp_then_ir_quality(self, scene):
        base = ["--signal", scene / "y.sig", "--preset", "desk32", "--sensors", "4",
                "--out-dir", scene]
        assert run(["reconstruct", *base, "--method", "bp", "--out", "bp"]) == 0
        assert run(["reconstruct", *base, "--method", "ir", "--out", "ir"]) == 0
        truth = read_image_csv(scene / "truth.csv").values
        truth = truth / np.max(np.abs(truth))

        def err(name):
            img = read_image_csv(scene / f"{name}.csv").values
            img = img / max(np.max(np.abs(img)), 1e-300)
            return float(np.sqrt(np.mean((img - truth) ** 2)))

        assert err("ir") < err("bp")

    def test_ir_history_rows(self, scene):
        code = run(["reconstruct", "--signal", scene / "y.sig", "--preset", "desk32",
                    "--sensors", "4", "--method", "ir", "--iterations", "90",
                    "--out-dir", scene, "--out", "ir90"])
        assert code == 0
        rows = (scene / "ir90.history.csv").read_text().strip().splitlines()
        assert rows[0] == "iter,F,data,l1,tv"
        assert len(rows) == 1 + 90

    def test_absurd_step_divergence_exit_zero(self, scene):
        code = run(["reconstruct", "--signal", scene / "y.sig", "--preset", "desk32",
                    "--sensors", "4", "--method", "ir", "--step", "1e9",
                    "--out-dir", scene, "--out", "div"])
        assert code == 0
        manifest = read_manifest(scene / "div.manifest.json")
        assert manifest["results"]["stopped_by"] == "divergence"

    def test_reconstruct_from_saved_matrix(self, scene):
        run(["simulate", "--phantom", scene / "truth.csv", "--preset", "desk32",
             "--sensors", "4", "--save-matrix", "--out-dir", scene, "--out", "ym"])
        code = run(["reconstruct", "--signal", scene / "ym.sig", "--matrix", scene / "ym.mat",
                    "--preset", "desk32", "--method", "bp", "--out-dir", scene, "--out", "bpm"])
        assert code == 0
        img = read_image_csv(scene / "bpm.csv")
        assert img.values.max() == 1.0

    def test_domain_mismatch_exits_2(self, scene, capsys):
        # frequency signal against a time-domain matrix
        run(["simulate", "--phantom", scene / "truth.csv", "--preset", "desk32",
             "--sensors", "4", "--save-matrix", "--out-dir", scene, "--out", "ym"])
        run(["simulate", "--phantom", scene / "truth.csv", "--preset", "desk32",
             "--sensors", "4", "--domain", "frequency", "--out-dir", scene, "--out", "yf"])
        code = run(["reconstruct", "--signal", scene / "yf.sig", "--matrix", scene / "ym.mat",
                    "--preset", "desk32", "--method", "bp", "--out-dir", scene, "--out", "x"])
        assert code == 2
        assert "mismatch" in capsys.readouterr().err


class TestBenchCommand:
    def test_matmul_report(self, tmp_path):
        code = run(["bench", "matmul", "--rows", "64", "--inner", "64", "--cols", "64",
                    "--workers", "1,2", "--reps", "3", "--out-dir", tmp_path, "--out", "bm"])
        assert code == 0
        blob = json.loads((tmp_path / "bm.json").read_text())
        assert blob["verification"] is True
        assert len(blob["speedups"]) == 2
        assert (tmp_path / "bm.txt").exists()

    def test_profile_breakdown_sums(self, tmp_path):
        code = run(["bench", "profile", "--nx", "32", "--sensors", "8", "--samples", "64",
                    "--iterations", "5", "--out-dir", tmp_path, "--out", "bp"])
        assert code == 0
        blob = json.loads((tmp_path / "bp.json").read_text())
        total = sum(row["percent"] for row in blob["breakdown"].values())
        assert total == pytest.approx(100.0, abs=0.5)

    def test_recon_scenario(self, tmp_path):
        code = run(["bench", "recon", "--nx", "32", "--sensors", "8", "--samples", "64",
                    "--iterations", "3", "--reps", "3", "--out-dir", tmp_path, "--out", "br"])
        assert code == 0
        blob = json.loads((tmp_path / "br.json").read_text())
        labels = {e["label"] for e in blob["entries"]}
        assert {"back_projection", "iterative_serial", "iterative_parallel"} <= labels

    def test_unknown_scenario_exits_2(self, tmp_path):
        assert run(["bench", "warp", "--out-dir", tmp_path]) == 2


class TestConfigPrecedence:
    def test_flag_beats_config_beats_default(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("nx=16\nny=16\nseed=5\n")
        run(["phantom", "--config", cfg, "--out-dir", tmp_path, "--out", "a"])
        m = read_manifest(tmp_path / "a.manifest.json")
        assert m["parameters"]["nx"] == 16 and m["seed"] == 5
        run(["phantom", "--config", cfg, "--nx", "24", "--out-dir", tmp_path, "--out", "b"])
        m = read_manifest(tmp_path / "b.manifest.json")
        assert m["parameters"]["nx"] == 24  # explicit flag wins
        assert m["parameters"]["ny"] == 16  # config still applies

    def test_unknown_config_key_exits_2(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("warp_factor=9\n")
        assert run(["phantom", "--config", cfg, "--out-dir", tmp_path]) == 2

    def test_preset_in_config(self, tmp_path):
        run(["phantom", "--kind", "vessel", "--nx", "32", "--ny", "32",
             "--out-dir", tmp_path, "--out", "ph"])
        cfg = tmp_path / "sim.cfg"
        cfg.write_text("preset=desk32\n")
        code = run(["simulate", "--phantom", tmp_path / "ph.csv", "--config", cfg,
                    "--out-dir", tmp_path, "--out", "s"])
        assert code == 0
        m = read_manifest(tmp_path / "s.manifest.json")
        assert m["parameters"]["sensors"] == PRESETS["desk32"]["sensors"]


class TestManifestReplay:
    def test_argv_round_trip(self, tmp_path):
        run(["phantom", "--kind", "vessel", "--nx", "32", "--ny", "32", "--seed", "3",
             "--out-dir", tmp_path / "one", "--out", "p"])
        manifest = read_manifest(tmp_path / "one" / "p.manifest.json")
        argv = argv_from_manifest(manifest, out_dir=str(tmp_path / "two"))
        assert run(argv) == 0
        a = (tmp_path / "one" / "p.csv").read_bytes()
        b = (tmp_path / "two" / "p.csv").read_bytes()
        assert a == b

    def test_version_recorded(self, tmp_path):
        import pactkit

        run(["phantom", "--nx", "8", "--ny", "8", "--out-dir", tmp_path, "--out", "p"])
        m = read_manifest(tmp_path / "p.manifest.json")
        assert m["tool_version"] == pactkit.__version__


class TestFullScalePreset:
    def test_preset_dimensions_recorded(self, tmp_path):
        # the full 127x127 scene; explicit step and one iteration keep it quick
        code = run(["bench", "recon", "--preset", "paper127", "--iterations", "1",
                    "--reps", "1", "--step", "1e-2", "--alpha", "0", "--beta", "0",
                    "--out-dir", tmp_path, "--out", "full"])
        assert code == 0
        blob = json.loads((tmp_path / "full.json").read_text())
        assert blob["environment"]["grid"] == [127, 127]
        assert blob["environment"]["matrix_shape"] == [48 * 128, 127 * 127]
