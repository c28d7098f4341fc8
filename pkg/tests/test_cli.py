"""CLI subcommands, flags, and exit codes on a tiny config."""

import numpy as np
import pytest

from lensalign.cli import EXIT_CONFIG, EXIT_OK, main
from lensalign.config import load_config
from lensalign.imgio import read_floats, read_pgm16


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    # small sensor + cheap reference so CLI runs stay fast
    from lensalign.config import copy_default_config

    path = tmp_path_factory.mktemp("cfg") / "scene.ini"
    copy_default_config(path)
    text = path.read_text()
    text = text.replace("pixels_x = 200", "pixels_x = 48").replace("pixels_y = 200", "pixels_y = 48")
    text = text.replace("samples_per_pixel = 64", "samples_per_pixel = 8")
    text = text.replace("reference_samples = 100", "reference_samples = 4")
    path.write_text(text)
    return path


class TestRender:
    def test_writes_pgm_and_sidecar(self, tiny_config, tmp_path):
        out = tmp_path / "render_out"
        code = main(
            ["render", "--config", str(tiny_config), "--seed", "3", "--out", str(out), "--raw"]
        )
        assert code == EXIT_OK
        img, _ = read_pgm16(out / "render.pgm")
        assert img.shape == (48, 48)
        raw = read_floats(out / "render.f32")
        assert raw.shape == (48, 48)

    def test_bad_pose_is_config_error(self, tiny_config, tmp_path):
        code = main(["render", "--config", str(tiny_config), "--pose", "0.5,0.5", "--out", str(tmp_path)])
        assert code == EXIT_CONFIG

    def test_missing_config_is_config_error(self, tmp_path):
        code = main(["render", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)])
        assert code == EXIT_CONFIG


class TestReference:
    def test_writes_reference_pair(self, tiny_config, tmp_path):
        out = tmp_path / "ref_out"
        code = main(["reference", "--config", str(tiny_config), "--samples", "2", "--out", str(out)])
        assert code == EXIT_OK
        img, _ = read_pgm16(out / "reference.pgm")
        raw = read_floats(out / "reference.f32")
        assert img.shape == raw.shape == (48, 48)
        # sidecar is the lossless channel
        assert np.max(np.abs(img - raw)) <= max(raw.max(), 1e-9) / 65535.0


class TestCalibrate:
    def test_writes_thresholds_into_config(self, tiny_config):
        code = main(
            ["calibrate", "--config", str(tiny_config), "--noise", "0", "--trials", "5", "--seed", "2"]
        )
        assert code == EXIT_OK
        app = load_config(tiny_config)
        assert 0.0 in app.env.thresholds
        assert app.env.thresholds[0.0] > 0

    def test_bad_noise_rejected(self, tiny_config):
        code = main(["calibrate", "--config", str(tiny_config), "--noise", "0.4"])
        assert code == EXIT_CONFIG


class TestLandscape:
    def test_emits_requested_pair(self, tiny_config, tmp_path):
        out = tmp_path / "land"
        code = main(
            [
                "landscape",
                "--config",
                str(tiny_config),
                "--grid",
                "5",
                "--dims",
                "x,y",
                "--spp",
                "2",
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        assert (out / "landscape_x_y.csv").exists()
        assert (out / "landscape_x_y.pgm").exists()
        assert (out / "landscape_x_y.png").exists()

    def test_unknown_axis_rejected(self, tiny_config, tmp_path):
        code = main(
            ["landscape", "--config", str(tiny_config), "--dims", "x,q", "--out", str(tmp_path)]
        )
        assert code == EXIT_CONFIG


class TestBench:
    def test_small_matrix_end_to_end(self, tiny_config, tmp_path):
        out = tmp_path / "bench"
        code = main(
            [
                "bench",
                "--config",
                str(tiny_config),
                "--noise",
                "0",
                "--algos",
                "random",
                "--episodes",
                "2",
                "--steps",
                "3",
                "--seed",
                "1",
                "--out",
                str(out),
                "--quiet",
            ]
        )
        assert code == EXIT_OK
        assert (out / "results.csv").exists()
        assert (out / "summary.csv").exists()
        assert (out / "benchmark.png").exists()
        lines = (out / "results.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 4  # header + episodes * (steps + 1)

    def test_summarize_round_trip(self, tiny_config, tmp_path):
        out = tmp_path / "bench2"
        main(
            [
                "bench",
                "--config",
                str(tiny_config),
                "--noise",
                "0",
                "--algos",
                "random",
                "--episodes",
                "2",
                "--steps",
                "2",
                "--out",
                str(out),
                "--quiet",
                "--no-figures",
            ]
        )
        out2 = tmp_path / "summary2"
        code = main(
            ["summarize", "--results", str(out / "results.csv"), "--out", str(out2), "--stat", "mean"]
        )
        assert code == EXIT_OK
        header = (out2 / "summary.csv").read_text().splitlines()[0]
        assert "mean" in header
