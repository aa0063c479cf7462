import csv
import subprocess
import sys

import numpy as np
import pytest

from ssfad.cli import main, parse_range, run_detector, sweep_pairs
from ssfad.core import DetectionMap, GroundTruthMask, load_map, save_map, save_mask
from ssfad.evaluation import roc_auc
from ssfad.fusion import fuse_average
from ssfad.spatial import spatial_map
from ssfad.spectral import spectral_map
from ssfad.synth import Anomaly, SceneSpec, generate_scene


@pytest.fixture
def scene(tmp_path):
    """A small synthetic scene written through the synth command."""
    prefix = tmp_path / "scene"
    code = main(["synth", "--seed", "17", "--height", "24", "--width", "22", "--bands", "6",
                 "--noise-sigma", "0.02", "--anomaly", "5,5,2,0.2", "--anomaly", "15,14,3,0.15",
                 "--out-prefix", str(prefix)])
    assert code == 0
    return tmp_path / "scene.hdr", tmp_path / "scene_mask.pgm"


def test_synth_matches_library(scene, tmp_path):
    from ssfad.core import load_cube, load_mask
    hdr, mask_path = scene
    cube, mask = generate_scene(SceneSpec(seed=17, height=24, width=22, bands=6, noise_sigma=0.02,
                                          anomalies=[Anomaly(5, 5, 2, 0.2), Anomaly(15, 14, 3, 0.15)]))
    assert load_cube(hdr).values.tobytes() == cube.values.tobytes()
    assert np.array_equal(load_mask(mask_path).labels, mask.labels)


def test_synth_requires_seed(tmp_path, capsys):
    code = main(["synth", "--height", "5", "--width", "5", "--bands", "2", "--out-prefix", str(tmp_path / "x")])
    assert code != 0
    assert "seed" in capsys.readouterr().err


def test_synth_overlap_fails(tmp_path):
    code = main(["synth", "--seed", "1", "--height", "10", "--width", "10", "--bands", "2",
                 "--anomaly", "1,1,3,0.5", "--anomaly", "2,2,2,0.5", "--out-prefix", str(tmp_path / "x")])
    assert code != 0


def test_synth_from_spec_file(tmp_path):
    spec = tmp_path / "scene.txt"
    spec.write_text("seed=5\nheight=8\nwidth=9\nbands=3\nanomaly=2,2,2,0.3\n")
    assert main(["synth", "--spec", str(spec), "--out-prefix", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s.hdr").exists() and (tmp_path / "s_mask.pgm").exists()


def test_detect_prints_weights_and_writes(scene, tmp_path, capsys):
    hdr, _ = scene
    out = tmp_path / "map.hdr"
    assert main(["detect", "--cube", str(hdr), "--method", "ssfad", "--wout", "5", "--win", "3",
                 "--out", str(out), "--preview", str(tmp_path / "map.pgm")]) == 0
    line = capsys.readouterr().out.strip()
    a, b = (float(part.split("=")[1]) for part in line.split())
    assert abs(a + b - 1.0) < 2e-6
    assert load_map(out).shape == (24, 22)
    assert (tmp_path / "map.pgm").read_bytes().startswith(b"P5")


def test_detect_average_is_fuse_average(scene, tmp_path):
    from ssfad.core import load_cube
    hdr, _ = scene
    out = tmp_path / "avg.hdr"
    assert main(["detect", "--cube", str(hdr), "--fusion", "average", "--out", str(out)]) == 0
    cube = load_cube(hdr)
    expected = fuse_average(spectral_map(cube), spatial_map(cube)).scores
    np.testing.assert_array_equal(load_map(out).scores, expected.astype(np.float32).astype(np.float64))


@pytest.mark.parametrize("method", ["ssfad-spectral", "ssfad-spatial", "grx", "lrx"])
def test_detect_methods(scene, tmp_path, method):
    hdr, _ = scene
    assert main(["detect", "--cube", str(hdr), "--method", method, "--out", str(tmp_path / "m.hdr")]) == 0


def test_detect_mode_flags_reach_detector(scene, tmp_path):
    from ssfad.core import load_cube
    from ssfad.spectral import SpectralParams
    hdr, _ = scene
    out = tmp_path / "m.hdr"
    assert main(["detect", "--cube", str(hdr), "--method", "ssfad-spectral", "--test-vector", "residual",
                 "--saliency-input", "projected", "--cov-mode", "second_moment", "--ridge", "1e-4",
                 "--out", str(out)]) == 0
    params = SpectralParams(ridge=1e-4, test_vector_mode="residual", saliency_input="projected",
                            covariance_mode="second_moment")
    expected = spectral_map(load_cube(hdr), params).scores.astype(np.float32)
    np.testing.assert_array_equal(load_map(out).scores, expected.astype(np.float64))


def test_detect_bad_window(scene, tmp_path, capsys):
    hdr, _ = scene
    assert main(["detect", "--cube", str(hdr), "--wout", "3", "--win", "3", "--out", str(tmp_path / "m.hdr")]) == 1
    assert "error" in capsys.readouterr().err


def test_detect_missing_cube(tmp_path):
    assert main(["detect", "--cube", str(tmp_path / "none.hdr"), "--out", str(tmp_path / "m.hdr")]) == 1


def test_detect_deterministic_across_threads(scene, tmp_path):
    hdr, _ = scene
    outs = []
    for threads in ("1", "8", "1"):
        out = tmp_path / f"m{len(outs)}.hdr"
        assert main(["detect", "--cube", str(hdr), "--threads", threads, "--out", str(out)]) == 0
        outs.append(out.with_suffix(".raw").read_bytes())
    assert outs[0] == outs[1] == outs[2]


class TestEval:
    def test_perfect_map(self, tmp_path, capsys):
        labels = np.zeros((4, 5), np.uint8)
        labels[1, 2] = labels[3, 0] = 1
        save_mask(GroundTruthMask(labels), tmp_path / "mask.pgm")
        save_map(DetectionMap(labels.astype(float)), tmp_path / "map.hdr")
        assert main(["eval", "--map", str(tmp_path / "map.hdr"), "--mask", str(tmp_path / "mask.pgm"),
                     "--roc-out", str(tmp_path / "roc.csv"), "--stats-out", str(tmp_path / "s.csv")]) == 0
        assert capsys.readouterr().out.strip() == "100.000"
        with open(tmp_path / "roc.csv") as fh:
            assert fh.readline().strip() == "threshold,fpr,tpr"
        assert (tmp_path / "s.csv").exists()

    def test_matches_library_auc(self, scene, tmp_path, capsys):
        from ssfad.core import load_mask
        hdr, mask_path = scene
        main(["detect", "--cube", str(hdr), "--method", "grx", "--out", str(tmp_path / "g.hdr")])
        capsys.readouterr()
        assert main(["eval", "--map", str(tmp_path / "g.hdr"), "--mask", str(mask_path)]) == 0
        printed = float(capsys.readouterr().out.strip())
        value = roc_auc(load_map(tmp_path / "g.hdr"), load_mask(mask_path))
        assert abs(printed - 100 * value) <= 0.0005 + 1e-12

    def test_single_class_mask(self, tmp_path):
        save_mask(GroundTruthMask(np.zeros((3, 3))), tmp_path / "mask.pgm")
        save_map(DetectionMap(np.ones((3, 3))), tmp_path / "map.hdr")
        assert main(["eval", "--map", str(tmp_path / "map.hdr"), "--mask", str(tmp_path / "mask.pgm")]) == 1

    def test_shape_mismatch(self, tmp_path):
        save_mask(GroundTruthMask(np.eye(3)), tmp_path / "mask.pgm")
        save_map(DetectionMap(np.ones((3, 4))), tmp_path / "map.hdr")
        assert main(["eval", "--map", str(tmp_path / "map.hdr"), "--mask", str(tmp_path / "mask.pgm")]) == 1


class TestSweep:
    def test_ranges(self):
        assert parse_range("5:25:2") == list(range(5, 26, 2))
        assert parse_range("7") == [7]
        assert sweep_pairs([3, 5], [3, 5]) == [(5, 3)]

    def test_bad_range(self, scene, tmp_path):
        hdr, mask = scene
        assert main(["sweep", "--cube", str(hdr), "--mask", str(mask), "--wout", "5:x",
                     "--out", str(tmp_path / "s.csv")]) == 1

    def test_empty_grid(self, scene, tmp_path):
        hdr, mask = scene
        assert main(["sweep", "--cube", str(hdr), "--mask", str(mask), "--wout", "3", "--win", "5",
                     "--out", str(tmp_path / "s.csv")]) == 1

    def test_grid_and_consistency(self, scene, tmp_path, capsys):
        from ssfad.core import load_cube, load_mask
        hdr, mask_path = scene
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--cube", str(hdr), "--mask", str(mask_path), "--method", "lrx",
                     "--wout", "3:7:2", "--win", "1:7:2", "--out", str(out)]) == 0
        rows = list(csv.DictReader(open(out)))
        assert [(int(r["wout"]), int(r["win"])) for r in rows] == sweep_pairs([3, 5, 7], [1, 3, 5, 7])
        assert len(rows) == 6
        assert capsys.readouterr().out.startswith("best wout=")
        cube, mask = load_cube(hdr), load_mask(mask_path)
        for r in rows:
            dmap, _ = run_detector(cube, "lrx", int(r["wout"]), int(r["win"]))
            assert float(r["auc"]) == roc_auc(dmap, mask)

    def test_single_pair_equals_detect_then_eval(self, scene, tmp_path, capsys):
        hdr, mask_path = scene
        main(["sweep", "--cube", str(hdr), "--mask", str(mask_path), "--wout", "5", "--win", "3",
              "--out", str(tmp_path / "s.csv")])
        swept = float(next(csv.DictReader(open(tmp_path / "s.csv")))["auc"])
        main(["detect", "--cube", str(hdr), "--out", str(tmp_path / "m.hdr")])
        capsys.readouterr()
        main(["eval", "--map", str(tmp_path / "m.hdr"), "--mask", str(mask_path)])
        printed = float(capsys.readouterr().out.strip())
        # the map file is float32, so allow the rounding of both the file and the print
        assert abs(printed - 100 * swept) <= 0.0005 + 1e-3


def test_module_entry_point(tmp_path):
    result = subprocess.run([sys.executable, "-m", "ssfad.cli", "--version"], capture_output=True, text=True)
    assert result.returncode == 0 and "ssfad" in result.stdout
