"""CLI tests: every command is checked against the library call it wraps."""

import json
import subprocess
import sys

import numpy as np
import pytest

from panobev import datagen, rasters
from panobev.bev import BevGridSpec
from panobev.cli import main
from panobev.datagen import SceneConfig, cubemap_rig, render_pinhole_view, synth_scene
from panobev.mapper import load_model
from panobev.vocab import load_vocabulary


@pytest.fixture(scope="module")
def scene():
    return synth_scene(0, SceneConfig(height=64, width=128))


@pytest.fixture()
def scene_files(scene, tmp_path):
    depth_path = tmp_path / "depth.f32"
    sem_path = tmp_path / "sem.png"
    image_path = tmp_path / "rgb.png"
    pose_path = tmp_path / "pose.json"
    rasters.write_depth_raw(depth_path, scene.depth)
    rasters.write_label(sem_path, scene.labels.astype(np.uint8))
    rasters.write_rgb(image_path, scene.rgb)
    pose_path.write_text(
        json.dumps(
            [*scene.pose.rotation.reshape(-1).tolist(), *scene.pose.translation.tolist()]
        )
    )
    return {
        "depth": depth_path,
        "sem": sem_path,
        "image": image_path,
        "pose": pose_path,
        "dir": tmp_path,
    }


class TestGenBev:
    def test_matches_library_bit_for_bit(self, scene, scene_files, tmp_path):
        out = tmp_path / "map.png"
        code = main(
            [
                "gen-bev",
                "--image", str(scene_files["image"]),
                "--depth", str(scene_files["depth"]),
                "--sem", str(scene_files["sem"]),
                "--pose", str(scene_files["pose"]),
                "--out", str(out),
            ]
        )
        assert code == 0
        written = rasters.read_label(out)
        assert written.shape == (500, 500)
        # The library call on the same file-loaded inputs must agree exactly.
        depth = rasters.read_depth(scene_files["depth"])
        sem = rasters.read_label(scene_files["sem"])
        expected = datagen.generate_bev_gt(sem, depth, scene.pose, BevGridSpec())
        np.testing.assert_array_equal(written, expected.labels.astype(np.uint8))
        sidecar = json.loads(out.with_suffix(".json").read_text())
        assert sidecar["cell_size_m"] == pytest.approx(0.02)
        assert sidecar["range_m"] == 10.0
        assert len(sidecar["pose"]) == 12

    def test_missing_file_exit_2(self, scene_files, tmp_path, capsys):
        code = main(
            [
                "gen-bev",
                "--depth", str(tmp_path / "nope.f32"),
                "--sem", str(scene_files["sem"]),
                "--pose", str(scene_files["pose"]),
                "--out", str(tmp_path / "m.png"),
            ]
        )
        assert code == 2
        assert "not found" in capsys.readouterr().err

    def test_config_override(self, scene_files, tmp_path):
        out = tmp_path / "small.png"
        code = main(
            [
                "gen-bev",
                "--depth", str(scene_files["depth"]),
                "--sem", str(scene_files["sem"]),
                "--pose", str(scene_files["pose"]),
                "--out", str(out),
                "--set", "size=100",
                "--set", "range_m=8.0",
            ]
        )
        assert code == 0
        assert rasters.read_label(out).shape == (100, 100)
        sidecar = json.loads(out.with_suffix(".json").read_text())
        assert sidecar["cell_size_m"] == pytest.approx(0.08)

    def test_dump_config(self, capsys):
        assert main(["gen-bev", "--dump-config", "--depth", "x", "--sem", "x",
                     "--pose", "x", "--out", "x"]) == 0
        text = capsys.readouterr().out
        assert "size = 500" in text
        assert "range_m = 10.0" in text


class TestStitch:
    def _write_manifest(self, scene, tmp_path, views):
        entries = []
        for i, v in enumerate(views):
            path = tmp_path / f"view{i}.png"
            rasters.write_label(path, v.raster.astype(np.uint8))
            entries.append(
                {
                    "path": path.name,
                    "fx": v.fx, "fy": v.fy, "cx": v.cx, "cy": v.cy,
                    "rotation": v.rotation.reshape(-1).tolist(),
                    "tag": v.tag,
                }
            )
        manifest = {
            "payload": "label8",
            "height": scene.config.height,
            "width": scene.config.width,
            "views": entries,
        }
        path = tmp_path / "views.json"
        path.write_text(json.dumps(manifest))
        return path

    def test_matches_library(self, scene, tmp_path):
        views = [render_pinhole_view(scene, e) for e in cubemap_rig(96)]
        manifest = self._write_manifest(scene, tmp_path, views)
        out = tmp_path / "pano.png"
        assert main(["stitch", "--views-manifest", str(manifest), "--out", str(out)]) == 0
        pano = rasters.read_label(out)
        # Re-load the view rasters the same way the CLI does.
        reloaded = [
            datagen.PinholeView(
                raster=rasters.read_label(tmp_path / f"view{i}.png").astype(np.int64),
                fx=v.fx, fy=v.fy, cx=v.cx, cy=v.cy, rotation=v.rotation,
            )
            for i, v in enumerate(views)
        ]
        expected, coverage = datagen.stitch_views(
            reloaded, scene.config.height, scene.config.width, payload="label"
        )
        np.testing.assert_array_equal(pano, expected.astype(np.uint8))
        cov = rasters.read_label(tmp_path / "pano.coverage.png") > 0
        np.testing.assert_array_equal(cov, coverage)
        # Dual-render agreement against the direct panorama labels.
        agree = (pano[cov] == scene.labels[cov]).mean()
        assert agree >= 0.98

    def test_empty_manifest_exit_2(self, tmp_path, capsys):
        path = tmp_path / "views.json"
        path.write_text(json.dumps({"payload": "label8", "height": 8, "width": 16, "views": []}))
        assert main(["stitch", "--views-manifest", str(path), "--out", str(tmp_path / "p.png")]) == 2
        assert "no views" in capsys.readouterr().err

    def test_missing_manifest_exit_2(self, tmp_path):
        assert main(["stitch", "--views-manifest", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "p.png")]) == 2


class TestEval:
    def _vocab_file(self, tmp_path):
        path = tmp_path / "ab.json"
        path.write_text(json.dumps({"names": ["A", "B"],
                                    "palette": [[1, 0, 0], [0, 1, 0]]}))
        return path

    def test_perfect_prediction(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        (tmp_path / "pred").mkdir()
        (tmp_path / "gt").mkdir()
        for i in range(3):
            raster = rng.integers(0, 2, (8, 8)).astype(np.uint8)
            rasters.write_label(tmp_path / "pred" / f"{i}.png", raster)
            rasters.write_label(tmp_path / "gt" / f"{i}.png", raster)
        code = main(
            ["eval", "--pred-dir", str(tmp_path / "pred"), "--gt-dir", str(tmp_path / "gt"),
             "--classes", str(self._vocab_file(tmp_path)), "--out", str(tmp_path / "report")]
        )
        assert code == 0
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["acc"] == 1.0
        assert payload["miou"] == 1.0

    def test_worked_2x2_example(self, tmp_path):
        (tmp_path / "pred").mkdir()
        (tmp_path / "gt").mkdir()
        rasters.write_label(tmp_path / "pred" / "f.png", np.array([[0, 0], [1, 1]], dtype=np.uint8))
        rasters.write_label(tmp_path / "gt" / "f.png", np.array([[0, 1], [1, 1]], dtype=np.uint8))
        code = main(
            ["eval", "--pred-dir", str(tmp_path / "pred"), "--gt-dir", str(tmp_path / "gt"),
             "--classes", str(self._vocab_file(tmp_path)), "--out", str(tmp_path / "report")]
        )
        assert code == 0
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["miou"] == pytest.approx(7 / 12)
        assert list(payload)[:4] == ["acc", "mrecall", "mprecision", "miou"]
        csv_lines = (tmp_path / "report.csv").read_text().splitlines()
        assert csv_lines[0] == "class,acc,mrecall,mprecision,miou"

    def test_empty_gt_dir_exit_2(self, tmp_path):
        (tmp_path / "pred").mkdir()
        (tmp_path / "gt").mkdir()
        code = main(
            ["eval", "--pred-dir", str(tmp_path / "pred"), "--gt-dir", str(tmp_path / "gt"),
             "--classes", "matterport20", "--out", str(tmp_path / "report")]
        )
        assert code == 2


class TestTrainToy:
    def test_trains_and_saves(self, tmp_path):
        config = SceneConfig(height=32, width=64, grid=BevGridSpec(size=25, range_m=10.0))
        frames = []
        for seed in (0, 1):
            s = synth_scene(seed, config)
            rasters.write_rgb(tmp_path / f"rgb{seed}.png", s.rgb)
            rasters.write_depth_raw(tmp_path / f"depth{seed}.f32", s.depth)
            rasters.write_label(tmp_path / f"sem{seed}.png", s.labels.astype(np.uint8))
            frames.append(
                {
                    "image": f"rgb{seed}.png",
                    "depth": f"depth{seed}.f32",
                    "sem": f"sem{seed}.png",
                    "pose": [*s.pose.rotation.reshape(-1).tolist(), 0.0, 0.0, 0.0],
                }
            )
        manifest = tmp_path / "scenes.json"
        manifest.write_text(json.dumps({"classes": "matterport20-bev", "frames": frames}))
        model_path = tmp_path / "model.bin"
        code = main(
            ["train-toy", "--scenes", str(manifest), "--out-model", str(model_path),
             "--set", "epochs=2", "--set", "grid_size=25", "--set", "channels=8",
             "--set", "n_head=2", "--set", "n_point=2", "--set", "attention_layers=1"]
        )
        assert code == 0
        model = load_model(model_path)
        assert model.spec.size == 25
        assert model.num_classes == 21

    def test_empty_manifest_exit_2(self, tmp_path):
        manifest = tmp_path / "scenes.json"
        manifest.write_text(json.dumps({"frames": []}))
        assert main(["train-toy", "--scenes", str(manifest),
                     "--out-model", str(tmp_path / "m.bin")]) == 2

    def test_dump_config(self, capsys):
        assert main(["train-toy", "--dump-config", "--scenes", "x", "--out-model", "x"]) == 0
        text = capsys.readouterr().out
        assert "learning_rate" in text and "epochs" in text


class TestGradcheck:
    def test_default_dims_pass(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "max relative error" in out
        err = float(out.strip().rsplit(" ", 1)[1])
        assert err < 1e-4

    def test_runs_as_module(self):
        proc = subprocess.run(
            [sys.executable, "-m", "panobev", "gradcheck", "--dims", "4,8,2,2"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "max relative error" in proc.stdout


class TestRenderMap:
    def test_void_map_renders_black(self, tmp_path):
        labels = np.zeros((10, 10), dtype=np.uint8)
        rasters.write_label(tmp_path / "bev.png", labels)
        out = tmp_path / "render.png"
        assert main(["render-map", "--bev", str(tmp_path / "bev.png"),
                     "--palette", "matterport20-bev", "--out", str(out)]) == 0
        rgb = rasters.read_rgb(out)
        assert (rgb == 0).all()

    def test_wall_color(self, tmp_path):
        vocab = load_vocabulary("matterport20-bev")
        labels = np.full((4, 4), vocab.index("wall"), dtype=np.uint8)
        rasters.write_label(tmp_path / "bev.png", labels)
        out = tmp_path / "render.png"
        assert main(["render-map", "--bev", str(tmp_path / "bev.png"),
                     "--palette", "matterport20-bev", "--out", str(out)]) == 0
        rgb = rasters.read_rgb(out)
        assert (rgb == np.array([173, 199, 232])).all()

    def test_reserved_label_black(self, tmp_path):
        labels = np.full((2, 2), 255, dtype=np.uint8)
        rasters.write_label(tmp_path / "bev.png", labels)
        out = tmp_path / "render.png"
        assert main(["render-map", "--bev", str(tmp_path / "bev.png"),
                     "--palette", "stanford13", "--out", str(out)]) == 0
        assert (rasters.read_rgb(out) == 0).all()
