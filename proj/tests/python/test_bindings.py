"""Smoke tests for the Python extension module."""

import numpy as np
import pytest

import sparseview as sv


def test_depth_planes_and_errors():
    planes = sv.depth_planes(1.0, 100.0, 4)
    assert planes == pytest.approx([1.0, 34.0, 67.0, 100.0])
    with pytest.raises(sv.SparseviewError) as info:
        sv.depth_planes(5.0, 1.0, 4)
    assert info.value.args[0] == "invalid-argument"


def test_features_shape():
    img = np.random.default_rng(0).random((16, 24, 3))
    f = sv.extract_features(img, 4)
    assert f.shape[1:] == (4, 6)
    assert np.allclose(f[:3, 0, 0], img[:4, :4].reshape(-1, 3).mean(axis=0))


def test_metrics_and_matching():
    rng = np.random.default_rng(1)
    a = rng.random((32, 32, 3)) * 0.8
    assert sv.psnr(a, a) == 99.0
    assert sv.psnr(a, a + 0.1) == pytest.approx(20.0)
    assert sv.ssim(a, a) == 1.0
    assert np.abs(sv.histogram_match(a, a) - a).max() < 1 / 256


def test_view_selection():
    pts = [np.array([x, 0.0, 0.0]) for x in (0.0, 1.0, 10.0)]
    assert sv.fps(pts, 2) == [2, 0]
    assert sv.curriculum(10000) == 60
    assert [len(w) for w in sv.window_partition(30, 14)] == [14, 14, 2]
    ab = np.array(sv.alpha_bar("cosine", 100))
    assert ab[0] == 1.0 and np.all(np.diff(ab) <= 0)


def test_scene_render_and_pipeline(tmp_path):
    scene, truth = sv.generate_scene(seed=2, gaussians=80, cameras=6, width=32, height=32, out_dir=str(tmp_path))
    assert scene.frame_count == 6
    assert len(truth) == 80
    loaded = sv.load_scene(str(tmp_path))
    assert np.abs(loaded.image(0) - scene.image(0)).max() <= 1 / 255
    out = sv.render(truth, scene.camera(0))
    assert out["rgb"].shape == (32, 32, 3)
    assert np.abs(out["rgb"] - scene.image(0)).max() <= 1 / 255
    assert 0.0 <= out["alpha"].min() and out["alpha"].max() <= 1.0

    res = sv.run_pipeline(scene, '{"planes": 8, "inputs": 2, "targets": 3, "sampler_steps": 2, "schedule_length": 50}')
    assert len(res["outputs"]) == 3
    assert res["outputs"][0].shape == (32, 32, 3)
    with pytest.raises(sv.SparseviewError) as info:
        sv.run_pipeline(scene, '{"bogus": 1}')
    assert info.value.args[0] == "malformed-json"


def test_fit_demo_reduces_loss():
    scene, truth = sv.generate_scene(seed=5, gaussians=40, cameras=2, width=32, height=32)
    cam = scene.camera(0)
    target = sv.render(truth, cam)["rgb"]
    _, curve = sv.fit_demo(target, sv.perturb_cloud(truth, 9), cam, steps=60)
    assert curve[-1] < curve[0]


def test_camera_validation():
    cam = sv.Camera.look_at(50.0, 64, 48, [0.0, 0.0, -3.0], [0.0, 0.0, 0.0])
    assert np.allclose(cam.center, [0.0, 0.0, -3.0])
    bad = np.eye(4)
    bad[:3, :3] *= 2
    with pytest.raises(sv.SparseviewError):
        sv.Camera(50.0, 50.0, 16.0, 16.0, 32, 32, bad)
