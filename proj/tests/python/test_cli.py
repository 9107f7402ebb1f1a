"""Exit-code contract of the command-line tool: 0 ok, 2 validation, 3 numeric."""

import json
import os
import subprocess

import pytest

CLI = os.environ.get("SPARSEVIEW_CLI", "sparseview")


def run(*args):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, timeout=300)


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    r = run("gen-scene", "--out", out, "--seed", 3, "--cameras", 6, "--gaussians", 60, "--width", 32, "--height", 32)
    assert r.returncode == 0, r.stderr
    return out


def test_help_is_success():
    assert run("--help").returncode == 0


def test_unknown_subcommand_and_missing_flag():
    assert run("teleport").returncode == 2
    assert run("render").returncode == 2


def test_select_views_writes_valid_plan(scene):
    r = run("select-views", "--scene", scene, "--inputs", 2, "--targets", 3)
    assert r.returncode == 0, r.stderr
    plan = json.loads(r.stdout)
    assert len(plan["input_indices"]) == 2
    assert len(plan["target_indices"]) == 3
    assert not set(plan["input_indices"]) & set(plan["target_indices"])


def test_render_and_evaluate(scene, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"planes": 8, "inputs": 2, "targets": 3, "sampler_steps": 2, "schedule_length": 50}))
    out = tmp_path / "render"
    r = run("render", "--scene", scene, "--config", cfg, "--out", out, "--check")
    assert r.returncode == 0, r.stderr
    assert len(list(out.glob("frame_*.png"))) == 3
    r = run("evaluate", "--scene", scene, "--config", cfg, "--out", tmp_path / "eval")
    assert r.returncode == 0, r.stderr


def test_missing_scene_is_validation_error(tmp_path):
    r = run("render", "--scene", tmp_path / "absent", "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "missing" in r.stderr.lower()


def test_malformed_config_is_validation_error(scene, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"planes": 8, "unknown_key": 1}')
    r = run("render", "--scene", scene, "--config", cfg, "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "unknown_key" in r.stderr


def test_divergent_fit_is_numeric_failure():
    r = run("fit-demo", "--seed", 1, "--gaussians", 30, "--steps", 50, "--lr", 1e7)
    assert r.returncode == 3, r.stdout + r.stderr


def test_fit_demo_succeeds(tmp_path):
    r = run("fit-demo", "--seed", 1, "--gaussians", 30, "--steps", 20, "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "loss_curve.csv").read_text().startswith("step,loss\n")


def test_diffuse_toy(scene, tmp_path):
    r = run("diffuse-toy", "--scene", scene, "--steps", 3, "--out", tmp_path)
    assert r.returncode == 0, r.stderr
    r = run("diffuse-toy", "--scene", scene, "--denoiser", "no-such-model", "--out", tmp_path)
    assert r.returncode == 2
